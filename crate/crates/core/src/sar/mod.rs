//! Spatial autoregression matrix `B = L + kappa^2 I` on the basis-center
//! lattice and the exact marginal variance `||B^{-1} phi_s||^2`.

mod cholesky;

pub use cholesky::{nested_dissection, SolveWorkspace, SparseCholesky, LANES};

use ndarray::Array2;
use once_cell::sync::OnceCell;
use rayon::prelude::*;

use crate::basis::{BasisVector, SparseBasisMatrix, VarianceField, VarianceMethod};
use crate::error::{Error, Result};
use crate::grid::LevelGeometry;

/// Square sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.iter().position(|&x| x == j).map_or(0.0, |p| v[p])
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&c, &v) in c.iter().zip(v) {
                out[[i, c]] = v;
            }
        }
        out
    }

    /// `self * other` for matrices of equal dimension (Gustavson).
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut acc = vec![0.0; n];
        let mut seen = vec![usize::MAX; n];
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut pattern = Vec::new();
        for i in 0..n {
            pattern.clear();
            let (ac, av) = self.row(i);
            for (&k, &a) in ac.iter().zip(av) {
                let (bc, bv) = other.row(k);
                for (&j, &b) in bc.iter().zip(bv) {
                    if seen[j] != i {
                        seen[j] = i;
                        acc[j] = 0.0;
                        pattern.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            pattern.sort_unstable();
            for &j in &pattern {
                cols.push(j);
                vals.push(acc[j]);
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).all(|(&j, &x)| self.get(j, i) == x)
        })
    }
}

/// Five-point-stencil SAR matrix on an `r_total x r_total` lattice.
///
/// Every row has diagonal `4 + kappa^2`; off-diagonals are `-1` at the
/// lattice neighbours that exist, so boundary rows simply lose entries.
#[derive(Debug)]
pub struct SarSystem {
    r_total: usize,
    kappa2: f64,
    b: CsrMatrix,
    factor: OnceCell<SparseCholesky>,
}

impl SarSystem {
    pub fn new(r_total: usize, kappa2: f64) -> Result<Self> {
        if r_total == 0 {
            return Err(Error::InvalidArgument(
                "lattice needs at least one center".into(),
            ));
        }
        if !(kappa2.is_finite() && kappa2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "kappa2 must be positive, got {kappa2}"
            )));
        }
        let r = r_total;
        let n = r * r;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(5 * n);
        let mut vals = Vec::with_capacity(5 * n);
        row_ptr.push(0);
        for k in 0..r {
            for l in 0..r {
                let mut push = |c: usize, v: f64| {
                    cols.push(c);
                    vals.push(v);
                };
                if k > 0 {
                    push((k - 1) * r + l, -1.0);
                }
                if l > 0 {
                    push(k * r + l - 1, -1.0);
                }
                push(k * r + l, 4.0 + kappa2);
                if l + 1 < r {
                    push(k * r + l + 1, -1.0);
                }
                if k + 1 < r {
                    push((k + 1) * r + l, -1.0);
                }
                row_ptr.push(cols.len());
            }
        }
        Ok(Self {
            r_total,
            kappa2,
            b: CsrMatrix {
                n,
                row_ptr,
                cols,
                vals,
            },
            factor: OnceCell::new(),
        })
    }

    pub fn r_total(&self) -> usize {
        self.r_total
    }

    pub fn kappa2(&self) -> f64 {
        self.kappa2
    }

    pub fn dim(&self) -> usize {
        self.b.n
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.b
    }

    /// Precision `Q = B B^T` of the coefficients. Only needed when fitting;
    /// variance computations never form it.
    pub fn precision(&self) -> CsrMatrix {
        self.b.matmul(&self.b)
    }

    /// Cholesky factor of `B`, computed on first use.
    pub fn factor(&self) -> Result<&SparseCholesky> {
        self.factor.get_or_try_init(|| {
            let perm = nested_dissection(self.r_total);
            SparseCholesky::factor(
                self.dim(),
                &self.b.row_ptr,
                &self.b.cols,
                &self.b.vals,
                perm,
            )
            .map_err(|e| Error::Factorization {
                kappa2: self.kappa2,
                r_total: self.r_total,
                pivot: e.0,
            })
        })
    }

    /// `||B^{-1} phi_s||^2` for a single location.
    pub fn variance_at(&self, phi_s: &BasisVector) -> Result<f64> {
        let f = self.factor()?;
        let mut ws = f.workspace();
        let mut out = [0.0; LANES];
        f.solve_norms_sq(&[(&phi_s.cols, &phi_s.vals)], &mut ws, &mut out);
        Ok(out[0])
    }
}

/// Build the SAR system for a level.
pub fn build_sar(geometry: &LevelGeometry, kappa2: f64) -> Result<SarSystem> {
    SarSystem::new(geometry.r_total(), kappa2)
}

/// Exact variance at every row of `phi`: solve `B v = phi_s` with the cached
/// factor and return `||v||^2`.
pub fn variance_exact(phi: &SparseBasisMatrix, sys: &SarSystem) -> Result<VarianceField> {
    let values = variance_exact_values(phi, sys)?;
    VarianceField::new(values, VarianceMethod::Exact, 0)
}

/// Same as [`variance_exact`] without the positivity check.
pub fn variance_exact_values(phi: &SparseBasisMatrix, sys: &SarSystem) -> Result<Array2<f64>> {
    if phi.n_cols() != sys.dim() {
        return Err(Error::ShapeMismatch(format!(
            "regression matrix has {} columns but the SAR system has dimension {}",
            phi.n_cols(),
            sys.dim()
        )));
    }
    let f = sys.factor()?;
    let rows = phi.n_rows();
    let mut out = vec![0.0; rows];
    out.par_chunks_mut(LANES).enumerate().for_each_init(
        || f.workspace(),
        |ws, (chunk, dst)| {
            let first = chunk * LANES;
            let rhs: Vec<(&[u32], &[f64])> =
                (first..first + dst.len()).map(|i| phi.row(i)).collect();
            f.solve_norms_sq(&rhs, ws, dst);
        },
    );
    let side = phi.side();
    Array2::from_shape_vec((side, side), out).map_err(|e| Error::ShapeMismatch(e.to_string()))
}
