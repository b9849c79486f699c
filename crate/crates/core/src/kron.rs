//! Exact variance through the Kronecker-sum structure `B = A (x) I + I (x) A`.
//!
//! With `A = U D U^T`, the variance at `s` is
//! `sum_ij (W_ij / (d_i + d_j))^2` where `W = U^T Phi_s U` and `Phi_s` is
//! `phi_s` reshaped to the `r x r` center lattice (rows index y).

use nalgebra::DMatrix;
use ndarray::Array2;
use rayon::prelude::*;

use crate::basis::{BasisVector, SparseBasisMatrix, VarianceField, VarianceMethod};
use crate::error::{Error, Result};

/// Tridiagonal `A` with constant diagonal `2 + kappa^2 / 2` and `-1`
/// off the diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TridiagonalOperator {
    r_total: usize,
    kappa2: f64,
}

impl TridiagonalOperator {
    pub fn r_total(&self) -> usize {
        self.r_total
    }

    pub fn kappa2(&self) -> f64 {
        self.kappa2
    }

    pub fn diagonal(&self) -> f64 {
        2.0 + self.kappa2 / 2.0
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let r = self.r_total;
        Array2::from_shape_fn((r, r), |(i, j)| {
            if i == j {
                self.diagonal()
            } else if i.abs_diff(j) == 1 {
                -1.0
            } else {
                0.0
            }
        })
    }

    /// Dense `A (x) I + I (x) A`; for tests and small problems.
    pub fn kronecker_sum(&self) -> Array2<f64> {
        let a = self.to_dense();
        let r = self.r_total;
        let mut out = Array2::zeros((r * r, r * r));
        for i in 0..r {
            for j in 0..r {
                for k in 0..r {
                    out[[i * r + k, j * r + k]] += a[[i, j]];
                    out[[k * r + i, k * r + j]] += a[[i, j]];
                }
            }
        }
        out
    }
}

pub fn build_tridiagonal(r_total: usize, kappa2: f64) -> Result<TridiagonalOperator> {
    if r_total == 0 {
        return Err(Error::InvalidArgument("r_total must be at least 1".into()));
    }
    if !(kappa2.is_finite() && kappa2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "kappa2 must be positive, got {kappa2}"
        )));
    }
    Ok(TridiagonalOperator { r_total, kappa2 })
}

/// Eigen-decomposition of `A` plus the reciprocal table `1 / (d_i + d_j)`.
#[derive(Debug, Clone)]
pub struct KroneckerEig {
    r: usize,
    /// `u[i * r + b]` is component `i` of eigenvector `b`.
    u: Vec<f64>,
    eigenvalues: Vec<f64>,
    inv_sum: Vec<f64>,
}

impl KroneckerEig {
    pub fn r_total(&self) -> usize {
        self.r
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Variance at one location.
    pub fn variance_at(&self, phi_s: &BasisVector) -> f64 {
        variance_row(
            &phi_s.cols,
            &phi_s.vals,
            self,
            &mut KronWorkspace::new(self.r),
        )
    }

    /// Eigenvectors as columns.
    pub fn eigenvectors(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.r, self.r), self.u.clone()).expect("square")
    }
}

/// Symmetric eigen-decomposition of `A`, eigenvalues ascending; each
/// eigenvector is signed so its largest-magnitude entry is positive.
pub fn eigendecompose(a: &TridiagonalOperator) -> Result<KroneckerEig> {
    let r = a.r_total;
    let dense = a.to_dense();
    let m = DMatrix::from_fn(r, r, |i, j| dense[[i, j]]);
    let eig = nalgebra::SymmetricEigen::try_new(m, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Eigen(format!("no convergence for r_total = {r}")))?;

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let eigenvalues: Vec<f64> = order.iter().map(|&b| eig.eigenvalues[b]).collect();
    let mut u = vec![0.0; r * r];
    for (b_new, &b) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(b);
        let pivot =
            col.iter().copied().fold(
                0.0f64,
                |acc, v| if v.abs() > acc.abs() + 1e-12 { v } else { acc },
            );
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..r {
            u[i * r + b_new] = sign * col[i];
        }
    }

    if eigenvalues.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Eigen("non-positive eigenvalue of A".into()));
    }

    // reject silently degraded decompositions
    let scale = a.diagonal() * r as f64;
    for i in 0..r {
        for j in 0..r {
            let mut orth = 0.0;
            let mut rec = 0.0;
            for b in 0..r {
                orth += u[b * r + i] * u[b * r + j];
                rec += u[i * r + b] * eigenvalues[b] * u[j * r + b];
            }
            let id = if i == j { 1.0 } else { 0.0 };
            if (orth - id).abs() > 1e-12 * r as f64 || (rec - dense[[i, j]]).abs() > 1e-12 * scale {
                return Err(Error::Eigen(format!(
                    "decomposition check failed at ({i}, {j}) for r_total = {r}"
                )));
            }
        }
    }

    let mut inv_sum = vec![0.0; r * r];
    for i in 0..r {
        for j in 0..r {
            inv_sum[i * r + j] = 1.0 / (eigenvalues[i] + eigenvalues[j]);
        }
    }
    Ok(KroneckerEig {
        r,
        u,
        eigenvalues,
        inv_sum,
    })
}

/// Scratch buffers for one thread.
struct KronWorkspace {
    block: Vec<f64>,
    t: Vec<f64>,
    w_row: Vec<f64>,
}

impl KronWorkspace {
    fn new(r: usize) -> Self {
        Self {
            block: Vec::new(),
            t: Vec::new(),
            w_row: vec![0.0; r],
        }
    }
}

/// Variance for one sparse `phi_s`.
///
/// `Phi_s` is nonzero only on a small `ky x kx` block, so `U^T Phi_s` is
/// `r x kx` and the second product costs `r^2 kx` instead of `r^3`.
fn variance_row(cols: &[u32], vals: &[f64], eig: &KroneckerEig, ws: &mut KronWorkspace) -> f64 {
    if cols.is_empty() {
        return 0.0;
    }
    let r = eig.r;
    let (mut y0, mut y1, mut x0, mut x1) = (usize::MAX, 0, usize::MAX, 0);
    for &c in cols {
        let (k, l) = (c as usize / r, c as usize % r);
        y0 = y0.min(k);
        y1 = y1.max(k);
        x0 = x0.min(l);
        x1 = x1.max(l);
    }
    let (ky, kx) = (y1 - y0 + 1, x1 - x0 + 1);
    ws.block.clear();
    ws.block.resize(ky * kx, 0.0);
    for (&c, &v) in cols.iter().zip(vals) {
        let (k, l) = (c as usize / r, c as usize % r);
        ws.block[(k - y0) * kx + (l - x0)] = v;
    }

    // T = U[y0..=y1, :]^T * block, stored as r rows of kx
    ws.t.clear();
    ws.t.resize(r * kx, 0.0);
    for a in 0..ky {
        let urow = &eig.u[(y0 + a) * r..(y0 + a + 1) * r];
        let brow = &ws.block[a * kx..(a + 1) * kx];
        for (i, &uia) in urow.iter().enumerate() {
            if uia == 0.0 {
                continue;
            }
            let trow = &mut ws.t[i * kx..(i + 1) * kx];
            for (t, &b) in trow.iter_mut().zip(brow) {
                *t += uia * b;
            }
        }
    }

    // row i of W = T[i, :] * U[x0..=x1, :]; accumulate (W_ij / (d_i + d_j))^2
    let mut total = 0.0;
    for i in 0..r {
        let w = &mut ws.w_row;
        w.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..kx {
            let tic = ws.t[i * kx + c];
            let urow = &eig.u[(x0 + c) * r..(x0 + c + 1) * r];
            for (wv, &uv) in w.iter_mut().zip(urow) {
                *wv += tic * uv;
            }
        }
        let inv = &eig.inv_sum[i * r..(i + 1) * r];
        let mut s = 0.0;
        for (&wv, &iv) in w.iter().zip(inv) {
            let z = wv * iv;
            s += z * z;
        }
        total += s;
    }
    total
}

fn check_shape(phi: &SparseBasisMatrix, eig: &KroneckerEig) -> Result<()> {
    if phi.n_cols() != eig.r * eig.r {
        return Err(Error::ShapeMismatch(format!(
            "regression matrix has {} columns, expected r_total^2 = {}",
            phi.n_cols(),
            eig.r * eig.r
        )));
    }
    Ok(())
}

/// Exact variance at every row of `phi` via the Kronecker-sum eigensystem.
pub fn variance_kronecker(phi: &SparseBasisMatrix, eig: &KroneckerEig) -> Result<VarianceField> {
    let values = variance_kronecker_values(phi, eig)?;
    VarianceField::new(values, VarianceMethod::Kronecker, 0)
}

/// Same as [`variance_kronecker`] without the positivity check; rows outside
/// every basis support give zero.
pub fn variance_kronecker_values(
    phi: &SparseBasisMatrix,
    eig: &KroneckerEig,
) -> Result<Array2<f64>> {
    check_shape(phi, eig)?;
    let mut out = vec![0.0; phi.n_rows()];
    out.par_iter_mut()
        .with_min_len(256)
        .enumerate()
        .for_each_init(
            || KronWorkspace::new(eig.r),
            |ws, (i, dst)| {
                let (c, v) = phi.row(i);
                *dst = variance_row(c, v, eig, ws);
            },
        );
    let side = phi.side();
    Array2::from_shape_vec((side, side), out).map_err(|e| Error::ShapeMismatch(e.to_string()))
}

/// Same quantity with two full `r x r` products per location, `4 r^3`
/// flops each. Kept as a reference path and for cost-scaling checks.
pub fn variance_kronecker_dense(
    phi: &SparseBasisMatrix,
    eig: &KroneckerEig,
) -> Result<VarianceField> {
    check_shape(phi, eig)?;
    let r = eig.r;
    let u = DMatrix::from_fn(r, r, |i, b| eig.u[i * r + b]);
    let ut = u.transpose();
    let mut out = vec![0.0; phi.n_rows()];
    out.par_iter_mut().enumerate().for_each(|(i, dst)| {
        let (cols, vals) = phi.row(i);
        let mut m = DMatrix::<f64>::zeros(r, r);
        for (&c, &v) in cols.iter().zip(vals) {
            m[(c as usize / r, c as usize % r)] = v;
        }
        let w = &ut * m * &u;
        let mut s = 0.0;
        for a in 0..r {
            for b in 0..r {
                let z = w[(a, b)] * eig.inv_sum[a * r + b];
                s += z * z;
            }
        }
        *dst = s;
    });
    let side = phi.side();
    let values = Array2::from_shape_vec((side, side), out)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    VarianceField::new(values, VarianceMethod::Kronecker, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::regression_matrix;
    use crate::grid::{make_level_geometry, Domain, FineGrid};
    use crate::sar::{variance_exact, SarSystem};
    use approx::assert_relative_eq;

    #[test]
    fn small_operators() {
        let a = build_tridiagonal(2, 1.0).unwrap();
        assert_eq!(a.to_dense(), ndarray::array![[2.5, -1.0], [-1.0, 2.5]]);
        let a1 = build_tridiagonal(1, 1.0).unwrap();
        assert_eq!(a1.kronecker_sum(), ndarray::array![[5.0]]);
        assert!(build_tridiagonal(0, 1.0).is_err());
        assert!(build_tridiagonal(3, 0.0).is_err());
    }

    #[test]
    fn kronecker_sum_equals_sar_matrix() {
        for (r, k2) in [(3, 0.05), (4, 0.05), (6, 0.7)] {
            let a = build_tridiagonal(r, k2).unwrap();
            let b = SarSystem::new(r, k2).unwrap().matrix().to_dense();
            assert_eq!(a.kronecker_sum(), b);
        }
    }

    #[test]
    fn two_by_two_eigenvalues() {
        let e = eigendecompose(&build_tridiagonal(2, 1.0).unwrap()).unwrap();
        assert_relative_eq!(e.eigenvalues()[0], 1.5, max_relative = 1e-14);
        assert_relative_eq!(e.eigenvalues()[1], 3.5, max_relative = 1e-14);
    }

    #[test]
    fn closed_form_spectrum() {
        for r in 1..=12 {
            let k2 = 0.05;
            let e = eigendecompose(&build_tridiagonal(r, k2).unwrap()).unwrap();
            for (j, &d) in e.eigenvalues().iter().enumerate() {
                let theta = (j + 1) as f64 * std::f64::consts::PI / (r + 1) as f64;
                let want = 2.0 + k2 / 2.0 - 2.0 * theta.cos();
                assert_relative_eq!(d, want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sign_convention() {
        let e = eigendecompose(&build_tridiagonal(7, 0.3).unwrap()).unwrap();
        let u = e.eigenvectors();
        for b in 0..7 {
            let col = u.column(b);
            let max = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let first_max = col.iter().find(|v| (v.abs() - max).abs() < 1e-12).unwrap();
            assert!(*first_max > 0.0);
        }
    }

    #[test]
    fn worked_value_identity_block() {
        let e = eigendecompose(&build_tridiagonal(2, 1.0).unwrap()).unwrap();
        let mut ws = KronWorkspace::new(2);
        let v = variance_row(&[0, 3], &[1.0, 1.0], &e, &mut ws);
        assert_relative_eq!(v, 58.0 / 441.0, max_relative = 1e-14);
        let e1 = eigendecompose(&build_tridiagonal(1, 1.0).unwrap()).unwrap();
        let v1 = variance_row(&[0], &[1.0], &e1, &mut KronWorkspace::new(1));
        assert_relative_eq!(v1, 0.04, max_relative = 1e-15);
    }

    #[test]
    fn kronecker_vec_identity() {
        // (U^T (x) U^T) vec(Phi) == vec(U^T Phi U) with row-major vec
        let r = 5;
        let e = eigendecompose(&build_tridiagonal(r, 0.4).unwrap()).unwrap();
        let u = e.eigenvectors();
        let ut = u.t().to_owned();
        let phi = Array2::from_shape_fn((r, r), |(i, j)| ((i * 3 + j * 5) % 7) as f64 / 7.0);
        let mut big = Array2::zeros((r * r, r * r));
        for a in 0..r {
            for b in 0..r {
                for c in 0..r {
                    for d in 0..r {
                        big[[a * r + b, c * r + d]] = ut[[a, c]] * ut[[b, d]];
                    }
                }
            }
        }
        let vec_phi = ndarray::Array1::from_iter(phi.iter().copied());
        let lhs = big.dot(&vec_phi);
        let w = ut.dot(&phi).dot(&u);
        for (x, y) in lhs.iter().zip(w.iter()) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn sparse_dense_and_exact_agree() {
        let d = Domain::square(0.0, 1.0).unwrap();
        let geo = make_level_geometry(d, 6, 2, 2.5).unwrap();
        let fine = FineGrid::new(d, 21).unwrap();
        let phi = regression_matrix(&fine, &geo).unwrap();
        let sys = SarSystem::new(geo.r_total(), 0.05).unwrap();
        let e = eigendecompose(&build_tridiagonal(geo.r_total(), 0.05).unwrap()).unwrap();
        let exact = variance_exact(&phi, &sys).unwrap();
        let kron = variance_kronecker(&phi, &e).unwrap();
        let dense = variance_kronecker_dense(&phi, &e).unwrap();
        assert_eq!(kron.method(), VarianceMethod::Kronecker);
        for ((a, b), c) in exact.values().iter().zip(kron.values()).zip(dense.values()) {
            assert_relative_eq!(a, b, max_relative = 1e-10);
            assert_relative_eq!(a, c, max_relative = 1e-10);
        }
    }

    #[test]
    fn empty_row_is_zero() {
        let e = eigendecompose(&build_tridiagonal(3, 1.0).unwrap()).unwrap();
        let bv = BasisVector::default();
        assert_eq!(
            variance_row(&bv.cols, &bv.vals, &e, &mut KronWorkspace::new(3)),
            0.0
        );
    }
}
