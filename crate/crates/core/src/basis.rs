//! Wendland basis functions, the sparse regression matrix and variance
//! normalization of its rows.

use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CoarseGrid, FineGrid, LevelGeometry};

/// Default cap on the memory a single regression matrix may take.
pub const DEFAULT_MEMORY_BUDGET: usize = 4 << 30;

/// C4 Wendland function `(1-d)^6 (35 d^2 + 18 d + 3) / 3`, zero for `d >= 1`.
pub fn wendland(d: f64) -> Result<f64> {
    if !d.is_finite() || d < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "Wendland argument must be finite and non-negative, got {d}"
        )));
    }
    Ok(wendland_unchecked(d))
}

#[inline]
pub(crate) fn wendland_unchecked(d: f64) -> f64 {
    if d >= 1.0 {
        return 0.0;
    }
    let a = 1.0 - d;
    let a2 = a * a;
    let a6 = a2 * a2 * a2;
    a6 * (35.0 * d * d + 18.0 * d + 3.0) / 3.0
}

/// Locations laid out as a square sub-lattice of a fine grid.
pub trait GridLocations {
    /// Points per side.
    fn side(&self) -> usize;
    /// Fine-grid index of the `p`-th point along an axis.
    fn fine_index(&self, p: usize) -> usize;
    /// `n - 1` for the underlying fine grid.
    fn fine_segments(&self) -> usize;

    fn len(&self) -> usize {
        self.side() * self.side()
    }
}

impl GridLocations for FineGrid {
    fn side(&self) -> usize {
        self.n()
    }
    fn fine_index(&self, p: usize) -> usize {
        p
    }
    fn fine_segments(&self) -> usize {
        self.n() - 1
    }
}

impl GridLocations for CoarseGrid {
    fn side(&self) -> usize {
        self.n_tilde()
    }
    fn fine_index(&self, p: usize) -> usize {
        CoarseGrid::fine_index(self, p)
    }
    fn fine_segments(&self) -> usize {
        self.fine().n() - 1
    }
}

/// Nonzero entries of `phi_s` for one location.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BasisVector {
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl BasisVector {
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Dense copy of length `n_basis`.
    pub fn to_dense(&self, n_basis: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_basis];
        for (&c, &v) in self.cols.iter().zip(&self.vals) {
            out[c as usize] = v;
        }
        out
    }
}

/// Evaluate all basis functions at a point given in lattice units
/// (center `(k, l)` sits at `(x, y) = (l, k)`).
pub fn basis_vector_lattice(x: f64, y: f64, geometry: &LevelGeometry) -> BasisVector {
    let mut out = BasisVector::default();
    push_basis_entries(x, y, geometry, &mut out.cols, &mut out.vals);
    out
}

/// Evaluate all basis functions at a physical location `s = [x, y]`.
pub fn basis_vector(s: [f64; 2], geometry: &LevelGeometry) -> Result<BasisVector> {
    if !(s[0].is_finite() && s[1].is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "location must be finite, got {s:?}"
        )));
    }
    let d = geometry.domain();
    let delta = geometry.delta();
    let off = geometry.n_buffer() as f64;
    let x = (s[0] - d.x_min) / delta + off;
    let y = (s[1] - d.y_min) / delta + off;
    Ok(basis_vector_lattice(x, y, geometry))
}

#[inline]
fn push_basis_entries(
    x: f64,
    y: f64,
    geometry: &LevelGeometry,
    cols: &mut Vec<u32>,
    vals: &mut Vec<f64>,
) {
    let rho = geometry.overlap_multiplier();
    let r = geometry.r_total() as i64;
    let inv_rho = 1.0 / rho;
    let k_lo = ((y - rho).ceil() as i64).max(0);
    let k_hi = ((y + rho).floor() as i64).min(r - 1);
    let l_lo = ((x - rho).ceil() as i64).max(0);
    let l_hi = ((x + rho).floor() as i64).min(r - 1);
    for k in k_lo..=k_hi {
        let dy = y - k as f64;
        for l in l_lo..=l_hi {
            let dx = x - l as f64;
            let d = (dx * dx + dy * dy).sqrt() * inv_rho;
            if d < 1.0 {
                cols.push((k * r + l) as u32);
                vals.push(wendland_unchecked(d));
            }
        }
    }
}

/// Row-compressed sparse regression matrix. Rows index locations of a
/// square grid (row `i * side + j` is location `(i, j)`), columns index
/// basis functions.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBasisMatrix {
    side: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseBasisMatrix {
    pub fn from_parts(
        side: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        cols: Vec<u32>,
        vals: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != side * side + 1
            || *row_ptr.last().unwrap_or(&0) != cols.len()
            || cols.len() != vals.len()
        {
            return Err(Error::ShapeMismatch("inconsistent CSR arrays".into()));
        }
        if cols.iter().any(|&c| c as usize >= n_cols) {
            return Err(Error::ShapeMismatch("column index out of range".into()));
        }
        Ok(Self {
            side,
            n_cols,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn row_vector(&self, i: usize) -> BasisVector {
        let (c, v) = self.row(i);
        BasisVector {
            cols: c.to_vec(),
            vals: v.to_vec(),
        }
    }

    pub fn get(&self, i: usize, col: usize) -> f64 {
        let (c, v) = self.row(i);
        c.iter()
            .position(|&x| x as usize == col)
            .map_or(0.0, |p| v[p])
    }

    /// Dense copy; only sensible for small matrices.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows(), self.n_cols));
        for i in 0..self.n_rows() {
            let (c, v) = self.row(i);
            for (&c, &v) in c.iter().zip(v) {
                out[[i, c as usize]] = v;
            }
        }
        out
    }

    /// Write `(row, col, value)` triplets as CSV, for debugging.
    pub fn write_triplets_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "row,col,value")?;
        for i in 0..self.n_rows() {
            let (c, v) = self.row(i);
            for (&c, &v) in c.iter().zip(v) {
                writeln!(w, "{i},{c},{v:e}")?;
            }
        }
        Ok(())
    }
}

/// Assemble the regression matrix for `grid` and `geometry` under the
/// default memory budget.
pub fn regression_matrix<G: GridLocations + Sync>(
    grid: &G,
    geometry: &LevelGeometry,
) -> Result<SparseBasisMatrix> {
    regression_matrix_with_budget(grid, geometry, DEFAULT_MEMORY_BUDGET)
}

pub fn regression_matrix_with_budget<G: GridLocations + Sync>(
    grid: &G,
    geometry: &LevelGeometry,
    budget: usize,
) -> Result<SparseBasisMatrix> {
    let side = grid.side();
    let rows = side * side;
    let rho = geometry.overlap_multiplier();
    // Expected nonzeros per row ~ disk area; 12 bytes per entry.
    let per_row = (std::f64::consts::PI * rho * rho).ceil() as usize + 1;
    let required = rows.saturating_mul(per_row).saturating_mul(12) + rows * 8;
    if required > budget {
        return Err(Error::MemoryBudget { required, budget });
    }

    let segs = grid.fine_segments();
    let coords: Vec<f64> = (0..side)
        .map(|p| geometry.lattice_coord(grid.fine_index(p), segs))
        .collect();

    // One chunk per grid row keeps locality and lets rows assemble in parallel.
    let chunks: Vec<(Vec<u32>, Vec<u32>, Vec<f64>)> = (0..side)
        .into_par_iter()
        .map(|i| {
            let mut lens = Vec::with_capacity(side);
            let mut cols = Vec::with_capacity(side * per_row);
            let mut vals = Vec::with_capacity(side * per_row);
            let y = coords[i];
            for &x in &coords {
                let before = cols.len();
                push_basis_entries(x, y, geometry, &mut cols, &mut vals);
                lens.push((cols.len() - before) as u32);
            }
            (lens, cols, vals)
        })
        .collect();

    let nnz: usize = chunks.iter().map(|c| c.1.len()).sum();
    let mut row_ptr = Vec::with_capacity(rows + 1);
    let mut cols = Vec::with_capacity(nnz);
    let mut vals = Vec::with_capacity(nnz);
    row_ptr.push(0);
    for (lens, c, v) in chunks {
        for l in lens {
            row_ptr.push(row_ptr.last().unwrap() + l as usize);
        }
        cols.extend_from_slice(&c);
        vals.extend_from_slice(&v);
    }
    Ok(SparseBasisMatrix {
        side,
        n_cols: geometry.n_basis(),
        row_ptr,
        cols,
        vals,
    })
}

/// Which computation produced a variance field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceMethod {
    Exact,
    Kronecker,
    Fft,
}

impl std::fmt::Display for VarianceMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VarianceMethod::Exact => "exact",
            VarianceMethod::Kronecker => "kronecker",
            VarianceMethod::Fft => "fft",
        })
    }
}

/// Marginal process variance `phi_s^T Q^{-1} phi_s` on a square grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceField {
    values: Array2<f64>,
    method: VarianceMethod,
    level: usize,
}

impl VarianceField {
    /// Wraps `values`, rejecting any entry that is not strictly positive.
    pub fn new(values: Array2<f64>, method: VarianceMethod, level: usize) -> Result<Self> {
        check_positive(&values, level)?;
        Ok(Self {
            values,
            method,
            level,
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn method(&self) -> VarianceMethod {
        self.method
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn with_level(mut self, level: usize) -> Self {
        self.level = level;
        self
    }

    pub fn side(&self) -> usize {
        self.values.nrows()
    }
}

pub(crate) fn check_positive(values: &Array2<f64>, level: usize) -> Result<()> {
    if let Some(((i, j), &value)) = values
        .indexed_iter()
        .find(|(_, &v)| !(v > 0.0 && v.is_finite()))
    {
        return Err(Error::NonPositiveVariance { level, i, j, value });
    }
    Ok(())
}

/// Scale row `i` of `phi` by `1 / sqrt(var_i)`.
pub fn apply_normalization(
    phi: &SparseBasisMatrix,
    var_field: &VarianceField,
) -> Result<SparseBasisMatrix> {
    let values = var_field.values();
    if values.nrows() != phi.side || values.ncols() != phi.side {
        return Err(Error::ShapeMismatch(format!(
            "variance field is {}x{} but the regression matrix covers a {}x{} grid",
            values.nrows(),
            values.ncols(),
            phi.side,
            phi.side
        )));
    }
    check_positive(values, var_field.level())?;
    let mut out = phi.clone();
    let side = phi.side;
    for i in 0..phi.n_rows() {
        let scale = 1.0 / values[[i / side, i % side]].sqrt();
        let (a, b) = (phi.row_ptr[i], phi.row_ptr[i + 1]);
        for v in &mut out.vals[a..b] {
            *v *= scale;
        }
    }
    Ok(out)
}

/// Scale every entry of `phi` by the same factor.
pub fn scale_matrix(phi: &SparseBasisMatrix, factor: f64) -> SparseBasisMatrix {
    let mut out = phi.clone();
    out.vals.iter_mut().for_each(|v| *v *= factor);
    out
}
