//! Simplicial sparse Cholesky for lattice matrices.
//!
//! The factor is computed with an up-looking algorithm under a nested
//! dissection ordering of the `r x r` lattice. Solves are batched: `LANES`
//! right-hand sides are stored interleaved so every factor entry is loaded
//! once per batch. The forward sweep only visits the elimination-tree reach
//! of the (sparse) right-hand sides; the backward sweep is dense.

const NONE: usize = usize::MAX;

/// Right-hand sides handled together by one batched solve.
pub const LANES: usize = 16;

/// Nested dissection ordering of an `r x r` lattice with node id `k r + l`.
/// Returns `perm` with `perm[new] = old`.
pub fn nested_dissection(r: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(r * r);
    dissect(0, r, 0, r, r, &mut out);
    debug_assert_eq!(out.len(), r * r);
    out
}

fn dissect(x0: usize, x1: usize, y0: usize, y1: usize, r: usize, out: &mut Vec<usize>) {
    let (w, h) = (x1.saturating_sub(x0), y1.saturating_sub(y0));
    if w == 0 || h == 0 {
        return;
    }
    if w * h <= 16 {
        for k in y0..y1 {
            for l in x0..x1 {
                out.push(k * r + l);
            }
        }
        return;
    }
    if w >= h {
        let m = x0 + w / 2;
        dissect(x0, m, y0, y1, r, out);
        dissect(m + 1, x1, y0, y1, r, out);
        for k in y0..y1 {
            out.push(k * r + m);
        }
    } else {
        let m = y0 + h / 2;
        dissect(x0, x1, y0, m, r, out);
        dissect(x0, x1, m + 1, y1, r, out);
        for l in x0..x1 {
            out.push(m * r + l);
        }
    }
}

/// Lower-triangular factor `L` with `P A P^T = L L^T`, stored by columns with
/// the diagonal first in each column.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    parent: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    vals: Vec<f64>,
}

/// Pivot at which the factorization found a non-positive diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotPositiveDefinite(pub usize);

impl SparseCholesky {
    /// Factor the symmetric matrix given in compressed form (both triangles
    /// stored; rows and columns coincide) under the ordering `perm`.
    pub fn factor(
        n: usize,
        ptr: &[usize],
        idx: &[usize],
        vals: &[f64],
        perm: Vec<usize>,
    ) -> Result<Self, NotPositiveDefinite> {
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // upper triangle of C = P A P^T, by columns
        let mut c_ptr = vec![0usize; n + 1];
        let mut c_idx = Vec::with_capacity(vals.len());
        let mut c_val = Vec::with_capacity(vals.len());
        for k in 0..n {
            let old = perm[k];
            for p in ptr[old]..ptr[old + 1] {
                let i = iperm[idx[p]];
                if i <= k {
                    c_idx.push(i);
                    c_val.push(vals[p]);
                }
            }
            c_ptr[k + 1] = c_idx.len();
        }

        let parent = etree(n, &c_ptr, &c_idx);

        // column counts from the row patterns
        let mut counts = vec![1usize; n];
        let mut mark = vec![NONE; n];
        let mut stack = vec![0usize; n];
        for k in 0..n {
            let top = ereach(k, &c_ptr, &c_idx, &parent, &mut mark, &mut stack);
            for &j in &stack[top..n] {
                counts[j] += 1;
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            col_ptr[j + 1] = col_ptr[j] + counts[j];
        }
        let nnz = col_ptr[n];
        let mut row_idx = vec![0u32; nnz];
        let mut lvals = vec![0.0f64; nnz];
        let mut next: Vec<usize> = col_ptr[..n].to_vec();
        let mut x = vec![0.0f64; n];
        mark.iter_mut().for_each(|m| *m = NONE);

        for k in 0..n {
            let top = ereach(k, &c_ptr, &c_idx, &parent, &mut mark, &mut stack);
            for p in c_ptr[k]..c_ptr[k + 1] {
                x[c_idx[p]] = c_val[p];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &j in &stack[top..n] {
                let lkj = x[j] / lvals[col_ptr[j]];
                x[j] = 0.0;
                for p in col_ptr[j] + 1..next[j] {
                    x[row_idx[p] as usize] -= lvals[p] * lkj;
                }
                d -= lkj * lkj;
                let p = next[j];
                next[j] += 1;
                row_idx[p] = k as u32;
                lvals[p] = lkj;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(NotPositiveDefinite(k));
            }
            let p = next[k];
            next[k] += 1;
            row_idx[p] = k as u32;
            lvals[p] = d.sqrt();
        }

        Ok(Self {
            n,
            perm,
            iperm,
            parent,
            col_ptr,
            row_idx,
            vals: lvals,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Nonzeros stored in `L`, diagonal included.
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Dense solve `A x = b` (original ordering).
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for j in 0..self.n {
            let start = self.col_ptr[j];
            y[j] /= self.vals[start];
            let yj = y[j];
            for p in start + 1..self.col_ptr[j + 1] {
                y[self.row_idx[p] as usize] -= self.vals[p] * yj;
            }
        }
        for j in (0..self.n).rev() {
            let start = self.col_ptr[j];
            let mut acc = y[j];
            for p in start + 1..self.col_ptr[j + 1] {
                acc -= self.vals[p] * y[self.row_idx[p] as usize];
            }
            y[j] = acc / self.vals[start];
        }
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    pub fn workspace(&self) -> SolveWorkspace {
        SolveWorkspace {
            x: vec![0.0; self.n * LANES],
            mark: vec![0; self.n],
            stamp: 0,
            reach: Vec::new(),
        }
    }

    /// For each sparse right-hand side `b_c` (at most `LANES`), compute
    /// `||A^{-1} b_c||^2` into `out[c]`.
    pub fn solve_norms_sq(
        &self,
        rhs: &[(&[u32], &[f64])],
        ws: &mut SolveWorkspace,
        out: &mut [f64],
    ) {
        assert!(rhs.len() <= LANES && out.len() >= rhs.len());
        let n = self.n;
        ws.stamp = ws.stamp.wrapping_add(1);
        if ws.stamp == 0 {
            ws.mark.iter_mut().for_each(|m| *m = 0);
            ws.stamp = 1;
        }
        let stamp = ws.stamp;
        ws.reach.clear();
        let x = &mut ws.x;
        for (c, &(cols, vals)) in rhs.iter().enumerate() {
            for (&col, &v) in cols.iter().zip(vals) {
                let mut p = self.iperm[col as usize];
                x[p * LANES + c] += v;
                while p != NONE && ws.mark[p] != stamp {
                    ws.mark[p] = stamp;
                    ws.reach.push(p);
                    p = self.parent[p];
                }
            }
        }
        ws.reach.sort_unstable();

        // forward sweep over the reach
        for &j in &ws.reach {
            let start = self.col_ptr[j];
            let inv = 1.0 / self.vals[start];
            let mut xj = [0.0f64; LANES];
            {
                let row = &mut x[j * LANES..(j + 1) * LANES];
                for c in 0..LANES {
                    row[c] *= inv;
                    xj[c] = row[c];
                }
            }
            for p in start + 1..self.col_ptr[j + 1] {
                let i = self.row_idx[p] as usize;
                let l = self.vals[p];
                let row = &mut x[i * LANES..(i + 1) * LANES];
                for c in 0..LANES {
                    row[c] -= l * xj[c];
                }
            }
        }

        // dense backward sweep
        for j in (0..n).rev() {
            let start = self.col_ptr[j];
            let mut acc = [0.0f64; LANES];
            acc.copy_from_slice(&x[j * LANES..(j + 1) * LANES]);
            for p in start + 1..self.col_ptr[j + 1] {
                let i = self.row_idx[p] as usize;
                let l = self.vals[p];
                let row = &x[i * LANES..(i + 1) * LANES];
                for c in 0..LANES {
                    acc[c] -= l * row[c];
                }
            }
            let inv = 1.0 / self.vals[start];
            let row = &mut x[j * LANES..(j + 1) * LANES];
            for c in 0..LANES {
                row[c] = acc[c] * inv;
            }
        }

        let mut sums = [0.0f64; LANES];
        for row in x.chunks_exact_mut(LANES) {
            for c in 0..LANES {
                sums[c] += row[c] * row[c];
                row[c] = 0.0;
            }
        }
        out[..rhs.len()].copy_from_slice(&sums[..rhs.len()]);
    }
}

/// Per-thread scratch space for batched solves.
#[derive(Debug, Clone)]
pub struct SolveWorkspace {
    x: Vec<f64>,
    mark: Vec<u32>,
    stamp: u32,
    reach: Vec<usize>,
}

/// Elimination tree of a matrix given by its upper triangle (by columns).
fn etree(n: usize, ptr: &[usize], idx: &[usize]) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for p in ptr[k]..ptr[k + 1] {
            let mut i = idx[p];
            while i != NONE && i < k {
                let inext = ancestor[i];
                ancestor[i] = k;
                if inext == NONE {
                    parent[i] = k;
                }
                i = inext;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L`, written to `stack[top..n]` in
/// topological order. Returns `top`.
fn ereach(
    k: usize,
    ptr: &[usize],
    idx: &[usize],
    parent: &[usize],
    mark: &mut [usize],
    stack: &mut [usize],
) -> usize {
    let n = mark.len();
    let mut top = n;
    mark[k] = k;
    for p in ptr[k]..ptr[k + 1] {
        let mut i = idx[p];
        if i > k {
            continue;
        }
        let mut len = 0;
        while mark[i] != k {
            stack[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        while len > 0 {
            len -= 1;
            top -= 1;
            stack[top] = stack[len];
        }
    }
    top
}
