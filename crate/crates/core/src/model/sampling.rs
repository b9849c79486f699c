use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observations on a square grid. Indices are row-major `i * side + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Array2<f64>,
    observed: Vec<usize>,
    held_out: Vec<usize>,
}

impl Dataset {
    /// `observed` must be sorted, unique and in range; every other location
    /// is held out.
    pub fn new(values: Array2<f64>, observed: Vec<usize>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c {
            return Err(Error::ShapeMismatch(format!(
                "values must be square, got {r}x{c}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("values must be finite".into()));
        }
        let total = r * c;
        if observed.windows(2).any(|w| w[0] >= w[1]) || observed.last().is_some_and(|&k| k >= total)
        {
            return Err(Error::Sampling(
                "observed indices must be sorted, unique and inside the grid".into(),
            ));
        }
        let mut held_out = Vec::with_capacity(total - observed.len());
        let mut it = observed.iter().peekable();
        for k in 0..total {
            if it.peek() == Some(&&k) {
                it.next();
            } else {
                held_out.push(k);
            }
        }
        Ok(Self {
            values,
            observed,
            held_out,
        })
    }

    pub fn side(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn held_out(&self) -> &[usize] {
        &self.held_out
    }

    pub fn value(&self, k: usize) -> f64 {
        let s = self.side();
        self.values[[k / s, k % s]]
    }

    pub fn observed_values(&self) -> Vec<f64> {
        self.observed.iter().map(|&k| self.value(k)).collect()
    }

    /// Rows `i,j,value,observed` for every location.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,j,value,observed")?;
        let s = self.side();
        let mut it = self.observed.iter().peekable();
        for k in 0..s * s {
            let obs = it.peek() == Some(&&k);
            if obs {
                it.next();
            }
            writeln!(w, "{},{},{},{}", k / s, k % s, self.value(k), obs as u8)?;
        }
        Ok(())
    }
}

/// Number of locations kept when retaining `fraction` of `total`:
/// `ceil(fraction * total)`, ignoring floating-point excess below 1e-9.
pub fn retained_count(fraction: f64, total: usize) -> usize {
    ((fraction * total as f64 - 1e-9).ceil().max(0.0) as usize).min(total)
}

/// Keep a uniformly random subset of `retained_count(fraction, N)` locations.
pub fn sample_mar(values: &Array2<f64>, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Sampling(format!(
            "retained fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let total = values.len();
    let k = retained_count(fraction, total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut observed = rand::seq::index::sample(&mut rng, total, k).into_vec();
    observed.sort_unstable();
    Dataset::new(values.clone(), observed)
}

/// Square hole with top-left corner `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub row: usize,
    pub col: usize,
    pub side: usize,
}

/// Hold out every cell of the given non-overlapping blocks.
pub fn sample_blocks(values: &Array2<f64>, blocks: &[Block]) -> Result<Dataset> {
    let n = values.nrows();
    let mut hole = vec![false; values.len()];
    for (b_idx, b) in blocks.iter().enumerate() {
        if b.side == 0 || b.row + b.side > n || b.col + b.side > n {
            return Err(Error::Sampling(format!(
                "block {b_idx} {b:?} does not fit in the {n}x{n} grid"
            )));
        }
        for i in b.row..b.row + b.side {
            for j in b.col..b.col + b.side {
                if std::mem::replace(&mut hole[i * n + j], true) {
                    return Err(Error::Sampling(format!(
                        "block {b_idx} overlaps an earlier block at ({i}, {j})"
                    )));
                }
            }
        }
    }
    let observed = (0..values.len()).filter(|&k| !hole[k]).collect();
    Dataset::new(values.clone(), observed)
}
