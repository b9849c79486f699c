use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmspe: f64,
}

/// Mean absolute error and root-mean-squared prediction error over the
/// row-major locations in `mask`.
pub fn metrics(pred: &Array2<f64>, truth: &Array2<f64>, mask: &[usize]) -> Result<Metrics> {
    if pred.dim() != truth.dim() {
        return Err(Error::ShapeMismatch(format!(
            "prediction is {:?} but truth is {:?}",
            pred.dim(),
            truth.dim()
        )));
    }
    if mask.is_empty() {
        return Err(Error::InvalidArgument("evaluation mask is empty".into()));
    }
    let side = pred.ncols();
    let mut abs = 0.0;
    let mut sq = 0.0;
    for &k in mask {
        let idx = [k / side, k % side];
        let e = pred
            .get(idx)
            .zip(truth.get(idx))
            .map(|(p, t)| p - t)
            .ok_or_else(|| Error::InvalidArgument(format!("mask index {k} is outside the grid")))?;
        abs += e.abs();
        sq += e * e;
    }
    let m = mask.len() as f64;
    Ok(Metrics {
        mae: abs / m,
        rmspe: (sq / m).sqrt(),
    })
}
