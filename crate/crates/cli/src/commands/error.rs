use anyhow::{ensure, Context, Result};
use ndarray::Array2;

use gridnorm::model::NormalizeMethod;

use super::normalize::normalize_levels;
use crate::config::RunConfig;
use crate::output::Sink;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldError {
    /// Mean of `|approx - reference| / reference`, in percent.
    pub mean_pct: f64,
    /// Maximum of the same, in percent.
    pub max_pct: f64,
}

/// Relative difference field `(approx - reference) / reference` and its
/// summary in percent.
pub fn compare_fields(
    approx: &Array2<f64>,
    reference: &Array2<f64>,
) -> Result<(FieldError, Array2<f64>)> {
    ensure!(
        approx.dim() == reference.dim(),
        "fields cover different grids: {:?} vs {:?}",
        approx.dim(),
        reference.dim()
    );
    ensure!(!approx.is_empty(), "fields are empty");
    let rel = Array2::from_shape_fn(approx.dim(), |ij| {
        (approx[ij] - reference[ij]) / reference[ij]
    });
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for v in rel.iter() {
        sum += v.abs();
        max = max.max(v.abs());
    }
    Ok((
        FieldError {
            mean_pct: 100.0 * sum / rel.len() as f64,
            max_pct: 100.0 * max,
        },
        rel,
    ))
}

#[derive(Debug, Clone)]
pub struct LevelError {
    pub level: usize,
    pub n: usize,
    pub r_interior: usize,
    pub error: FieldError,
    pub relative: Array2<f64>,
}

/// Compare two methods level by level.
pub fn field_errors(
    cfg: &RunConfig,
    approximate: NormalizeMethod,
    reference: NormalizeMethod,
) -> Result<Vec<LevelError>> {
    let a =
        normalize_levels(cfg, approximate).with_context(|| format!("computing {approximate}"))?;
    let b = normalize_levels(cfg, reference).with_context(|| format!("computing {reference}"))?;
    a.iter()
        .zip(&b)
        .map(|(x, y)| {
            let (error, relative) = compare_fields(x.field.values(), y.field.values())?;
            Ok(LevelError {
                level: x.level,
                n: x.n,
                r_interior: x.r_interior,
                error,
                relative,
            })
        })
        .collect()
}

/// Write `error.csv` with mean and max percentage error per level, and the
/// relative difference fields when requested.
pub fn cmd_error(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let ec = cfg
        .error
        .clone()
        .context("the error command needs an `error` section in the configuration")?;
    let rows = field_errors(cfg, ec.approximate, ec.reference)?;
    let mut t = sink.table("error.csv")?;
    t.row([
        "approximate",
        "reference",
        "level",
        "n",
        "r",
        "mean_pct",
        "max_pct",
    ])?;
    for r in &rows {
        t.row([
            ec.approximate.to_string(),
            ec.reference.to_string(),
            r.level.to_string(),
            r.n.to_string(),
            r.r_interior.to_string(),
            format!("{:e}", r.error.mean_pct),
            format!("{:e}", r.error.max_pct),
        ])?;
        println!(
            "{} vs {} level {}: mean {:.4}%  max {:.4}%",
            ec.approximate, ec.reference, r.level, r.error.mean_pct, r.error.max_pct
        );
        if ec.write_field {
            sink.matrix(&format!("relative_error_level{}", r.level), &r.relative)?;
        }
    }
    Ok(())
}
