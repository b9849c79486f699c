use anyhow::Result;
use std::time::Instant;

use gridnorm::basis::VarianceField;
use gridnorm::model::{level_variance, select_methods, LevelMethod, NormalizeMethod};

use crate::config::RunConfig;
use crate::output::Sink;

/// One level's variance field under one method.
#[derive(Debug, Clone)]
pub struct NormalizeRecord {
    pub method: NormalizeMethod,
    pub level: usize,
    pub level_method: LevelMethod,
    pub n: usize,
    pub r_interior: usize,
    pub r_total: usize,
    pub seconds: f64,
    pub field: VarianceField,
}

/// Variance fields of every level with `method`.
pub fn normalize_levels(cfg: &RunConfig, method: NormalizeMethod) -> Result<Vec<NormalizeRecord>> {
    let fine = cfg.fine_grid()?;
    let spec = cfg.model_spec(method)?;
    let methods = select_methods(&spec, &fine);
    let mut out = Vec::new();
    for (l, geo) in spec.levels().iter().enumerate() {
        let start = Instant::now();
        let norm = level_variance(
            geo,
            spec.kappa2()[l],
            &fine,
            methods[l],
            spec.n_tilde_rule(),
            spec.coarse_mode(),
        )?;
        out.push(NormalizeRecord {
            method,
            level: l,
            level_method: methods[l],
            n: fine.n(),
            r_interior: geo.r_interior(),
            r_total: geo.r_total(),
            seconds: start.elapsed().as_secs_f64(),
            field: norm.field.with_level(l),
        });
    }
    Ok(out)
}

/// Write `variance_<method>_level<l>.csv` for every requested method and a
/// `normalize.csv` summary. Failing methods are reported and skipped.
pub fn cmd_normalize(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let mut summary = sink.table("normalize.csv")?;
    summary.row([
        "method",
        "level",
        "level_method",
        "n",
        "r",
        "r_total",
        "seconds",
    ])?;
    let mut failures = Vec::new();
    for method in cfg.methods() {
        match normalize_levels(cfg, method) {
            Ok(records) => {
                for rec in records {
                    sink.matrix(
                        &format!("variance_{method}_level{}", rec.level),
                        rec.field.values(),
                    )?;
                    println!(
                        "{method} level {} ({}): n={} r={} {:.3}s",
                        rec.level, rec.level_method, rec.n, rec.r_interior, rec.seconds
                    );
                    summary.row([
                        method.to_string(),
                        rec.level.to_string(),
                        rec.level_method.to_string(),
                        rec.n.to_string(),
                        rec.r_interior.to_string(),
                        rec.r_total.to_string(),
                        format!("{:.6}", rec.seconds),
                    ])?;
                }
            }
            Err(e) => {
                eprintln!("{method}: {e:#}");
                failures.push(method);
            }
        }
    }
    anyhow::ensure!(failures.is_empty(), "normalization failed for {failures:?}");
    Ok(())
}
