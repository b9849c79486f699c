use anyhow::{anyhow, Context, Result};
use std::time::Instant;

use gridnorm::basis::regression_matrix;
use gridnorm::grid::{make_level_geometry, Domain, FineGrid, LevelGeometry, DEFAULT_OVERLAP};
use gridnorm::kron::{build_tridiagonal, eigendecompose, variance_kronecker_dense};
use gridnorm::model::{level_variance, LevelMethod, NormalizeMethod};

use crate::config::{BenchConfig, RunConfig};
use crate::output::Sink;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: NormalizeMethod,
    pub r: usize,
    pub n: usize,
    pub rep: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub method: NormalizeMethod,
    pub r: usize,
    pub n: usize,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub method: NormalizeMethod,
    pub r: usize,
    pub n: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub failures: Vec<CellFailure>,
}

impl BenchReport {
    pub fn summary(&self) -> Vec<BenchSummary> {
        let mut out: Vec<BenchSummary> = Vec::new();
        for row in &self.rows {
            if out
                .iter()
                .any(|s| (s.method, s.r, s.n) == (row.method, row.r, row.n))
            {
                continue;
            }
            let times: Vec<f64> = self
                .rows
                .iter()
                .filter(|x| (x.method, x.r, x.n) == (row.method, row.r, row.n))
                .map(|x| x.seconds)
                .collect();
            out.push(BenchSummary {
                method: row.method,
                r: row.r,
                n: row.n,
                median: median(&times),
                min: times.iter().copied().fold(f64::INFINITY, f64::min),
                max: times.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
        }
        out
    }

    pub fn median_of(&self, method: NormalizeMethod, r: usize, n: usize) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|s| (s.method, s.r, s.n) == (method, r, n))
            .map(|s| s.median)
    }
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len() / 2;
    if s.len() % 2 == 1 {
        s[k]
    } else {
        0.5 * (s[k - 1] + s[k])
    }
}

pub fn level_method(method: NormalizeMethod) -> Result<LevelMethod> {
    Ok(match method {
        NormalizeMethod::None => LevelMethod::None,
        NormalizeMethod::Exact => LevelMethod::Exact,
        NormalizeMethod::ExactKronecker => LevelMethod::Kronecker,
        NormalizeMethod::Fft => LevelMethod::Fft,
        NormalizeMethod::Both => {
            return Err(anyhow!(
                "`both` picks a method per level and cannot be timed alone"
            ))
        }
    })
}

fn cell(cfg: &RunConfig, r: usize, n: usize) -> Result<(LevelGeometry, FineGrid, f64)> {
    let domain = cfg.domain()?;
    let geo = make_level_geometry(domain, r, cfg.n_buffer, cfg.grid.overlap)?;
    let fine = FineGrid::new(domain, n)?;
    let kappa2 = cfg.kappa2()?[0];
    Ok((geo, fine, kappa2))
}

/// Time one full-grid normalization.
pub fn time_once(cfg: &RunConfig, method: NormalizeMethod, r: usize, n: usize) -> Result<f64> {
    let (geo, fine, kappa2) = cell(cfg, r, n)?;
    let lm = level_method(method)?;
    let start = Instant::now();
    level_variance(
        &geo,
        kappa2,
        &fine,
        lm,
        cfg.grid.n_tilde_rule,
        cfg.grid.coarse_mode,
    )?;
    Ok(start.elapsed().as_secs_f64())
}

/// Run every (method, r, n) cell `repetitions` times, serially. A failing
/// cell is recorded and skipped; `on_row` sees each timing as it arrives.
pub fn run_bench(
    cfg: &RunConfig,
    bench: &BenchConfig,
    mut on_row: impl FnMut(&BenchRow) -> Result<()>,
) -> Result<BenchReport> {
    let mut report = BenchReport::default();
    for &method in &bench.methods {
        for &r in &bench.r {
            for &n in &bench.n {
                for rep in 0..bench.repetitions {
                    match time_once(cfg, method, r, n) {
                        Ok(seconds) => {
                            let row = BenchRow {
                                method,
                                r,
                                n,
                                rep,
                                seconds,
                            };
                            on_row(&row)?;
                            report.rows.push(row);
                        }
                        Err(e) => {
                            report.failures.push(CellFailure {
                                method,
                                r,
                                n,
                                message: format!("{e:#}"),
                            });
                            break;
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Per-location cost of the dense Kronecker path at `r_total` and at
/// `2 r_total`, as the ratio of the two. Cubic growth gives about 8.
pub fn kronecker_cost_ratio(r_total: usize, kappa2: f64, side: usize) -> Result<f64> {
    let per_location = |r: usize| -> Result<f64> {
        let domain = Domain::square(0.0, 1.0)?;
        let geo = make_level_geometry(domain, r, 0, DEFAULT_OVERLAP)?;
        let fine = FineGrid::new(domain, side)?;
        let phi = regression_matrix(&fine, &geo)?;
        let eig = eigendecompose(&build_tridiagonal(r, kappa2)?)?;
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let start = Instant::now();
            variance_kronecker_dense(&phi, &eig)?;
            best = best.min(start.elapsed().as_secs_f64());
        }
        Ok(best / phi.n_rows() as f64)
    };
    Ok(per_location(2 * r_total)? / per_location(r_total)?)
}

/// Write `bench.csv` row by row, then `bench_summary.csv`. Fails at the end
/// if any cell failed.
pub fn cmd_bench(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let bench = cfg
        .bench
        .clone()
        .context("the bench command needs a `bench` section in the configuration")?;
    let mut t = sink.table("bench.csv")?;
    t.row(["method", "r", "n", "rep", "seconds"])?;
    let report = run_bench(cfg, &bench, |row| {
        println!(
            "{} r={} n={} rep={} {:.4}s",
            row.method, row.r, row.n, row.rep, row.seconds
        );
        t.row([
            row.method.to_string(),
            row.r.to_string(),
            row.n.to_string(),
            row.rep.to_string(),
            format!("{:.6}", row.seconds),
        ])
    })?;
    let mut s = sink.table("bench_summary.csv")?;
    s.row(["method", "r", "n", "median", "min", "max"])?;
    for c in report.summary() {
        s.row([
            c.method.to_string(),
            c.r.to_string(),
            c.n.to_string(),
            format!("{:.6}", c.median),
            format!("{:.6}", c.min),
            format!("{:.6}", c.max),
        ])?;
    }
    if !report.failures.is_empty() {
        let mut f = sink.table("bench_failures.csv")?;
        f.row(["method", "r", "n", "error"])?;
        for e in &report.failures {
            eprintln!("{} r={} n={}: {}", e.method, e.r, e.n, e.message);
            f.row([
                e.method.to_string(),
                e.r.to_string(),
                e.n.to_string(),
                format!("\"{}\"", e.message.replace('"', "'")),
            ])?;
        }
        anyhow::bail!("{} benchmark cell(s) failed", report.failures.len());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn both_cannot_be_timed() {
        assert!(level_method(NormalizeMethod::Both).is_err());
        assert_eq!(
            level_method(NormalizeMethod::ExactKronecker).unwrap(),
            LevelMethod::Kronecker
        );
    }
}
