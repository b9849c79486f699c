use anyhow::{Context, Result};
use ndarray::Array2;
use std::time::Instant;

use gridnorm::model::{
    fit, metrics, predict, sample_blocks, sample_mar, simulate_matern, Dataset, LevelMethod,
    Metrics, NormalizeMethod, Simulation,
};

use crate::config::{RunConfig, SamplingConfig};
use crate::output::Sink;

#[derive(Debug, Clone)]
pub struct PipelineRow {
    pub method: NormalizeMethod,
    pub level_methods: Vec<LevelMethod>,
    pub metrics: Metrics,
    pub seconds: f64,
    pub surface: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub simulation: Simulation,
    pub data: Dataset,
    pub rows: Vec<PipelineRow>,
}

impl PipelineReport {
    pub fn row(&self, method: NormalizeMethod) -> Option<&PipelineRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Surface used as the exact reference: `exact` if present, else
    /// `exactKronecker`.
    pub fn reference(&self) -> Option<&PipelineRow> {
        self.row(NormalizeMethod::Exact)
            .or_else(|| self.row(NormalizeMethod::ExactKronecker))
    }

    /// `method - reference` surface.
    pub fn difference(&self, method: NormalizeMethod) -> Option<Array2<f64>> {
        let a = self.row(method)?;
        let b = self.reference()?;
        Some(&a.surface - &b.surface)
    }

    pub fn mean_abs_difference(&self, method: NormalizeMethod) -> Option<f64> {
        let d = self.difference(method)?;
        Some(d.iter().map(|v| v.abs()).sum::<f64>() / d.len() as f64)
    }
}

/// Simulate and sample the configured dataset.
pub fn simulate_dataset(cfg: &RunConfig) -> Result<(Simulation, Dataset)> {
    let fine = cfg.fine_grid()?;
    let params = cfg
        .simulation
        .as_ref()
        .context("the pipeline needs a `simulation` section")?
        .params()?;
    let sim = simulate_matern(&fine, &params, cfg.seed)?;
    let data = match cfg
        .sampling
        .as_ref()
        .context("the pipeline needs a `sampling` section")?
    {
        SamplingConfig::Mar(m) => sample_mar(&sim.observed, m.fraction, cfg.seed.wrapping_add(1))?,
        SamplingConfig::Blocks(b) => sample_blocks(&sim.observed, b)?,
    };
    Ok((sim, data))
}

/// Fit, predict and score one method. Metrics compare the prediction with
/// the held-out observations.
pub fn run_method(cfg: &RunConfig, data: &Dataset, method: NormalizeMethod) -> Result<PipelineRow> {
    let fine = cfg.fine_grid()?;
    let spec = cfg.model_spec(method)?;
    let start = Instant::now();
    let model = fit(data, &spec, &fine)?;
    let surface = predict(&model, &fine)?;
    let seconds = start.elapsed().as_secs_f64();
    let metrics = metrics(&surface, data.values(), data.held_out())?;
    Ok(PipelineRow {
        method,
        level_methods: model.methods(),
        metrics,
        seconds,
        surface,
    })
}

/// Simulate, sample, then fit and predict with every requested method.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineReport> {
    let (simulation, data) = simulate_dataset(cfg)?;
    let rows = cfg
        .methods()
        .into_iter()
        .map(|m| run_method(cfg, &data, m).with_context(|| format!("method {m}")))
        .collect::<Result<_>>()?;
    Ok(PipelineReport {
        simulation,
        data,
        rows,
    })
}

/// Write the data, the prediction surfaces, `pipeline.csv` and the two
/// difference maps against the exact surface.
pub fn cmd_pipeline(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let (simulation, data) = simulate_dataset(cfg)?;
    sink.matrix("truth", &simulation.truth)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(sink.path("dataset.csv"))?);
    data.write_csv(&mut w)?;
    drop(w);

    let mut t = sink.table("pipeline.csv")?;
    t.row([
        "method",
        "level_methods",
        "mae",
        "rmspe",
        "seconds",
        "minutes",
    ])?;
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for method in cfg.methods() {
        match run_method(cfg, &data, method) {
            Ok(row) => {
                let lm: Vec<String> = row.level_methods.iter().map(|m| m.to_string()).collect();
                println!(
                    "{:<15} MAE {:.4}  RMSPE {:.4}  {:.2} min",
                    method.to_string(),
                    row.metrics.mae,
                    row.metrics.rmspe,
                    row.seconds / 60.0
                );
                t.row([
                    method.to_string(),
                    lm.join(";"),
                    format!("{:.6}", row.metrics.mae),
                    format!("{:.6}", row.metrics.rmspe),
                    format!("{:.3}", row.seconds),
                    format!("{:.4}", row.seconds / 60.0),
                ])?;
                sink.matrix(&format!("prediction_{method}"), &row.surface)?;
                rows.push(row);
            }
            Err(e) => {
                eprintln!("{method}: {e:#}");
                failed.push(method);
            }
        }
    }
    let report = PipelineReport {
        simulation,
        data,
        rows,
    };
    if report.reference().is_some() {
        let mut a = sink.table("artifacts.csv")?;
        a.row(["difference", "mean_abs"])?;
        for (method, stem) in [
            (NormalizeMethod::None, "diff_none_exact"),
            (NormalizeMethod::Both, "diff_both_exact"),
        ] {
            if let Some(d) = report.difference(method) {
                sink.matrix(stem, &d)?;
                let m = report.mean_abs_difference(method).unwrap_or(f64::NAN);
                a.row([stem.to_string(), format!("{m:e}")])?;
            }
        }
    }
    anyhow::ensure!(failed.is_empty(), "pipeline failed for {failed:?}");
    Ok(())
}
