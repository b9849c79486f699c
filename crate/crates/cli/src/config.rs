//! JSON run configuration. Unknown keys are rejected and every value is
//! checked before any computation starts.

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use gridnorm::grid::{
    make_level_geometry, CoarseMode, Domain, FineGrid, LevelGeometry, NTildeRule,
};
use gridnorm::model::{Block, MaternParams, ModelSpec, NormalizeMethod};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// `[lo, hi]` for a square, or `[x_min, x_max, y_min, y_max]`.
    #[serde(default = "default_domain")]
    pub domain: Vec<f64>,
    pub n: usize,
    #[serde(default = "default_overlap")]
    pub overlap: f64,
    #[serde(default)]
    pub coarse_mode: CoarseMode,
    #[serde(default)]
    pub n_tilde_rule: NTildeRule,
}

fn default_domain() -> Vec<f64> {
    vec![0.0, 1.0]
}

fn default_overlap() -> f64 {
    gridnorm::grid::DEFAULT_OVERLAP
}

/// One value shared by all levels or one per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerLevel {
    Shared(f64),
    Each(Vec<f64>),
}

impl PerLevel {
    pub fn expand(&self, levels: usize) -> Result<Vec<f64>> {
        match self {
            PerLevel::Shared(v) => Ok(vec![*v; levels]),
            PerLevel::Each(v) => {
                ensure!(
                    v.len() == levels,
                    "{} values given for {levels} levels",
                    v.len()
                );
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MethodList {
    One(NormalizeMethod),
    Many(Vec<NormalizeMethod>),
}

impl MethodList {
    pub fn to_vec(&self) -> Vec<NormalizeMethod> {
        match self {
            MethodList::One(m) => vec![*m],
            MethodList::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarConfig {
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum SamplingConfig {
    Mar(MarConfig),
    Blocks(Vec<Block>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub range: f64,
    #[serde(default = "one")]
    pub smoothness: f64,
    #[serde(default = "one")]
    pub variance: f64,
    #[serde(default)]
    pub nugget: f64,
}

fn one() -> f64 {
    1.0
}

impl SimulationConfig {
    pub fn params(&self) -> Result<MaternParams> {
        Ok(MaternParams::new(
            self.range,
            self.smoothness,
            self.variance,
            self.nugget,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub methods: Vec<NormalizeMethod>,
    /// Interior center counts.
    pub r: Vec<usize>,
    pub n: Vec<usize>,
    #[serde(default = "five")]
    pub repetitions: usize,
}

fn five() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorConfig {
    pub approximate: NormalizeMethod,
    #[serde(default = "exact")]
    pub reference: NormalizeMethod,
    #[serde(default)]
    pub write_field: bool,
}

fn exact() -> NormalizeMethod {
    NormalizeMethod::Exact
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    /// Interior center count of each level, coarse to fine.
    pub levels: Vec<usize>,
    #[serde(default = "ten")]
    pub n_buffer: usize,
    pub kappa2: PerLevel,
    #[serde(default = "default_tau2")]
    pub tau2: f64,
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    pub normalize_method: MethodList,
    #[serde(default)]
    pub sampling: Option<SamplingConfig>,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub bench: Option<BenchConfig>,
    #[serde(default)]
    pub error: Option<ErrorConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn ten() -> usize {
    10
}

fn default_tau2() -> f64 {
    0.1
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.domain()?;
        self.fine_grid()?;
        ensure!(!self.levels.is_empty(), "at least one level is required");
        ensure!(
            self.grid.overlap.is_finite() && self.grid.overlap > 0.0,
            "overlap must be positive"
        );
        self.geometries()?;
        ensure!(
            !self.methods().is_empty(),
            "normalize_method must not be empty"
        );
        self.model_spec(self.methods()[0])?;
        if let Some(SamplingConfig::Mar(m)) = &self.sampling {
            ensure!(
                m.fraction > 0.0 && m.fraction < 1.0,
                "sampling fraction must lie in (0, 1)"
            );
        }
        if let Some(sim) = &self.simulation {
            sim.params()?;
        }
        if let Some(b) = &self.bench {
            ensure!(b.repetitions >= 1, "bench repetitions must be at least 1");
            ensure!(
                !b.methods.is_empty() && !b.r.is_empty() && !b.n.is_empty(),
                "bench needs methods, r and n"
            );
            if b.methods.contains(&NormalizeMethod::Both) {
                bail!("bench times single methods; `both` is not allowed");
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<Domain> {
        let d = &self.grid.domain;
        let domain = match d.len() {
            2 => Domain::square(d[0], d[1])?,
            4 => Domain::new(d[0], d[1], d[2], d[3])?,
            k => bail!("domain needs 2 or 4 numbers, got {k}"),
        };
        Ok(domain)
    }

    pub fn fine_grid(&self) -> Result<FineGrid> {
        Ok(FineGrid::new(self.domain()?, self.grid.n)?)
    }

    pub fn kappa2(&self) -> Result<Vec<f64>> {
        self.kappa2.expand(self.levels.len())
    }

    pub fn geometries(&self) -> Result<Vec<LevelGeometry>> {
        let d = self.domain()?;
        self.levels
            .iter()
            .map(|&r| Ok(make_level_geometry(d, r, self.n_buffer, self.grid.overlap)?))
            .collect()
    }

    pub fn methods(&self) -> Vec<NormalizeMethod> {
        self.normalize_method.to_vec()
    }

    pub fn model_spec(&self, method: NormalizeMethod) -> Result<ModelSpec> {
        Ok(ModelSpec::new(
            self.geometries()?,
            self.kappa2()?,
            self.alpha.clone(),
            self.tau2,
            method,
        )?
        .with_coarse(self.grid.n_tilde_rule, self.grid.coarse_mode))
    }
}
