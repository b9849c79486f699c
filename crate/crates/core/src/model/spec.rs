use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{make_level_geometry, CoarseMode, Domain, FineGrid, LevelGeometry, NTildeRule};

/// Model-wide normalization choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormalizeMethod {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "exact")]
    Exact,
    #[serde(rename = "exactKronecker")]
    ExactKronecker,
    #[serde(rename = "fft")]
    Fft,
    #[serde(rename = "both")]
    Both,
}

impl NormalizeMethod {
    pub const ALL: [NormalizeMethod; 5] = [
        NormalizeMethod::None,
        NormalizeMethod::Exact,
        NormalizeMethod::ExactKronecker,
        NormalizeMethod::Fft,
        NormalizeMethod::Both,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            NormalizeMethod::None => "none",
            NormalizeMethod::Exact => "exact",
            NormalizeMethod::ExactKronecker => "exactKronecker",
            NormalizeMethod::Fft => "fft",
            NormalizeMethod::Both => "both",
        }
    }
}

impl fmt::Display for NormalizeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormalizeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown normalization method {s:?}; expected one of none, exact, exactKronecker, fft, both"
                ))
            })
    }
}

/// Method actually run on one level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelMethod {
    None,
    Exact,
    Kronecker,
    Fft,
}

impl fmt::Display for LevelMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LevelMethod::None => "none",
            LevelMethod::Exact => "exact",
            LevelMethod::Kronecker => "kronecker",
            LevelMethod::Fft => "fft",
        })
    }
}

/// A multi-resolution basis model with fixed hyperparameters.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    levels: Vec<LevelGeometry>,
    kappa2: Vec<f64>,
    alpha: Vec<f64>,
    tau2: f64,
    method: NormalizeMethod,
    n_tilde_rule: NTildeRule,
    coarse_mode: CoarseMode,
    covariates: Option<Array2<f64>>,
}

impl ModelSpec {
    /// `alpha = None` gives every level weight `1 / L`.
    pub fn new(
        levels: Vec<LevelGeometry>,
        kappa2: Vec<f64>,
        alpha: Option<Vec<f64>>,
        tau2: f64,
        method: NormalizeMethod,
    ) -> Result<Self> {
        let l = levels.len();
        if l == 0 {
            return Err(Error::InvalidArgument(
                "model needs at least one level".into(),
            ));
        }
        if kappa2.len() != l {
            return Err(Error::InvalidArgument(format!(
                "{} kappa2 values for {l} levels",
                kappa2.len()
            )));
        }
        if let Some(k) = kappa2.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "kappa2 must be positive, got {k}"
            )));
        }
        if !(tau2.is_finite() && tau2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tau2 must be positive, got {tau2}"
            )));
        }
        let alpha = alpha.unwrap_or_else(|| vec![1.0 / l as f64; l]);
        if alpha.len() != l {
            return Err(Error::InvalidArgument(format!(
                "{} level weights for {l} levels",
                alpha.len()
            )));
        }
        if alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidArgument(
                "level weights must be positive".into(),
            ));
        }
        let sum: f64 = alpha.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "level weights must sum to 1, got {sum}"
            )));
        }
        let d0 = levels[0].domain();
        if levels.iter().any(|g| g.domain() != d0) {
            return Err(Error::InvalidArgument(
                "all levels must share one domain".into(),
            ));
        }
        Ok(Self {
            levels,
            kappa2,
            alpha,
            tau2,
            method,
            n_tilde_rule: NTildeRule::default(),
            coarse_mode: CoarseMode::default(),
            covariates: None,
        })
    }

    /// Levels with the given interior center counts, one shared buffer,
    /// overlap and `kappa2`, and equal weights.
    pub fn multiresolution(
        domain: Domain,
        r_interior: &[usize],
        n_buffer: usize,
        overlap: f64,
        kappa2: f64,
        tau2: f64,
        method: NormalizeMethod,
    ) -> Result<Self> {
        let levels = r_interior
            .iter()
            .map(|&r| make_level_geometry(domain, r, n_buffer, overlap))
            .collect::<Result<Vec<_>>>()?;
        let l = levels.len();
        Self::new(levels, vec![kappa2; l], None, tau2, method)
    }

    pub fn with_coarse(mut self, rule: NTildeRule, mode: CoarseMode) -> Self {
        self.n_tilde_rule = rule;
        self.coarse_mode = mode;
        self
    }

    pub fn with_method(mut self, method: NormalizeMethod) -> Self {
        self.method = method;
        self
    }

    /// Extra covariate columns, one row per fine-grid location in
    /// row-major order. An intercept is always included.
    pub fn with_covariates(mut self, covariates: Array2<f64>) -> Result<Self> {
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("covariates must be finite".into()));
        }
        self.covariates = Some(covariates);
        Ok(self)
    }

    pub fn levels(&self) -> &[LevelGeometry] {
        &self.levels
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn kappa2(&self) -> &[f64] {
        &self.kappa2
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    pub fn method(&self) -> NormalizeMethod {
        self.method
    }

    pub fn n_tilde_rule(&self) -> NTildeRule {
        self.n_tilde_rule
    }

    pub fn coarse_mode(&self) -> CoarseMode {
        self.coarse_mode
    }

    pub fn covariates(&self) -> Option<&Array2<f64>> {
        self.covariates.as_ref()
    }

    /// Total number of basis functions over all levels.
    pub fn n_basis(&self) -> usize {
        self.levels.iter().map(|g| g.n_basis()).sum()
    }

    /// Column offset of each level in the stacked coefficient vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.levels.len() + 1);
        out.push(0);
        for g in &self.levels {
            out.push(out.last().unwrap() + g.n_basis());
        }
        out
    }
}

/// Per-level methods. With `both`, a level uses fft when
/// `4 r_total <= n / 2` and the Kronecker method otherwise.
pub fn select_methods(spec: &ModelSpec, fine: &FineGrid) -> Vec<LevelMethod> {
    let n = fine.n();
    spec.levels
        .iter()
        .map(|g| match spec.method {
            NormalizeMethod::None => LevelMethod::None,
            NormalizeMethod::Exact => LevelMethod::Exact,
            NormalizeMethod::ExactKronecker => LevelMethod::Kronecker,
            NormalizeMethod::Fft => LevelMethod::Fft,
            NormalizeMethod::Both => {
                if 8 * g.r_total() <= n {
                    LevelMethod::Fft
                } else {
                    LevelMethod::Kronecker
                }
            }
        })
        .collect()
}
