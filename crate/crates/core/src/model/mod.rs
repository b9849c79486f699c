//! Multi-resolution models: method selection, simulation, sampling,
//! fitting, prediction and scoring.

mod fit;
mod metrics;
mod normalize;
mod sampling;
mod simulate;
mod spec;

pub use fit::{fit, fit_normalized, predict, FittedModel};
pub use metrics::{metrics, Metrics};
pub use normalize::{level_variance, typical_variance, LevelNormalization};
pub use sampling::{retained_count, sample_blocks, sample_mar, Block, Dataset};
pub use simulate::{bessel_k, simulate_matern, MaternParams, Simulation, MAX_EMBEDDING_FACTOR};
pub use spec::{select_methods, LevelMethod, ModelSpec, NormalizeMethod};
