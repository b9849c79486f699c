use thiserror::Error;

/// Errors raised anywhere in the normalization and modelling stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("domain must be square for lattice models (width {width}, height {height})")]
    NonSquareDomain { width: f64, height: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid level geometry: {0}")]
    InvalidGeometry(String),

    #[error("coarse grid side {n_tilde} is below the sampling limit 2*r+1 = {min}")]
    SubNyquist { n_tilde: usize, min: usize },

    #[error(
        "no integer scale factor M with n = M(n_tilde - 1) + 1 for n = {n}, n_tilde = {n_tilde}"
    )]
    NoIntegerScale { n: usize, n_tilde: usize },

    #[error("basis centers are not on the fine grid (n = {n}, r_interior = {r_interior})")]
    CentersOffGrid { n: usize, r_interior: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-positive variance {value:e} at grid location ({i}, {j}) on level {level}")]
    NonPositiveVariance {
        level: usize,
        i: usize,
        j: usize,
        value: f64,
    },

    #[error(
        "sparse basis matrix would need ~{required} bytes, above the budget of {budget} bytes"
    )]
    MemoryBudget { required: usize, budget: usize },

    #[error("Cholesky factorization of the SAR matrix failed at pivot {pivot} (kappa2 = {kappa2}, r_total = {r_total})")]
    Factorization {
        kappa2: f64,
        r_total: usize,
        pivot: usize,
    },

    #[error("symmetric eigensolver failed: {0}")]
    Eigen(String),

    #[error(
        "Fourier interpolation produced an imaginary residual of {residual:e} (limit {limit:e})"
    )]
    ImaginaryResidual { residual: f64, limit: f64 },

    #[error("circulant embedding failed: {0}")]
    Embedding(String),

    #[error("invalid sampling: {0}")]
    Sampling(String),

    #[error("linear system is singular or not positive definite: {0}")]
    SingularSystem(String),
}

pub type Result<T> = std::result::Result<T, Error>;
