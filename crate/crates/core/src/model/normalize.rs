use ndarray::Array2;
use std::time::{Duration, Instant};

use crate::basis::{basis_vector_lattice, regression_matrix, VarianceField, VarianceMethod};
use crate::error::Result;
use crate::fftnorm::{variance_fft, CoarseSolver};
use crate::grid::{make_coarse_grid, CoarseMode, FineGrid, LevelGeometry, NTildeRule};
use crate::kron::{build_tridiagonal, eigendecompose, variance_kronecker, KroneckerEig};
use crate::sar::{variance_exact, SarSystem};

use super::spec::LevelMethod;

/// Variance field of one level and how long it took.
#[derive(Debug, Clone)]
pub struct LevelNormalization {
    pub field: VarianceField,
    pub method: LevelMethod,
    pub elapsed: Duration,
}

/// Mean exact variance over a 4 x 4 sample of the central lattice cell.
///
/// Used as the constant divisor when normalization is off, so the
/// unnormalized process has the same overall scale as the normalized one
/// and differences between them are the lattice pattern only.
pub fn typical_variance(geometry: &LevelGeometry, eig: &KroneckerEig) -> f64 {
    let c = (geometry.r_total() / 2) as f64;
    let mut sum = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            let phi = basis_vector_lattice(c + b as f64 / 4.0, c + a as f64 / 4.0, geometry);
            sum += eig.variance_at(&phi);
        }
    }
    sum / 16.0
}

/// Variance of one level on every point of `fine` with the given method.
pub fn level_variance(
    geometry: &LevelGeometry,
    kappa2: f64,
    fine: &FineGrid,
    method: LevelMethod,
    rule: NTildeRule,
    mode: CoarseMode,
) -> Result<LevelNormalization> {
    let start = Instant::now();
    let field = match method {
        LevelMethod::None => {
            let eig = eigendecompose(&build_tridiagonal(geometry.r_total(), kappa2)?)?;
            let v = typical_variance(geometry, &eig);
            VarianceField::new(
                Array2::from_elem((fine.n(), fine.n()), v),
                VarianceMethod::Exact,
                0,
            )?
        }
        LevelMethod::Exact => {
            let sys = SarSystem::new(geometry.r_total(), kappa2)?;
            variance_exact(&regression_matrix(fine, geometry)?, &sys)?
        }
        LevelMethod::Kronecker => {
            let eig = eigendecompose(&build_tridiagonal(geometry.r_total(), kappa2)?)?;
            variance_kronecker(&regression_matrix(fine, geometry)?, &eig)?
        }
        LevelMethod::Fft => {
            let eig = eigendecompose(&build_tridiagonal(geometry.r_total(), kappa2)?)?;
            let coarse = make_coarse_grid(fine, geometry, rule, mode)?;
            variance_fft(geometry, fine, &coarse, CoarseSolver::Kronecker(&eig))?
        }
    };
    Ok(LevelNormalization {
        field,
        method,
        elapsed: start.elapsed(),
    })
}
