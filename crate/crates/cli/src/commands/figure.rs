use anyhow::Result;
use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use gridnorm::basis::regression_matrix;
use gridnorm::fftnorm::{variance_fft_artifacts, CoarseSolver, InterpolationArtifacts};
use gridnorm::grid::{make_coarse_grid, make_level_geometry, Domain, FineGrid, DEFAULT_OVERLAP};
use gridnorm::kron::{build_tridiagonal, eigendecompose, variance_kronecker_values};
use gridnorm::model::{fit, predict, Dataset, ModelSpec, NormalizeMethod};

use super::error::compare_fields;
use crate::config::RunConfig;
use crate::output::Sink;

/// Coarse field, padded spectrum, interpolated field and the exact field
/// for the first configured level.
pub struct FftFigure {
    pub artifacts: InterpolationArtifacts,
    pub exact: Array2<f64>,
    pub relative_error: Array2<f64>,
}

pub fn fft_figure(cfg: &RunConfig) -> Result<FftFigure> {
    let fine = cfg.fine_grid()?;
    let geo = cfg.geometries()?.remove(0);
    let eig = eigendecompose(&build_tridiagonal(geo.r_total(), cfg.kappa2()?[0])?)?;
    let coarse = make_coarse_grid(&fine, &geo, cfg.grid.n_tilde_rule, cfg.grid.coarse_mode)?;
    let artifacts = variance_fft_artifacts(&geo, &fine, &coarse, CoarseSolver::Kronecker(&eig))?;
    let exact = variance_kronecker_values(&regression_matrix(&fine, &geo)?, &eig)?;
    let (_, relative_error) = compare_fields(&artifacts.fine, &exact)?;
    Ok(FftFigure {
        artifacts,
        exact,
        relative_error,
    })
}

/// Quadratic surface plus white noise fitted by a single-level model with
/// and without normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientStudy {
    pub n: usize,
    pub r_interior: usize,
    pub n_buffer: usize,
    pub kappa2: f64,
    pub tau2: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for GradientStudy {
    fn default() -> Self {
        Self {
            n: 101,
            r_interior: 11,
            n_buffer: 10,
            kappa2: 0.05,
            tau2: 0.05,
            noise_sd: 0.01,
            seed: 11,
        }
    }
}

fn quadratic(x: f64, y: f64) -> f64 {
    (x - 0.3).powi(2) + 0.5 * (y - 0.6).powi(2) + 0.3 * x * y
}

fn quadratic_gradient(x: f64, y: f64) -> [f64; 2] {
    [2.0 * (x - 0.3) + 0.3 * y, (y - 0.6) + 0.3 * x]
}

pub struct GradientResult {
    pub unnormalized: Array2<f64>,
    pub normalized: Array2<f64>,
    /// Gradient error magnitude of each prediction.
    pub gradient_error_unnormalized: Array2<f64>,
    pub gradient_error_normalized: Array2<f64>,
    pub energy_unnormalized: f64,
    pub energy_normalized: f64,
}

impl GradientResult {
    pub fn ratio(&self) -> f64 {
        self.energy_unnormalized / self.energy_normalized
    }
}

/// Central-difference gradient of `z` minus the true gradient, at interior
/// points.
fn gradient_error(z: &Array2<f64>, fine: &FineGrid) -> [Array2<f64>; 2] {
    let n = fine.n();
    let h = fine.spacing();
    let mut gx = Array2::zeros((n, n));
    let mut gy = Array2::zeros((n, n));
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            let t = quadratic_gradient(fine.x(j), fine.y(i));
            gx[[i, j]] = (z[[i, j + 1]] - z[[i, j - 1]]) / (2.0 * h) - t[0];
            gy[[i, j]] = (z[[i + 1, j]] - z[[i - 1, j]]) / (2.0 * h) - t[1];
        }
    }
    [gx, gy]
}

/// Energy of `f` at the nonzero multiples of frequency `k0` of its DFT.
fn harmonic_energy(f: &Array2<f64>, k0: usize) -> f64 {
    let (h, w) = f.dim();
    let tau = std::f64::consts::TAU;
    let mut total = 0.0;
    for a in (0..h).step_by(k0) {
        for b in (0..w).step_by(k0) {
            if a == 0 && b == 0 {
                continue;
            }
            let (mut re, mut im) = (0.0, 0.0);
            for ((i, j), &v) in f.indexed_iter() {
                let ph = -tau * (a as f64 * i as f64 / h as f64 + b as f64 * j as f64 / w as f64);
                re += v * ph.cos();
                im += v * ph.sin();
            }
            total += re * re + im * im;
        }
    }
    total
}

pub fn gradient_study(p: &GradientStudy) -> Result<GradientResult> {
    let domain = Domain::square(0.0, 1.0)?;
    let fine = FineGrid::new(domain, p.n)?;
    let geo = make_level_geometry(domain, p.r_interior, p.n_buffer, DEFAULT_OVERLAP)?;
    let segs = p.n - 1;
    let cells = p.r_interior - 1;
    anyhow::ensure!(
        segs.is_multiple_of(cells),
        "the fine grid must place every center on a grid point"
    );
    let period = segs / cells;

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let noise = Normal::new(0.0, p.noise_sd)?;
    let z = Array2::from_shape_fn((p.n, p.n), |(i, j)| {
        quadratic(fine.x(j), fine.y(i)) + noise.sample(&mut rng)
    });
    let data = Dataset::new(z, (0..p.n * p.n).collect())?;

    let surface = |method| -> Result<Array2<f64>> {
        let spec = ModelSpec::new(vec![geo], vec![p.kappa2], None, p.tau2, method)?;
        Ok(predict(&fit(&data, &spec, &fine)?, &fine)?)
    };
    let unnormalized = surface(NormalizeMethod::None)?;
    let normalized = surface(NormalizeMethod::ExactKronecker)?;

    // whole periods well inside the domain
    let lo = 2 * period;
    let periods = (p.n - 1 - 2 * lo) / period;
    let hi = lo + periods * period;
    let energy = |z: &Array2<f64>| -> (f64, Array2<f64>) {
        let [gx, gy] = gradient_error(z, &fine);
        let e = harmonic_energy(&gx.slice(s![lo..hi, lo..hi]).to_owned(), periods)
            + harmonic_energy(&gy.slice(s![lo..hi, lo..hi]).to_owned(), periods);
        let mag = Array2::from_shape_fn(gx.dim(), |ij| gx[ij].hypot(gy[ij]));
        (e, mag)
    };
    let (energy_unnormalized, gradient_error_unnormalized) = energy(&unnormalized);
    let (energy_normalized, gradient_error_normalized) = energy(&normalized);
    Ok(GradientResult {
        unnormalized,
        normalized,
        gradient_error_unnormalized,
        gradient_error_normalized,
        energy_unnormalized,
        energy_normalized,
    })
}

/// Write the interpolation artifacts of the first level and the gradient
/// comparison of the quadratic fit.
pub fn cmd_figure(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let f = fft_figure(cfg)?;
    sink.matrix("fft_coarse", &f.artifacts.coarse)?;
    sink.matrix("fft_spectrum_log", &f.artifacts.padded.log_magnitude())?;
    sink.matrix("fft_fine", &f.artifacts.fine)?;
    sink.matrix("fft_exact", &f.exact)?;
    sink.matrix("fft_relative_error", &f.relative_error)?;

    let g = gradient_study(&GradientStudy {
        seed: cfg.seed,
        ..GradientStudy::default()
    })?;
    sink.matrix("quadratic_unnormalized", &g.unnormalized)?;
    sink.matrix("quadratic_normalized", &g.normalized)?;
    sink.matrix(
        "gradient_error_unnormalized",
        &g.gradient_error_unnormalized,
    )?;
    sink.matrix("gradient_error_normalized", &g.gradient_error_normalized)?;
    let mut t = sink.table("gradient_energy.csv")?;
    t.row(["unnormalized", "normalized", "ratio"])?;
    t.row([
        format!("{:e}", g.energy_unnormalized),
        format!("{:e}", g.energy_normalized),
        format!("{:e}", g.ratio()),
    ])?;
    println!(
        "lattice-frequency gradient energy: unnormalized {:.3e}, normalized {:.3e}, ratio {:.2}",
        g.energy_unnormalized,
        g.energy_normalized,
        g.ratio()
    );
    Ok(())
}
