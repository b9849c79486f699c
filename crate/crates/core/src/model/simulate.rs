use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fftnorm::fft2;
use crate::grid::FineGrid;

/// Matérn covariance with additive white noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub range: f64,
    pub smoothness: f64,
    pub variance: f64,
    pub nugget: f64,
}

impl MaternParams {
    pub fn new(range: f64, smoothness: f64, variance: f64, nugget: f64) -> Result<Self> {
        let p = Self {
            range,
            smoothness,
            variance,
            nugget,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(pos(self.range) && pos(self.smoothness) && pos(self.variance)) {
            return Err(Error::InvalidArgument(format!(
                "range, smoothness and variance must be positive: {self:?}"
            )));
        }
        if !(self.nugget.is_finite() && self.nugget >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "nugget must be non-negative, got {}",
                self.nugget
            )));
        }
        Ok(())
    }

    /// Covariance of the noise-free field at distance `d`.
    pub fn covariance(&self, d: f64) -> f64 {
        if d == 0.0 {
            return self.variance;
        }
        let nu = self.smoothness;
        let x = d / self.range;
        let c = self.variance * 2f64.powf(1.0 - nu) / statrs::function::gamma::gamma(nu);
        c * x.powf(nu) * bessel_k(nu, x)
    }
}

/// Modified Bessel function of the second kind for `x > 0`, from
/// `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt` by the trapezoid rule,
/// which converges geometrically for this integrand.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k needs x > 0");
    if x > 700.0 {
        return 0.0;
    }
    let h = 1.0 / 32.0;
    let mut sum = 0.5 * (-x).exp();
    let mut k = 1usize;
    loop {
        let t = k as f64 * h;
        let term = (-x * t.cosh() + nu * t).exp() * 0.5 * (1.0 + (-2.0 * nu * t).exp());
        sum += term;
        if term < 1e-18 * sum && x * t.cosh() > nu * t + 40.0 {
            break;
        }
        k += 1;
    }
    sum * h
}

/// One draw of the field and its noisy observation.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub truth: Array2<f64>,
    pub observed: Array2<f64>,
    /// Side of the periodic embedding used.
    pub embedding: usize,
}

fn is_smooth(mut m: usize) -> bool {
    for p in [2, 3, 5] {
        while m.is_multiple_of(p) {
            m /= p;
        }
    }
    m == 1
}

fn next_smooth(m: usize) -> usize {
    (m..).find(|&v| is_smooth(v)).expect("unbounded")
}

/// Eigenvalues of the circulant embedding on an `m x m` torus.
fn embedding_spectrum(params: &MaternParams, h: f64, m: usize) -> Vec<f64> {
    let half = m / 2;
    let lag = |i: usize| (i.min(m - i)) as f64 * h;
    // covariance depends on the folded lags only
    let mut table = vec![0.0; (half + 1) * (half + 1)];
    for a in 0..=half {
        for b in a..=half {
            let c = params.covariance((lag(a).powi(2) + lag(b).powi(2)).sqrt());
            table[a * (half + 1) + b] = c;
            table[b * (half + 1) + a] = c;
        }
    }
    let fold = |i: usize| i.min(m - i);
    let mut data: Vec<Complex64> = (0..m * m)
        .map(|k| Complex64::new(table[fold(k / m) * (half + 1) + fold(k % m)], 0.0))
        .collect();
    fft2(&mut data, m, false);
    data.iter().map(|v| v.re).collect()
}

/// Largest embedding side tried, as a multiple of the grid side.
pub const MAX_EMBEDDING_FACTOR: usize = 16;

/// Simulate a stationary Matérn field on `grid` by circulant embedding and
/// add independent noise of variance `params.nugget`.
pub fn simulate_matern(grid: &FineGrid, params: &MaternParams, seed: u64) -> Result<Simulation> {
    params.validate()?;
    let n = grid.n();
    let h = grid.spacing();
    let cap = MAX_EMBEDDING_FACTOR * n;
    let mut m = next_smooth(2 * (n - 1)).max(2);
    let lambda = loop {
        let lam = embedding_spectrum(params, h, m);
        let max = lam.iter().cloned().fold(0.0, f64::max);
        let min = lam.iter().cloned().fold(f64::INFINITY, f64::min);
        if min >= -1e-10 * max {
            break lam;
        }
        let next = next_smooth(m + m / 2);
        if next > cap {
            return Err(Error::Embedding(format!(
                "circulant spectrum stays negative (min {min:.3e}) up to embedding side {m}"
            )));
        }
        m = next;
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (m * m) as f64;
    let mut data: Vec<Complex64> = lambda
        .iter()
        .map(|&l| {
            let s = (l.max(0.0) * scale).sqrt();
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            Complex64::new(s * a, s * b)
        })
        .collect();
    fft2(&mut data, m, false);
    let truth = Array2::from_shape_fn((n, n), |(i, j)| data[i * m + j].re);
    let sd = params.nugget.sqrt();
    let observed = truth.mapv(|v| {
        let e: f64 = rng.sample(StandardNormal);
        v + sd * e
    });
    Ok(Simulation {
        truth,
        observed,
        embedding: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use approx::assert_relative_eq;

    #[test]
    fn bessel_half_order_closed_form() {
        for x in [0.01, 0.3, 1.0, 4.0, 25.0] {
            let want = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp();
            assert_relative_eq!(bessel_k(0.5, x), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn bessel_tabulated_value() {
        assert_relative_eq!(
            bessel_k(1.0, 1.0),
            0.601_907_230_197_234_6,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            bessel_k(0.0, 1.0),
            0.421_024_438_240_708_3,
            max_relative = 1e-12
        );
    }

    #[test]
    fn exponential_special_case() {
        let p = MaternParams::new(2.0, 0.5, 1.5, 0.0).unwrap();
        for d in [0.0, 0.1, 1.0, 2.0, 7.0] {
            assert_relative_eq!(
                p.covariance(d),
                1.5 * (-d / 2.0).exp(),
                max_relative = 1e-12
            );
        }
        // continuity at the origin
        let q = MaternParams::new(6.0, 1.0, 1.0, 0.2).unwrap();
        assert!((q.covariance(1e-6) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(MaternParams::new(0.0, 1.0, 1.0, 0.0).is_err());
        assert!(MaternParams::new(1.0, -1.0, 1.0, 0.0).is_err());
        assert!(MaternParams::new(1.0, 1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn smooth_sizes() {
        assert_eq!(next_smooth(126), 128);
        assert_eq!(next_smooth(576), 576);
        assert_eq!(next_smooth(577), 600);
    }

    #[test]
    fn deterministic_under_seed() {
        let g = FineGrid::new(Domain::square(0.0, 10.0).unwrap(), 33).unwrap();
        let p = MaternParams::new(1.0, 1.0, 1.0, 0.2).unwrap();
        let a = simulate_matern(&g, &p, 7).unwrap();
        let b = simulate_matern(&g, &p, 7).unwrap();
        let c = simulate_matern(&g, &p, 8).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.observed, b.observed);
        assert_ne!(a.truth, c.truth);
        assert!(a.embedding >= 64);
    }
}
