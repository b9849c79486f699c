//! Approximate variance by Fourier interpolation of exact values computed on
//! a coarse sub-lattice of the fine grid.

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::basis::{check_positive, regression_matrix, VarianceField, VarianceMethod};
use crate::error::{Error, Result};
use crate::grid::{CoarseGrid, FineGrid, LevelGeometry};
use crate::kron::{variance_kronecker_values, KroneckerEig};
use crate::sar::{variance_exact_values, SarSystem};

/// Imaginary parts above this fraction of `max |field|` abort interpolation.
pub const IMAGINARY_TOLERANCE: f64 = 1e-8;

/// Square 2D spectrum, row-major, DC at `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    side: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(side: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != side * side {
            return Err(Error::ShapeMismatch(format!(
                "spectrum of side {side} needs {} coefficients, got {}",
                side * side,
                data.len()
            )));
        }
        Ok(Self { side, data })
    }

    /// Unnormalized forward DFT of a square real field.
    pub fn of_field(field: &Array2<f64>) -> Result<Self> {
        let (r, c) = field.dim();
        if r != c || r == 0 {
            return Err(Error::ShapeMismatch(format!(
                "field must be square and nonempty, got {r}x{c}"
            )));
        }
        if field.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "field contains non-finite values".into(),
            ));
        }
        let mut data: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft2(&mut data, r, false);
        Ok(Self { side: r, data })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn get(&self, p: usize, q: usize) -> Complex64 {
        self.data[p * self.side + q]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// `log10(1 + |f|)` of every coefficient.
    pub fn log_magnitude(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.side, self.side), |(p, q)| {
            (1.0 + self.get(p, q).norm()).log10()
        })
    }

    /// Largest deviation from `f[p, q] = conj(f[-p, -q])`.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let n = self.side;
        let mut worst = 0.0f64;
        for p in 0..n {
            for q in 0..n {
                let a = self.get(p, q);
                let b = self.get((n - p) % n, (n - q) % n).conj();
                worst = worst.max((a - b).norm());
            }
        }
        worst
    }
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    }
}

/// Unnormalized 2D DFT in place: rows, then columns.
pub(crate) fn fft2(data: &mut [Complex64], n: usize, inverse: bool) {
    let fft = plan(n, inverse);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(data, &mut scratch);
    let mut col = vec![Complex64::default(); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = data[i * n + j];
        }
        fft.process_with_scratch(&mut col, &mut scratch);
        for i in 0..n {
            data[i * n + j] = col[i];
        }
    }
}

/// Where frequency index `p` of an `n`-point spectrum lands in an
/// `n_star`-point one, with weights. An even `n` has a Nyquist index whose
/// coefficient is split between the two mirror positions.
fn frequency_targets(p: usize, n: usize, n_star: usize) -> [(usize, f64); 2] {
    if n_star == n {
        return [(p, 1.0), (0, 0.0)];
    }
    if n.is_multiple_of(2) && p == n / 2 {
        return [(p, 0.5), (n_star - p, 0.5)];
    }
    let low = n.div_ceil(2);
    if p < low {
        [(p, 1.0), (0, 0.0)]
    } else {
        [(n_star - (n - p), 1.0), (0, 0.0)]
    }
}

/// Embed a spectrum in a larger one: low frequencies go to the four corners,
/// everything else is zero.
pub fn zero_pad_spectrum(coarse: &Spectrum, n_star: usize) -> Result<Spectrum> {
    let n = coarse.side;
    if n_star < n {
        return Err(Error::InvalidArgument(format!(
            "padded size {n_star} is smaller than the spectrum size {n}"
        )));
    }
    let targets: Vec<_> = (0..n).map(|p| frequency_targets(p, n, n_star)).collect();
    let mut out = vec![Complex64::default(); n_star * n_star];
    for p in 0..n {
        for q in 0..n {
            let f = coarse.get(p, q);
            for &(pi, wp) in &targets[p] {
                if wp == 0.0 {
                    continue;
                }
                for &(qi, wq) in &targets[q] {
                    if wq == 0.0 {
                        continue;
                    }
                    out[pi * n_star + qi] += f * (wp * wq);
                }
            }
        }
    }
    Spectrum::new(n_star, out)
}

/// Intermediate arrays of one interpolation, for inspection and plotting.
#[derive(Debug, Clone)]
pub struct InterpolationArtifacts {
    pub coarse: Array2<f64>,
    pub padded: Spectrum,
    pub fine: Array2<f64>,
    /// Largest `|imag|` before truncation, relative to `max |field|`.
    pub imaginary_residual: f64,
}

fn interpolate_impl(field: &Array2<f64>, m: usize, n: usize) -> Result<InterpolationArtifacts> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "scale factor must be positive".into(),
        ));
    }
    let spec = Spectrum::of_field(field)?;
    let nt = spec.side;
    let n_star = m * nt;
    if n > n_star {
        return Err(Error::InvalidArgument(format!(
            "output side {n} exceeds the padded size {n_star}"
        )));
    }
    let padded = zero_pad_spectrum(&spec, n_star)?;
    let mut data = padded.data.clone();
    fft2(&mut data, n_star, true);
    let norm = 1.0 / (nt * nt) as f64;
    let max_abs = field.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let max_imag = data.iter().fold(0.0f64, |a, v| a.max(v.im.abs())) * norm;
    let limit = IMAGINARY_TOLERANCE * max_abs;
    if max_imag > limit && max_imag > 0.0 {
        return Err(Error::ImaginaryResidual {
            residual: max_imag,
            limit,
        });
    }
    let fine = Array2::from_shape_fn((n, n), |(i, j)| data[i * n_star + j].re * norm);
    Ok(InterpolationArtifacts {
        coarse: field.clone(),
        padded,
        fine,
        imaginary_residual: if max_abs > 0.0 {
            max_imag / max_abs
        } else {
            0.0
        },
    })
}

/// Upsample by `m`: output side `m (n_tilde - 1) + 1`, agreeing with the
/// input at every `m`-th point.
pub fn fourier_interpolate(field: &Array2<f64>, m: usize) -> Result<Array2<f64>> {
    let nt = field.nrows();
    if nt == 0 {
        return Err(Error::ShapeMismatch("empty field".into()));
    }
    Ok(interpolate_impl(field, m, m * (nt - 1) + 1)?.fine)
}

/// Upsample by `m` and keep the leading `n x n` block.
pub fn fourier_interpolate_to(field: &Array2<f64>, m: usize, n: usize) -> Result<Array2<f64>> {
    Ok(interpolate_impl(field, m, n)?.fine)
}

pub fn fourier_interpolate_artifacts(
    field: &Array2<f64>,
    m: usize,
    n: usize,
) -> Result<InterpolationArtifacts> {
    interpolate_impl(field, m, n)
}

/// Exact solver used at the coarse points.
#[derive(Debug, Clone, Copy)]
pub enum CoarseSolver<'a> {
    Exact(&'a SarSystem),
    Kronecker(&'a KroneckerEig),
}

fn check_coarse(fine: &FineGrid, coarse: &CoarseGrid) -> Result<()> {
    if coarse.fine() != fine {
        return Err(Error::ShapeMismatch(
            "coarse grid was built for a different fine grid".into(),
        ));
    }
    Ok(())
}

/// Coarse exact variance plus its Fourier interpolation onto `fine`.
pub fn variance_fft_artifacts(
    geometry: &LevelGeometry,
    fine: &FineGrid,
    coarse: &CoarseGrid,
    solver: CoarseSolver<'_>,
) -> Result<InterpolationArtifacts> {
    check_coarse(fine, coarse)?;
    let phi = regression_matrix(coarse, geometry)?;
    // coarse points past the domain may fall outside every support
    let field = match solver {
        CoarseSolver::Exact(sys) => variance_exact_values(&phi, sys)?,
        CoarseSolver::Kronecker(eig) => variance_kronecker_values(&phi, eig)?,
    };
    interpolate_impl(&field, coarse.scale(), fine.n())
}

/// Approximate variance on every point of `fine`.
pub fn variance_fft(
    geometry: &LevelGeometry,
    fine: &FineGrid,
    coarse: &CoarseGrid,
    solver: CoarseSolver<'_>,
) -> Result<VarianceField> {
    let art = variance_fft_artifacts(geometry, fine, coarse, solver)?;
    check_positive(&art.fine, 0)?;
    VarianceField::new(art.fine, VarianceMethod::Fft, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pad_two_point_spectrum() {
        let (a, b, cc, d) = (c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0));
        let s = Spectrum::new(2, vec![a, b, cc, d]).unwrap();
        let p = zero_pad_spectrum(&s, 4).unwrap();
        assert_eq!(p.get(0, 0), a);
        assert_eq!(p.get(0, 1), b * 0.5);
        assert_eq!(p.get(0, 3), b * 0.5);
        assert_eq!(p.get(1, 0), cc * 0.5);
        assert_eq!(p.get(3, 0), cc * 0.5);
        for (i, j) in [(1, 1), (1, 3), (3, 1), (3, 3)] {
            assert_eq!(p.get(i, j), d * 0.25);
        }
        let nonzero = p.as_slice().iter().filter(|v| v.norm() > 0.0).count();
        assert_eq!(nonzero, 9);
    }

    #[test]
    fn pad_to_same_size_is_identity() {
        for n in [2, 3, 6, 7] {
            let data = (0..n * n).map(|k| c(k as f64, -(k as f64) / 3.0)).collect();
            let s = Spectrum::new(n, data).unwrap();
            assert_eq!(zero_pad_spectrum(&s, n).unwrap(), s);
        }
    }

    #[test]
    fn pad_dc_only() {
        let mut data = vec![c(0.0, 0.0); 25];
        data[0] = c(7.0, 0.0);
        let p = zero_pad_spectrum(&Spectrum::new(5, data).unwrap(), 15).unwrap();
        assert_eq!(p.get(0, 0), c(7.0, 0.0));
        assert_eq!(p.as_slice().iter().filter(|v| v.norm() > 0.0).count(), 1);
    }

    #[test]
    fn pad_rejects_shrinking() {
        let s = Spectrum::new(4, vec![c(0.0, 0.0); 16]).unwrap();
        assert!(zero_pad_spectrum(&s, 3).is_err());
    }

    #[test]
    fn real_field_spectrum_is_conjugate_symmetric() {
        let f = Array2::from_shape_fn((6, 6), |(i, j)| ((i * 7 + j * 3) % 5) as f64);
        let s = Spectrum::of_field(&f).unwrap();
        assert!(s.conjugate_symmetry_defect() < 1e-12);
        let padded = zero_pad_spectrum(&s, 18).unwrap();
        assert!(padded.conjugate_symmetry_defect() < 1e-12);
    }

    #[test]
    fn constant_field_stays_constant() {
        for (nt, m) in [(4, 3), (5, 2), (9, 4)] {
            let f = Array2::from_elem((nt, nt), 2.75);
            let out = fourier_interpolate(&f, m).unwrap();
            assert_eq!(out.nrows(), m * (nt - 1) + 1);
            for v in out.iter() {
                assert_relative_eq!(*v, 2.75, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn cosine_is_reproduced() {
        // samples of cos(2 pi x) on the periodic grid x = p / 9
        let nt = 9;
        let m = 4;
        let f = Array2::from_shape_fn((nt, nt), |(_, q)| (2.0 * PI * q as f64 / nt as f64).cos());
        let out = fourier_interpolate(&f, m).unwrap();
        for ((_, j), v) in out.indexed_iter() {
            let x = j as f64 / (m * nt) as f64;
            assert!((v - (2.0 * PI * x).cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut f = Array2::from_elem((4, 4), 1.0);
        f[[1, 2]] = f64::NAN;
        assert!(fourier_interpolate(&f, 2).is_err());
    }

    #[test]
    fn truncated_output() {
        let f = Array2::from_shape_fn((6, 6), |(i, j)| 1.0 + 0.1 * (i + j) as f64);
        let full = fourier_interpolate_to(&f, 3, 18).unwrap();
        let part = fourier_interpolate_to(&f, 3, 14).unwrap();
        assert_eq!(part.nrows(), 14);
        for ((i, j), v) in part.indexed_iter() {
            assert_eq!(*v, full[[i, j]]);
        }
        assert!(fourier_interpolate_to(&f, 3, 19).is_err());
    }

    fn trig_poly(coeffs: &[(usize, usize, f64, f64)], y: f64, x: f64) -> f64 {
        coeffs
            .iter()
            .map(|&(a, b, ca, cb)| {
                let ph = 2.0 * PI * (a as f64 * y + b as f64 * x);
                ca * ph.cos() + cb * ph.sin()
            })
            .sum()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn preserves_samples(nt in 2usize..14, m in 1usize..5, seed in any::<u64>()) {
            let mut s = seed;
            let f = Array2::from_shape_fn((nt, nt), |_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            });
            let art = fourier_interpolate_artifacts(&f, m, m * (nt - 1) + 1).unwrap();
            let scale = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for ((p, q), v) in f.indexed_iter() {
                prop_assert!((art.fine[[m * p, m * q]] - v).abs() <= 1e-10 * scale);
            }
            prop_assert!(art.imaginary_residual <= 1e-10);
        }

        #[test]
        fn band_limited_exact(
            nt in 5usize..16,
            m in 2usize..5,
            raw in proptest::collection::vec((0usize..100, 0usize..100, -1.0f64..1.0, -1.0f64..1.0), 1..5),
        ) {
            // strictly below the Nyquist index of the coarse grid
            let kmax = (nt - 1) / 2;
            let coeffs: Vec<_> = raw
                .iter()
                .map(|&(a, b, ca, cb)| (a % (kmax + 1), b % (kmax + 1), ca, cb))
                .collect();
            let f = Array2::from_shape_fn((nt, nt), |(p, q)| {
                trig_poly(&coeffs, p as f64 / nt as f64, q as f64 / nt as f64)
            });
            let out = fourier_interpolate(&f, m).unwrap();
            let n_star = (m * nt) as f64;
            for ((i, j), v) in out.indexed_iter() {
                let want = trig_poly(&coeffs, i as f64 / n_star, j as f64 / n_star);
                prop_assert!((v - want).abs() <= 1e-9);
            }
        }

        #[test]
        fn periodic_extension(nt in 3usize..10, m in 1usize..4) {
            // the padded inverse is periodic with period m * nt
            let f = Array2::from_shape_fn((nt, nt), |(p, q)| ((p * 5 + q * 11) % 7) as f64);
            let n_star = m * nt;
            let full = fourier_interpolate_to(&f, m, n_star).unwrap();
            let wrapped = fourier_interpolate_to(&f, m, m * (nt - 1) + 1).unwrap();
            for p in 0..nt {
                prop_assert!((full[[m * p, 0]] - f[[p, 0]]).abs() < 1e-10 * 7.0);
            }
            prop_assert_eq!(wrapped[[0, 0]], full[[0, 0]]);
        }
    }
}
