//! Spatial domains, fine evaluation grids, basis-center lattices and the
//! coarse sub-grids used by Fourier interpolation.
//!
//! Grids are stored implicitly (corner, spacing, count). Coordinates are
//! generated on demand so that grids with millions of points cost nothing
//! to hold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle `[x_min, x_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Domain {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidDomain("bounds must be finite".into()));
        }
        if !(x_min < x_max && y_min < y_max) {
            return Err(Error::InvalidDomain(format!(
                "need x_min < x_max and y_min < y_max, got [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    /// `[lo, hi] x [lo, hi]`.
    pub fn square(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, lo, hi)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub(crate) fn require_square(&self) -> Result<()> {
        let (w, h) = (self.width(), self.height());
        if (w - h).abs() > 1e-12 * w.max(h) {
            return Err(Error::NonSquareDomain {
                width: w,
                height: h,
            });
        }
        Ok(())
    }
}

/// `n x n` equally spaced lattice spanning the domain, corners included.
///
/// Location `(i, j)` has `y = y_min + i*h` and `x = x_min + j*h`; fields
/// over the grid are stored row-major with `i` as the row index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineGrid {
    domain: Domain,
    n: usize,
}

impl FineGrid {
    pub fn new(domain: Domain, n: usize) -> Result<Self> {
        domain.require_square()?;
        if n < 2 {
            return Err(Error::InvalidGrid(format!(
                "fine grid needs at least 2 points per side, got {n}"
            )));
        }
        Ok(Self { domain, n })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of locations `N = n^2`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.domain.width() / (self.n - 1) as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        axis_coord(self.domain.x_min, self.domain.x_max, j, self.n - 1)
    }

    pub fn y(&self, i: usize) -> f64 {
        axis_coord(self.domain.y_min, self.domain.y_max, i, self.n - 1)
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.x(j), self.y(i)]
    }
}

/// Coordinate of index `k` on an axis `[lo, hi]` cut into `segments` pieces.
/// The two end points are reproduced bit-exactly.
fn axis_coord(lo: f64, hi: f64, k: usize, segments: usize) -> f64 {
    if k == segments {
        return hi;
    }
    let t = k as f64 / segments as f64;
    lo + t * (hi - lo)
}

/// One resolution level: an `r_total x r_total` lattice of basis centers.
///
/// The `r_interior` interior centers per side span the domain exactly (the
/// extreme centers sit on the domain corners); `n_buffer` extra centers are
/// appended on every side with the same spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelGeometry {
    domain: Domain,
    r_interior: usize,
    n_buffer: usize,
    overlap_multiplier: f64,
}

pub const DEFAULT_OVERLAP: f64 = 2.5;

impl LevelGeometry {
    pub fn new(
        domain: Domain,
        r_interior: usize,
        n_buffer: usize,
        overlap_multiplier: f64,
    ) -> Result<Self> {
        domain.require_square()?;
        if r_interior < 2 {
            return Err(Error::InvalidGeometry(format!(
                "r_interior must be at least 2 for the center spacing to be defined, got {r_interior}"
            )));
        }
        if !(overlap_multiplier.is_finite() && overlap_multiplier > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "overlap multiplier must be positive, got {overlap_multiplier}"
            )));
        }
        Ok(Self {
            domain,
            r_interior,
            n_buffer,
            overlap_multiplier,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn r_interior(&self) -> usize {
        self.r_interior
    }

    pub fn n_buffer(&self) -> usize {
        self.n_buffer
    }

    /// Centers per side including the buffer on both sides.
    pub fn r_total(&self) -> usize {
        self.r_interior + 2 * self.n_buffer
    }

    /// Number of basis functions `R = r_total^2`.
    pub fn n_basis(&self) -> usize {
        self.r_total() * self.r_total()
    }

    /// Center spacing `delta`.
    pub fn delta(&self) -> f64 {
        self.domain.width() / (self.r_interior - 1) as f64
    }

    /// Support radius `gamma = overlap * delta`.
    pub fn gamma(&self) -> f64 {
        self.overlap_multiplier * self.delta()
    }

    pub fn overlap_multiplier(&self) -> f64 {
        self.overlap_multiplier
    }

    /// Physical position of center `(k, l)`; `k` indexes y, `l` indexes x.
    pub fn center(&self, k: usize, l: usize) -> [f64; 2] {
        let off = self.n_buffer as f64;
        let d = self.delta();
        [
            self.domain.x_min + (l as f64 - off) * d,
            self.domain.y_min + (k as f64 - off) * d,
        ]
    }

    /// Column index of center `(k, l)` in the regression matrix.
    pub fn column(&self, k: usize, l: usize) -> usize {
        k * self.r_total() + l
    }

    /// Position of a fine-grid index (possibly past the last grid point) in
    /// lattice units, where center index `l` sits at coordinate `l`.
    ///
    /// The value is computed from exact integer arithmetic so that points
    /// that coincide with centers land on integers bit-exactly.
    pub fn lattice_coord(&self, fine_index: usize, fine_segments: usize) -> f64 {
        let num = (fine_index * (self.r_interior - 1)) as f64;
        num / fine_segments as f64 + self.n_buffer as f64
    }

    /// Whether the interior centers coincide with points of `fine`.
    pub fn centers_on_grid(&self, fine: &FineGrid) -> bool {
        (fine.n() - 1).is_multiple_of(self.r_interior - 1)
    }
}

/// Convenience wrapper matching the operation name used across the crate.
pub fn make_level_geometry(
    domain: Domain,
    r_interior: usize,
    n_buffer: usize,
    overlap_multiplier: f64,
) -> Result<LevelGeometry> {
    LevelGeometry::new(domain, r_interior, n_buffer, overlap_multiplier)
}

/// How the coarse grid relates to the fine grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoarseMode {
    /// `n = M (n_tilde - 1) + 1`; coarse and fine corners coincide.
    #[default]
    Strict,
    /// Any `2 r + 1 <= n_tilde < n`. The coarse lattice uses stride
    /// `M = ceil((n - 1) / (n_tilde - 1))` and may run past the far edge of
    /// the domain.
    Relaxed,
}

/// Rule for picking the coarse side `n_tilde` from a level's `r_total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum NTildeRule {
    /// `4 r_total`
    #[serde(rename = "4r")]
    #[default]
    FourR,
    /// `4 r_total - 3`
    #[serde(rename = "4r-3")]
    FourRMinus3,
    Fixed(usize),
}

impl NTildeRule {
    pub fn target(&self, r_total: usize) -> usize {
        match *self {
            NTildeRule::FourR => 4 * r_total,
            NTildeRule::FourRMinus3 => (4 * r_total).saturating_sub(3),
            NTildeRule::Fixed(n) => n,
        }
    }
}

/// `n_tilde x n_tilde` sub-lattice of a fine grid with stride `M`.
///
/// Coarse index `p` maps to fine index `M p`. In strict mode the last coarse
/// index maps to the last fine index; in relaxed mode it may lie beyond it,
/// on the continuation of the fine lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseGrid {
    fine: FineGrid,
    n_tilde: usize,
    mode: CoarseMode,
    scale: usize,
}

impl CoarseGrid {
    pub fn fine(&self) -> &FineGrid {
        &self.fine
    }

    pub fn n_tilde(&self) -> usize {
        self.n_tilde
    }

    pub fn mode(&self) -> CoarseMode {
        self.mode
    }

    /// Stride `M` between coarse points, in fine-grid steps.
    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn fine_index(&self, p: usize) -> usize {
        p * self.scale
    }

    pub fn x(&self, q: usize) -> f64 {
        let f = &self.fine;
        let fi = self.fine_index(q);
        if fi < f.n() {
            f.x(fi)
        } else {
            f.domain().x_min + fi as f64 * f.spacing()
        }
    }

    pub fn y(&self, p: usize) -> f64 {
        let f = &self.fine;
        let fi = self.fine_index(p);
        if fi < f.n() {
            f.y(fi)
        } else {
            f.domain().y_min + fi as f64 * f.spacing()
        }
    }

    /// Whether every interior basis center of `geometry` is a coarse point.
    pub fn nests_centers(&self, geometry: &LevelGeometry) -> bool {
        let n = self.fine.n();
        let segs = geometry.r_interior() - 1;
        if !(n - 1).is_multiple_of(segs) {
            return false;
        }
        ((n - 1) / segs).is_multiple_of(self.scale)
    }
}

/// Build the coarse grid for Fourier interpolation of `geometry`'s variance.
///
/// Strict mode with one of the `4r` rules picks the admissible `n_tilde`
/// closest to the rule's target, preferring values whose coarse grid also
/// contains the interior centers; with `NTildeRule::Fixed` the value must be
/// admissible as given.
pub fn make_coarse_grid(
    fine: &FineGrid,
    geometry: &LevelGeometry,
    rule: NTildeRule,
    mode: CoarseMode,
) -> Result<CoarseGrid> {
    let n = fine.n();
    let min = 2 * geometry.r_total() + 1;
    let target = rule.target(geometry.r_total());
    if target < min {
        return Err(Error::SubNyquist {
            n_tilde: target,
            min,
        });
    }
    if target >= n {
        return Err(Error::InvalidGrid(format!(
            "coarse side {target} must be smaller than the fine side {n}"
        )));
    }
    match mode {
        CoarseMode::Relaxed => {
            let scale = (n - 1).div_ceil(target - 1);
            Ok(CoarseGrid {
                fine: *fine,
                n_tilde: target,
                mode,
                scale,
            })
        }
        CoarseMode::Strict => {
            if !geometry.centers_on_grid(fine) {
                return Err(Error::CentersOffGrid {
                    n,
                    r_interior: geometry.r_interior(),
                });
            }
            let n_tilde = match rule {
                NTildeRule::Fixed(t) => {
                    if !(n - 1).is_multiple_of(t - 1) || (n - 1) / (t - 1) < 2 {
                        return Err(Error::NoIntegerScale { n, n_tilde: t });
                    }
                    t
                }
                _ => pick_strict_n_tilde(n, min, target, geometry)
                    .ok_or(Error::NoIntegerScale { n, n_tilde: target })?,
            };
            Ok(CoarseGrid {
                fine: *fine,
                n_tilde,
                mode,
                scale: (n - 1) / (n_tilde - 1),
            })
        }
    }
}

fn pick_strict_n_tilde(
    n: usize,
    min: usize,
    target: usize,
    geometry: &LevelGeometry,
) -> Option<usize> {
    let segs = geometry.r_interior() - 1;
    let center_stride = (n - 1) / segs;
    let candidates: Vec<(usize, bool)> = (2..=(n - 1) / (min - 1).max(1))
        .filter(|m| (n - 1).is_multiple_of(*m))
        .map(|m| ((n - 1) / m + 1, center_stride.is_multiple_of(m)))
        .filter(|&(t, _)| t >= min)
        .collect();
    let closest = |nested_only: bool| {
        candidates
            .iter()
            .filter(|c| !nested_only || c.1)
            .min_by_key(|c| (c.0.abs_diff(target), std::cmp::Reverse(c.0)))
            .map(|c| c.0)
    };
    closest(true).or_else(|| closest(false))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn application_level_geometry() {
        let d = Domain::square(-1.0, 1.0).unwrap();
        let g = make_level_geometry(d, 25, 10, DEFAULT_OVERLAP).unwrap();
        assert_eq!(g.r_total(), 45);
        assert!((g.delta() - 2.0 / 24.0).abs() < 1e-15);
        assert!((g.gamma() - 2.5 * 2.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn two_centers_sit_on_corners() {
        let d = Domain::square(0.0, 1.0).unwrap();
        let g = make_level_geometry(d, 2, 0, 2.5).unwrap();
        assert_eq!(g.delta(), 1.0);
        assert_eq!(g.center(0, 0), [0.0, 0.0]);
        assert_eq!(g.center(0, 1), [1.0, 0.0]);
        assert_eq!(g.center(1, 0), [0.0, 1.0]);
        assert_eq!(g.center(1, 1), [1.0, 1.0]);
    }

    #[test]
    fn application_scale_count() {
        let d = Domain::square(0.0, 90.0).unwrap();
        let g = make_level_geometry(d, 193, 10, 2.5).unwrap();
        assert_eq!(g.r_total(), 213);
        assert_eq!(g.n_basis(), 45_369);
        let total: usize = [25, 49, 97, 193]
            .iter()
            .map(|&r| make_level_geometry(d, r, 10, 2.5).unwrap().n_basis())
            .sum();
        assert_eq!(total, 65_844);
    }

    #[test]
    fn rejects_bad_geometry() {
        let d = Domain::square(0.0, 1.0).unwrap();
        assert!(matches!(
            make_level_geometry(d, 1, 0, 2.5),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(make_level_geometry(d, 5, 0, 0.0).is_err());
        assert!(Domain::new(1.0, 0.0, 0.0, 1.0).is_err());
        let rect = Domain::new(0.0, 2.0, 0.0, 1.0).unwrap();
        assert!(matches!(
            make_level_geometry(rect, 5, 0, 2.5),
            Err(Error::NonSquareDomain { .. })
        ));
    }

    #[test]
    fn fine_grid_corners_and_spacing() {
        let d = Domain::square(-1.0, 1.0).unwrap();
        let f = FineGrid::new(d, 500).unwrap();
        assert_eq!(f.len(), 250_000);
        assert_eq!(f.point(0, 0), [-1.0, -1.0]);
        assert_eq!(f.point(499, 499), [1.0, 1.0]);
        let h = f.spacing();
        let tol = 8.0 * f64::EPSILON * 1.0;
        for j in 0..499 {
            assert!(((f.x(j + 1) - f.x(j)) - h).abs() <= tol);
        }
    }

    #[test]
    fn strict_coarse_grid_scale() {
        let d = Domain::square(0.0, 1.0).unwrap();
        let fine = FineGrid::new(d, 501).unwrap();
        let geo = make_level_geometry(d, 26, 10, 2.5).unwrap();
        let c = make_coarse_grid(&fine, &geo, NTildeRule::Fixed(101), CoarseMode::Strict).unwrap();
        assert_eq!(c.scale(), 5);
        assert_eq!(c.n_tilde(), 101);
        assert_eq!(c.x(0), fine.x(0));
        assert_eq!(c.x(100).to_bits(), fine.x(500).to_bits());
        assert_eq!(c.y(100).to_bits(), fine.y(500).to_bits());
    }

    #[test]
    fn sub_nyquist_rejected() {
        let d = Domain::square(-1.0, 1.0).unwrap();
        let fine = FineGrid::new(d, 500).unwrap();
        let geo = make_level_geometry(d, 25, 10, 2.5).unwrap();
        for mode in [CoarseMode::Strict, CoarseMode::Relaxed] {
            let err = make_coarse_grid(&fine, &geo, NTildeRule::Fixed(80), mode).unwrap_err();
            assert!(matches!(
                err,
                Error::SubNyquist {
                    n_tilde: 80,
                    min: 91
                }
            ));
        }
    }

    #[test]
    fn relaxed_four_r() {
        let d = Domain::square(-1.0, 1.0).unwrap();
        let fine = FineGrid::new(d, 500).unwrap();
        let geo = make_level_geometry(d, 25, 10, 2.5).unwrap();
        let c = make_coarse_grid(&fine, &geo, NTildeRule::FourR, CoarseMode::Relaxed).unwrap();
        assert_eq!(c.n_tilde(), 180);
        assert_eq!(c.scale(), 3);
        assert!(c.fine_index(179) >= 499);
    }

    #[test]
    fn strict_without_integer_scale_fails() {
        let d = Domain::square(0.0, 1.0).unwrap();
        let fine = FineGrid::new(d, 501).unwrap();
        let geo = make_level_geometry(d, 26, 10, 2.5).unwrap();
        let err = make_coarse_grid(&fine, &geo, NTildeRule::Fixed(100), CoarseMode::Strict);
        assert!(matches!(err, Err(Error::NoIntegerScale { .. })));
    }

    #[test]
    fn strict_default_rule_nests() {
        // 1153-point application grid, coarsest level
        let d = Domain::square(0.0, 90.0).unwrap();
        let fine = FineGrid::new(d, 1153).unwrap();
        let geo = make_level_geometry(d, 25, 10, 2.5).unwrap();
        let c = make_coarse_grid(&fine, &geo, NTildeRule::FourR, CoarseMode::Strict).unwrap();
        assert_eq!((c.n() - 1) % (c.n_tilde() - 1), 0);
        assert!(c.n_tilde() > 2 * 45);
        assert!(c.nests_centers(&geo));
        assert_eq!(c.n_tilde(), 193);
    }

    impl CoarseGrid {
        fn n(&self) -> usize {
            self.fine.n()
        }
    }
}
