use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use ndarray::Array2;
use rayon::prelude::*;

use crate::basis::{apply_normalization, regression_matrix, SparseBasisMatrix, VarianceField};
use crate::error::{Error, Result};
use crate::grid::FineGrid;
use crate::sar::SarSystem;

use super::normalize::{level_variance, LevelNormalization};
use super::sampling::Dataset;
use super::spec::{select_methods, LevelMethod, ModelSpec};

/// Fitted coefficients together with everything needed to predict.
#[derive(Debug, Clone)]
pub struct FittedModel {
    spec: ModelSpec,
    side: usize,
    normalizations: Vec<LevelNormalization>,
    phi: Vec<SparseBasisMatrix>,
    beta: Vec<f64>,
    coef: Vec<f64>,
}

impl FittedModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Stacked basis coefficients, level by level.
    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn methods(&self) -> Vec<LevelMethod> {
        self.normalizations.iter().map(|n| n.method).collect()
    }

    pub fn normalizations(&self) -> &[LevelNormalization] {
        &self.normalizations
    }

    pub fn fields(&self) -> Vec<&VarianceField> {
        self.normalizations.iter().map(|n| &n.field).collect()
    }

    /// Normalized regression matrices on the full fine grid.
    pub fn basis_blocks(&self) -> &[SparseBasisMatrix] {
        &self.phi
    }

    fn prediction_at(&self, k: usize) -> f64 {
        let mut y = self.beta[0];
        if let Some(x) = self.spec.covariates() {
            for (c, b) in self.beta[1..].iter().enumerate() {
                y += x[[k, c]] * b;
            }
        }
        let offsets = self.spec.offsets();
        for (l, phi) in self.phi.iter().enumerate() {
            let (cols, vals) = phi.row(k);
            let c = &self.coef[offsets[l]..offsets[l + 1]];
            for (&j, &v) in cols.iter().zip(vals) {
                y += v * c[j as usize];
            }
        }
        y
    }

    /// Prediction at the observed locations of `data`.
    pub fn fitted_values(&self, data: &Dataset) -> Vec<f64> {
        data.observed()
            .iter()
            .map(|&k| self.prediction_at(k))
            .collect()
    }
}

fn design(spec: &ModelSpec, n_locations: usize) -> Result<usize> {
    match spec.covariates() {
        None => Ok(1),
        Some(x) if x.nrows() == n_locations => Ok(1 + x.ncols()),
        Some(x) => Err(Error::ShapeMismatch(format!(
            "covariates have {} rows for {n_locations} grid locations",
            x.nrows()
        ))),
    }
}

fn covariate_row(spec: &ModelSpec, k: usize, p: usize) -> Vec<f64> {
    let mut row = vec![1.0; p];
    if let Some(x) = spec.covariates() {
        for c in 1..p {
            row[c] = x[[k, c - 1]];
        }
    }
    row
}

/// Normalize every level on the full grid, then fit coefficients by
/// generalized least squares.
pub fn fit(data: &Dataset, spec: &ModelSpec, fine: &FineGrid) -> Result<FittedModel> {
    if data.side() != fine.n() {
        return Err(Error::ShapeMismatch(format!(
            "data cover a {0}x{0} grid but the model grid has side {1}",
            data.side(),
            fine.n()
        )));
    }
    if data.observed().is_empty() {
        return Err(Error::InvalidArgument("no observed locations".into()));
    }
    let methods = select_methods(spec, fine);
    let levels: Vec<(LevelNormalization, SparseBasisMatrix)> = spec
        .levels()
        .par_iter()
        .zip(spec.kappa2().par_iter())
        .zip(methods.par_iter())
        .enumerate()
        .map(|(l, ((geo, &k2), &m))| {
            let mut norm =
                level_variance(geo, k2, fine, m, spec.n_tilde_rule(), spec.coarse_mode())
                    .map_err(|e| with_level(e, l))?;
            norm.field = norm.field.with_level(l);
            let phi = apply_normalization(&regression_matrix(fine, geo)?, &norm.field)?;
            Ok((norm, phi))
        })
        .collect::<Result<_>>()?;
    let (normalizations, phi): (Vec<_>, Vec<_>) = levels.into_iter().unzip();
    fit_normalized(data, spec, normalizations, phi)
}

fn with_level(e: Error, level: usize) -> Error {
    match e {
        Error::NonPositiveVariance { i, j, value, .. } => {
            Error::NonPositiveVariance { level, i, j, value }
        }
        other => other,
    }
}

/// Fit with already normalized full-grid regression matrices.
pub fn fit_normalized(
    data: &Dataset,
    spec: &ModelSpec,
    normalizations: Vec<LevelNormalization>,
    phi: Vec<SparseBasisMatrix>,
) -> Result<FittedModel> {
    let n_loc = data.side() * data.side();
    let p = design(spec, n_loc)?;
    let offsets = spec.offsets();
    let r_all = spec.n_basis();
    let tau2 = spec.tau2();
    if phi.len() != spec.n_levels() || phi.iter().any(|m| m.n_rows() != n_loc) {
        return Err(Error::ShapeMismatch(
            "regression matrices do not match the data grid".into(),
        ));
    }

    // stacked observation rows
    let obs = data.observed();
    let m = obs.len();
    let mut row_ptr = Vec::with_capacity(m + 1);
    let mut cols: Vec<usize> = Vec::new();
    let mut vals: Vec<f64> = Vec::new();
    row_ptr.push(0);
    for &k in obs {
        for (l, mat) in phi.iter().enumerate() {
            let (c, v) = mat.row(k);
            cols.extend(c.iter().map(|&j| j as usize + offsets[l]));
            vals.extend_from_slice(v);
        }
        row_ptr.push(cols.len());
    }

    // column access
    let mut col_ptr = vec![0usize; r_all + 1];
    for &c in &cols {
        col_ptr[c + 1] += 1;
    }
    for j in 0..r_all {
        col_ptr[j + 1] += col_ptr[j];
    }
    let mut next = col_ptr.clone();
    let mut col_rows = vec![0usize; cols.len()];
    let mut col_vals = vec![0.0; cols.len()];
    for i in 0..m {
        for e in row_ptr[i]..row_ptr[i + 1] {
            let c = cols[e];
            col_rows[next[c]] = i;
            col_vals[next[c]] = vals[e];
            next[c] += 1;
        }
    }

    // Joint system [[G, Phi^T X], [X^T Phi, X^T X]] [c; beta] = [Phi^T Z; X^T Z]
    // with G = Phi^T Phi + tau2 blockdiag(Q_l / alpha_l). Eliminating c
    // leaves X^T M^{-1} X beta = X^T M^{-1} Z for M = Phi Sigma Phi^T + tau2 I,
    // so beta is the GLS estimate; no step divides by tau2.
    let z = data.observed_values();
    let x_rows: Vec<Vec<f64>> = obs.iter().map(|&k| covariate_row(spec, k, p)).collect();
    let dim = r_all + p;
    let mut rhs = Mat::<f64>::zeros(dim, 1);
    let mut phitx = vec![0.0; r_all * p];
    for i in 0..m {
        let x = &x_rows[i];
        for e in row_ptr[i]..row_ptr[i + 1] {
            let c = cols[e];
            for a in 0..p {
                phitx[c * p + a] += vals[e] * x[a];
            }
            rhs[(c, 0)] += vals[e] * z[i];
        }
        for a in 0..p {
            rhs[(r_all + a, 0)] += x[a] * z[i];
        }
    }

    let precisions: Vec<_> = spec
        .levels()
        .iter()
        .zip(spec.kappa2())
        .map(|(g, &k2)| SarSystem::new(g.r_total(), k2).map(|s| s.precision()))
        .collect::<Result<_>>()?;
    let mut triplets = Vec::new();
    let mut acc = vec![0.0; r_all];
    let mut seen = vec![usize::MAX; r_all];
    let mut pattern = Vec::new();
    for l in 0..spec.n_levels() {
        let q = &precisions[l];
        let w = tau2 / spec.alpha()[l];
        for jl in 0..q.dim() {
            let j = offsets[l] + jl;
            pattern.clear();
            let mut touch = |c: usize, v: f64, pattern: &mut Vec<usize>| {
                if c < j {
                    return;
                }
                if seen[c] != j {
                    seen[c] = j;
                    acc[c] = 0.0;
                    pattern.push(c);
                }
                acc[c] += v;
            };
            for e in col_ptr[j]..col_ptr[j + 1] {
                let (i, a) = (col_rows[e], col_vals[e]);
                for f in row_ptr[i]..row_ptr[i + 1] {
                    touch(cols[f], a * vals[f], &mut pattern);
                }
            }
            let (qc, qv) = q.row(jl);
            for (&c, &v) in qc.iter().zip(qv) {
                touch(offsets[l] + c, w * v, &mut pattern);
            }
            for &c in &pattern {
                triplets.push(Triplet::new(c, j, acc[c]));
            }
            for a in 0..p {
                let v = phitx[j * p + a];
                if v != 0.0 {
                    triplets.push(Triplet::new(r_all + a, j, v));
                }
            }
        }
    }
    for a in 0..p {
        for b in 0..=a {
            let v: f64 = x_rows.iter().map(|x| x[a] * x[b]).sum();
            triplets.push(Triplet::new(r_all + a, r_all + b, v));
        }
    }
    let g =
        SparseColMat::<usize, f64>::try_new_from_triplets(dim, dim, &triplets).map_err(|e| {
            Error::SingularSystem(format!("could not assemble the normal equations: {e:?}"))
        })?;
    drop(triplets);
    let llt = g.sp_cholesky(Side::Lower).map_err(|e| {
        Error::SingularSystem(format!("normal equations are not positive definite: {e}"))
    })?;
    llt.solve_in_place(rhs.as_mut());
    if (0..dim).any(|k| !rhs[(k, 0)].is_finite()) {
        return Err(Error::SingularSystem("solution is not finite".into()));
    }
    let coef: Vec<f64> = (0..r_all).map(|c| rhs[(c, 0)]).collect();
    let beta: Vec<f64> = (0..p).map(|a| rhs[(r_all + a, 0)]).collect();
    Ok(FittedModel {
        spec: spec.clone(),
        side: data.side(),
        normalizations,
        phi,
        beta,
        coef,
    })
}

/// Kriging surface on the fine grid the model was fitted on.
pub fn predict(model: &FittedModel, fine: &FineGrid) -> Result<Array2<f64>> {
    if fine.n() != model.side {
        return Err(Error::ShapeMismatch(format!(
            "model was normalized on a grid of side {} but prediction asks for {}",
            model.side,
            fine.n()
        )));
    }
    let n = fine.n();
    let mut out = vec![0.0; n * n];
    out.par_iter_mut()
        .enumerate()
        .for_each(|(k, y)| *y = model.prediction_at(k));
    Array2::from_shape_vec((n, n), out).map_err(|e| Error::ShapeMismatch(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use crate::model::sampling::sample_mar;
    use crate::model::spec::NormalizeMethod;

    fn small_spec(method: NormalizeMethod, tau2: f64) -> (ModelSpec, FineGrid) {
        let d = Domain::square(0.0, 1.0).unwrap();
        let spec = ModelSpec::multiresolution(d, &[4, 7], 2, 2.5, 0.2, tau2, method).unwrap();
        (spec, FineGrid::new(d, 19).unwrap())
    }

    #[test]
    fn zero_data_gives_zero_fit() {
        let (spec, fine) = small_spec(NormalizeMethod::Exact, 0.1);
        let data = sample_mar(&Array2::zeros((19, 19)), 0.5, 3).unwrap();
        let m = fit(&data, &spec, &fine).unwrap();
        assert!(m.beta().iter().all(|&b| b == 0.0));
        assert!(m.coefficients().iter().all(|&c| c == 0.0));
        assert_eq!(m.coefficients().len(), spec.n_basis());
    }

    #[test]
    fn near_interpolation_of_basis_data() {
        // no buffer: every basis function touches the grid
        let d = Domain::square(0.0, 1.0).unwrap();
        let spec = ModelSpec::multiresolution(d, &[5], 0, 2.5, 0.5, 1e-10, NormalizeMethod::Exact)
            .unwrap();
        let fine = FineGrid::new(d, 25).unwrap();
        let geo = &spec.levels()[0];
        let norm = level_variance(
            geo,
            0.5,
            &fine,
            LevelMethod::Exact,
            Default::default(),
            Default::default(),
        )
        .unwrap();
        let phi =
            apply_normalization(&regression_matrix(&fine, geo).unwrap(), &norm.field).unwrap();
        let c_star: Vec<f64> = (0..spec.n_basis())
            .map(|k| ((k * 37 % 11) as f64 - 5.0) / 5.0)
            .collect();
        let z = Array2::from_shape_fn((25, 25), |(i, j)| {
            let (cols, vals) = phi.row(i * 25 + j);
            cols.iter()
                .zip(vals)
                .map(|(&c, &v)| v * c_star[c as usize])
                .sum::<f64>()
        });
        let data = Dataset::new(z.clone(), (0..625).collect()).unwrap();
        let m = fit(&data, &spec, &fine).unwrap();
        let fitted = m.fitted_values(&data);
        let scale = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (k, f) in fitted.iter().enumerate() {
            assert!((f - z[[k / 25, k % 25]]).abs() <= 1e-6 * scale, "{k}: {f}");
        }
    }

    #[test]
    fn matches_dense_gls_in_covariance_form() {
        // beta = (X^T M^-1 X)^-1 X^T M^-1 Z, c = Sigma Phi^T M^-1 (Z - X beta)
        use nalgebra::{DMatrix, DVector};
        let (spec, fine) = small_spec(NormalizeMethod::Exact, 0.3);
        let z = Array2::from_shape_fn((19, 19), |(i, j)| ((i * 3 + j * j) % 7) as f64 / 3.0);
        let data = sample_mar(&z, 0.5, 9).unwrap();
        let model = fit(&data, &spec, &fine).unwrap();

        let obs = data.observed();
        let r = spec.n_basis();
        let offsets = spec.offsets();
        let phi = DMatrix::from_fn(obs.len(), r, |i, c| {
            let l = (0..spec.n_levels()).find(|&l| c < offsets[l + 1]).unwrap();
            model.basis_blocks()[l].get(obs[i], c - offsets[l])
        });
        let mut sigma = DMatrix::zeros(r, r);
        for (l, g) in spec.levels().iter().enumerate() {
            let q = SarSystem::new(g.r_total(), spec.kappa2()[l])
                .unwrap()
                .precision()
                .to_dense();
            let n = g.n_basis();
            let qm = DMatrix::from_fn(n, n, |i, j| q[[i, j]]);
            let inv = qm.try_inverse().unwrap() * spec.alpha()[l];
            sigma
                .view_mut((offsets[l], offsets[l]), (n, n))
                .copy_from(&inv);
        }
        let m =
            &phi * &sigma * phi.transpose() + DMatrix::identity(obs.len(), obs.len()) * spec.tau2();
        let minv = m.try_inverse().unwrap();
        let x = DMatrix::from_element(obs.len(), 1, 1.0);
        let zv = DVector::from_vec(data.observed_values());
        let beta =
            (x.transpose() * &minv * &x).try_inverse().unwrap() * x.transpose() * &minv * &zv;
        let c = &sigma * phi.transpose() * &minv * (&zv - &x * &beta);
        assert!((model.beta()[0] - beta[0]).abs() < 1e-8 * beta[0].abs().max(1.0));
        let cmax = c.amax();
        for (a, b) in model.coefficients().iter().zip(c.iter()) {
            assert!((a - b).abs() < 1e-7 * cmax);
        }
    }

    #[test]
    fn predict_matches_fitted_and_constant_surface() {
        let (spec, fine) = small_spec(NormalizeMethod::ExactKronecker, 0.1);
        let z = Array2::from_shape_fn((19, 19), |(i, j)| (i as f64 * 0.3).sin() + 0.1 * j as f64);
        let data = Dataset::new(z, (0..361).collect()).unwrap();
        let mut m = fit(&data, &spec, &fine).unwrap();
        let surface = predict(&m, &fine).unwrap();
        let fitted = m.fitted_values(&data);
        for (k, f) in fitted.iter().enumerate() {
            assert_eq!(surface[[k / 19, k % 19]].to_bits(), f.to_bits());
        }
        m.coef.iter_mut().for_each(|c| *c = 0.0);
        m.beta = vec![2.5];
        assert!(predict(&m, &fine).unwrap().iter().all(|&v| v == 2.5));
        assert!(predict(
            &m,
            &FineGrid::new(Domain::square(0.0, 1.0).unwrap(), 20).unwrap()
        )
        .is_err());
    }

    #[test]
    fn exact_and_kronecker_fits_coincide() {
        let (spec, fine) = small_spec(NormalizeMethod::Exact, 0.1);
        let z = Array2::from_shape_fn((19, 19), |(i, j)| ((i * j) % 7) as f64 / 7.0);
        let data = sample_mar(&z, 0.4, 11).unwrap();
        let a = predict(&fit(&data, &spec, &fine).unwrap(), &fine).unwrap();
        let kspec = spec.clone().with_method(NormalizeMethod::ExactKronecker);
        let b = predict(&fit(&data, &kspec, &fine).unwrap(), &fine).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0));
        }
    }

    #[test]
    fn user_covariates_recover_a_plane() {
        let (spec, fine) = small_spec(NormalizeMethod::Exact, 0.05);
        let x = Array2::from_shape_fn((361, 1), |(k, _)| (k % 19) as f64);
        let spec = spec.with_covariates(x).unwrap();
        let z = Array2::from_shape_fn((19, 19), |(_, j)| 3.0 + 0.5 * j as f64);
        let data = Dataset::new(z, (0..361).step_by(2).collect()).unwrap();
        let m = fit(&data, &spec, &fine).unwrap();
        assert!((m.beta()[1] - 0.5).abs() < 1e-6);
        assert!((m.beta()[0] - 3.0).abs() < 1e-5);
    }

    #[test]
    fn rescaled_variance_changes_prediction_continuously() {
        let (spec, fine) = small_spec(NormalizeMethod::Exact, 0.1);
        let z = Array2::from_shape_fn((19, 19), |(i, j)| ((i + 2 * j) % 5) as f64);
        let data = sample_mar(&z, 0.5, 5).unwrap();
        let base = fit(&data, &spec, &fine).unwrap();
        let base_pred = predict(&base, &fine).unwrap();
        let mut last = f64::INFINITY;
        for g0 in [2.0, 1.1, 1.01, 1.001] {
            let phi: Vec<_> = base
                .basis_blocks()
                .iter()
                .map(|p| crate::basis::scale_matrix(p, 1.0 / f64::sqrt(g0)))
                .collect();
            let m = fit_normalized(&data, &spec, base.normalizations().to_vec(), phi).unwrap();
            let pred = predict(&m, &fine).unwrap();
            let diff = pred
                .iter()
                .zip(base_pred.iter())
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(diff < last);
            last = diff;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn rejects_mismatched_grid() {
        let (spec, _) = small_spec(NormalizeMethod::Exact, 0.1);
        let other = FineGrid::new(Domain::square(0.0, 1.0).unwrap(), 10).unwrap();
        let data = sample_mar(&Array2::zeros((19, 19)), 0.5, 3).unwrap();
        assert!(fit(&data, &spec, &other).is_err());
    }
}
