//! Partial-linear model `Y = r(X) + Z^T beta + eps` with a flat prior on `beta`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{
    check_test_schema, column_means, draws_matrix, linear_design, new_forest, save_slot, stream, total_iterations,
    FitConfig, FittedModel, ModelInfo, ModelKind, SavedDraw,
};
use crate::error::{Error, Result};
use crate::preprocess::{fit_transforms, OutcomeScaler, Table};
use crate::priors::{estimate_sigma_hat, Hypers};

#[derive(Debug, Clone)]
pub struct GbartFitResult {
    /// Forest draws on the outcome scale, `num_save x N` (includes the level).
    pub r_train: DMatrix<f64>,
    pub eta_train: DMatrix<f64>,
    pub mu_train: DMatrix<f64>,
    pub r_test: DMatrix<f64>,
    pub eta_test: DMatrix<f64>,
    pub mu_test: DMatrix<f64>,
    /// Coefficient draws on the outcome scale, `num_save x q`.
    pub beta: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub counts: Vec<Vec<usize>>,
    pub model: FittedModel,
}

impl GbartFitResult {
    pub fn beta_mean(&self) -> Vec<f64> {
        column_means(&self.beta)
    }

    pub fn sigma_mean(&self) -> f64 {
        self.sigma.iter().sum::<f64>() / self.sigma.len() as f64
    }
}

/// Coefficients on the outcome scale from coefficients on the scaled outcome.
pub fn unscaled_coefficients(beta: &[f64], scaler: &OutcomeScaler) -> Vec<f64> {
    beta.iter().map(|b| b * scaler.scale).collect()
}

/// Flat-prior Gaussian linear regression posterior for fixed `Z`.
#[derive(Debug, Clone)]
pub struct LinearPosterior {
    z: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl LinearPosterior {
    pub fn new(z: DMatrix<f64>) -> Result<Self> {
        let ztz = z.transpose() * &z;
        let chol = Cholesky::new(ztz).ok_or_else(|| Error::Singular("Z^T Z".into()))?;
        // Cholesky succeeds on some numerically rank-deficient inputs
        let d = chol.l_dirty().diagonal();
        let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        if !(lo > hi * 1e-7) {
            return Err(Error::Singular("Z^T Z".into()));
        }
        Ok(LinearPosterior { z, chol })
    }

    /// `(Z^T Z)^{-1} Z^T r`
    pub fn mean(&self, r: &[f64]) -> DVector<f64> {
        let ztr = self.z.transpose() * DVector::from_column_slice(r);
        self.chol.solve(&ztr)
    }

    /// Draw from `Normal((Z^T Z)^{-1} Z^T r, sigma^2 (Z^T Z)^{-1})`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, r: &[f64], sigma: f64) -> Vec<f64> {
        let q = self.z.ncols();
        let e = DVector::from_iterator(q, (0..q).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let v = self.chol.l().transpose().solve_upper_triangular(&e).expect("factor is nonsingular");
        (self.mean(r) + v * sigma).iter().copied().collect()
    }

    pub fn covariance(&self, sigma: f64) -> DMatrix<f64> {
        self.chol.inverse() * (sigma * sigma)
    }
}

/// Fits the partial-linear model with linear columns `z_columns`, which are
/// removed from the tree covariates. No intercept is added to `Z`; the forest
/// carries the level.
pub fn fit_gbart(
    train: &Table,
    outcome: &str,
    z_columns: &[String],
    test: Option<&Table>,
    config: &FitConfig,
) -> Result<GbartFitResult> {
    config.opts.validate()?;
    if z_columns.is_empty() {
        return Err(Error::InvalidArgument("at least one linear column is required".into()));
    }
    let z = linear_design(train, z_columns)?;
    let zs: Vec<&str> = z_columns.iter().map(String::as_str).collect();
    let exclude = config.exclude_with(&zs);
    let excl: Vec<&str> = exclude.iter().map(String::as_str).collect();
    let (data, transforms) = fit_transforms(train, outcome, config.scale_mode, &excl)?;
    let x_test = check_test_schema(&transforms, test)?;
    let z_test = test.map(|t| linear_design(t, z_columns)).transpose()?;
    let post = LinearPosterior::new(z.clone())?;

    let n = data.x.nrows();
    let q = z.ncols();
    let sigma_hat = match config.sigma_hat {
        Some(s) => s,
        None => {
            let xz = DMatrix::from_fn(n, data.x.ncols() + q, |i, j| {
                if j < data.x.ncols() {
                    data.x[(i, j)]
                } else {
                    z[(i, j - data.x.ncols())]
                }
            });
            estimate_sigma_hat(&xz, &data.y)
        }
    };
    let hypers = Hypers { sigma_hat, ..config.hypers.clone() };
    let opts = config.opts.clone();
    let mut forest = new_forest(hypers.clone(), opts.clone(), data.x.ncols(), config.seed, 0)?;
    let mut rng = stream(config.seed, 0);
    let sc = data.scaler;
    let y = &data.y;

    let mut r = forest.do_predict(&data.x)?;
    let mut resid = vec![0.0; n];
    let mut draws = Vec::with_capacity(opts.num_save);
    let (mut r_rows, mut eta_rows, mut beta_rows) = (Vec::new(), Vec::new(), Vec::new());
    for iter in 0..total_iterations(&opts) {
        for i in 0..n {
            resid[i] = y[i] - r[i];
        }
        let beta = post.draw(&mut rng, &resid, forest.get_sigma());
        let eta: Vec<f64> = (0..n).map(|i| (0..q).map(|k| z[(i, k)] * beta[k]).sum()).collect();
        for i in 0..n {
            resid[i] = y[i] - eta[i];
        }
        r = forest.do_gibbs(&data.x, &resid, &data.x, 1)?.row(0).iter().copied().collect();
        if save_slot(&opts, iter).is_none() {
            continue;
        }
        let b = unscaled_coefficients(&beta, &sc);
        r_rows.push(r.iter().map(|v| sc.unscale_one(*v)).collect::<Vec<_>>());
        eta_rows.push((0..n).map(|i| (0..q).map(|k| z[(i, k)] * b[k]).sum()).collect::<Vec<f64>>());
        beta_rows.push(b);
        draws.push(SavedDraw {
            sigma: forest.get_sigma() * sc.scale,
            forests: if opts.cache_trees { vec![forest.trees().to_vec()] } else { vec![] },
            counts: vec![forest.get_counts()],
            coefficients: beta,
        });
    }

    let saved = draws.len();
    let r_train = draws_matrix(&r_rows, saved, n);
    let eta_train = draws_matrix(&eta_rows, saved, n);
    let mu_train = &r_train + &eta_train;
    let model = FittedModel {
        info: ModelInfo {
            kind: ModelKind::Gbart,
            outcome: outcome.to_string(),
            hypers: vec![hypers],
            opts,
            transforms,
            scaler: sc,
            linear_columns: z_columns.to_vec(),
            outcome_levels: vec![],
        },
        draws,
    };
    let s = model.draws.len();
    let (r_test, eta_test, mu_test) = match (&x_test, &z_test) {
        (Some(xt), Some(zt)) if model.trees_cached() => {
            let pred = model.predict_design(xt, zt)?;
            let rt = pred.component("r").cloned().unwrap_or_default();
            let et = pred.component("eta").cloned().unwrap_or_default();
            (rt, et, pred.mu)
        }
        _ => (DMatrix::zeros(s, 0), DMatrix::zeros(s, 0), DMatrix::zeros(s, 0)),
    };
    Ok(GbartFitResult {
        r_train,
        eta_train,
        mu_train,
        r_test,
        eta_test,
        mu_test,
        beta: draws_matrix(&beta_rows, saved, q),
        sigma: model.sigma_draws(),
        counts: model.counts(0),
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::Column;
    use crate::sampler::Opts;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ols_limit_with_intercept_column() {
        let post = LinearPosterior::new(DMatrix::from_element(5, 1, 1.0)).unwrap();
        let r = [1.0, 2.0, 3.0, 4.0, 10.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = post.draw(&mut rng, &r, 1e-12);
        assert!((b[0] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn singular_design_is_rejected() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(LinearPosterior::new(z), Err(Error::Singular(_))));
    }

    #[test]
    fn draw_moments() {
        let z = DMatrix::from_fn(30, 2, |i, j| if j == 0 { 1.0 } else { (i as f64 * 0.37).fract() });
        let r: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let post = LinearPosterior::new(z).unwrap();
        let mean = post.mean(&r);
        let cov = post.covariance(0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let mut s1 = DVector::zeros(2);
        let mut s2 = DMatrix::zeros(2, 2);
        for _ in 0..n {
            let b = DVector::from_vec(post.draw(&mut rng, &r, 0.7));
            s2 += &b * b.transpose();
            s1 += b;
        }
        let m = &s1 / n as f64;
        let c = &s2 / n as f64 - &m * m.transpose();
        for k in 0..2 {
            let se = (cov[(k, k)] / n as f64).sqrt();
            assert!((m[k] - mean[k]).abs() < 3.0 * se, "mean {k}");
        }
        for (a, b) in c.iter().zip(cov.iter()) {
            // variance of a sample covariance is about 2 cov^2 / n at most
            assert!((a - b).abs() < 3.0 * (2.0 / n as f64).sqrt() * cov.amax());
        }
    }

    #[test]
    fn identity_per_draw() {
        let n = 50;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.618).fract()).collect();
        let z: Vec<f64> = (0..n).map(|i| (i as f64 * 0.377).fract()).collect();
        let y: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a.sin() + 3.0 * b).collect();
        let t = Table::new(vec![Column::numeric("x", x), Column::numeric("z", z), Column::numeric("y", y)]).unwrap();
        let cfg = FitConfig { opts: Opts { num_burn: 10, num_save: 5, ..Opts::default() }, ..FitConfig::with_seed(1) };
        let fit = fit_gbart(&t, "y", &["z".to_string()], Some(&t), &cfg).unwrap();
        assert!((&fit.mu_train - (&fit.r_train + &fit.eta_train)).amax() <= 1e-12);
        assert!((&fit.mu_test - &fit.mu_train).amax() <= 1e-10);
        assert_eq!(fit.beta.shape(), (5, 1));
    }
}
