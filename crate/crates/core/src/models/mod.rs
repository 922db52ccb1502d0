//! Model drivers built on [`ForestHandle`](crate::forest::ForestHandle).

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::ForestHandle;
use crate::preprocess::{OutcomeScaler, ScaleMode, Table, TransformSet};
use crate::priors::{estimate_sigma_hat, Hypers};
use crate::sampler::Opts;
use crate::trees::{forest_predict, SoftTree};

pub mod gbart;
pub mod probit;
pub mod regression;
pub mod truncnorm;
pub mod vc;

pub use gbart::{fit_gbart, GbartFitResult};
pub use probit::{fit_probit, ProbitFitResult};
pub use regression::{fit_regression, predict_regression, FitResult};
pub use vc::{fit_bcf, fit_vc, BcfFitResult, VcFitResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Regression,
    Probit,
    Vc,
    Gbart,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Regression => "regression",
            ModelKind::Probit => "probit",
            ModelKind::Vc => "vc",
            ModelKind::Gbart => "gbart",
        }
    }
}

/// Everything a fit needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Prior settings. `hypers.sigma_hat` is ignored unless `sigma_hat` is set.
    pub hypers: Hypers,
    /// Noise-scale anchor on the scaled outcome; estimated from the data when absent.
    pub sigma_hat: Option<f64>,
    /// Prior settings of the coefficient forest in varying-coefficient models.
    /// Defaults to `hypers` with the leaf anchor divided by the root mean square of `Z`.
    pub beta_hypers: Option<Hypers>,
    pub opts: Opts,
    pub scale_mode: ScaleMode,
    /// Columns left out of the tree covariates.
    pub exclude: Vec<String>,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            hypers: Hypers::default(),
            sigma_hat: None,
            beta_hypers: None,
            opts: Opts::default(),
            scale_mode: ScaleMode::Standardize,
            exclude: Vec::new(),
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn with_seed(seed: u64) -> Self {
        FitConfig { seed, ..FitConfig::default() }
    }

    pub(crate) fn resolve_hypers(&self, x: &DMatrix<f64>, y: &[f64]) -> Hypers {
        let sigma_hat = self.sigma_hat.unwrap_or_else(|| estimate_sigma_hat(x, y));
        Hypers { sigma_hat, ..self.hypers.clone() }
    }

    pub(crate) fn exclude_with(&self, extra: &[&str]) -> Vec<String> {
        let mut out = self.exclude.clone();
        for e in extra {
            if !out.iter().any(|c| c == e) {
                out.push(e.to_string());
            }
        }
        out
    }
}

/// One saved iteration: noise scale on the outcome scale, the forests
/// (empty when trees are not cached), per-forest split counts and any
/// linear coefficients on the scaled outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedDraw {
    pub sigma: f64,
    pub forests: Vec<Vec<SoftTree>>,
    pub counts: Vec<Vec<usize>>,
    pub coefficients: Vec<f64>,
}

/// What is needed to reproduce predictions from a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub kind: ModelKind,
    pub outcome: String,
    /// Hyperparameters of each forest, in forest order.
    pub hypers: Vec<Hypers>,
    pub opts: Opts,
    pub transforms: TransformSet,
    pub scaler: OutcomeScaler,
    /// Columns entering linearly (varying-coefficient `Z` or partial-linear design).
    pub linear_columns: Vec<String>,
    /// Labels of outcome 0 and 1 for probit models.
    pub outcome_levels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub info: ModelInfo,
    pub draws: Vec<SavedDraw>,
}

/// Named draw matrices (`num_save x N`) produced by a model at new rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Mean function on the outcome scale (success probability for probit).
    pub mu: DMatrix<f64>,
    /// Model-specific components: `r` (probit latent, partial-linear forest),
    /// `alpha`, `beta` (varying coefficient), `eta` (linear part).
    pub components: Vec<(String, DMatrix<f64>)>,
}

impl Prediction {
    pub fn mu_mean(&self) -> Vec<f64> {
        column_means(&self.mu)
    }

    pub fn component(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.components.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }
}

pub fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    let r = m.nrows() as f64;
    (0..m.ncols()).map(|j| m.column(j).sum() / r).collect()
}

impl FittedModel {
    pub fn trees_cached(&self) -> bool {
        self.info.opts.cache_trees && self.draws.iter().all(|d| !d.forests.is_empty())
    }

    pub fn sigma_draws(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.sigma).collect()
    }

    /// Per-iteration split counts of forest `f`.
    pub fn counts(&self, f: usize) -> Vec<Vec<usize>> {
        self.draws.iter().map(|d| d.counts.get(f).cloned().unwrap_or_default()).collect()
    }

    pub fn num_forests(&self) -> usize {
        self.info.hypers.len()
    }

    /// Covariate matrix of `table` under the training transforms.
    pub fn design(&self, table: &Table) -> Result<DMatrix<f64>> {
        self.info.transforms.apply(table)
    }

    /// Linear design of `table` (raw values of the linear columns).
    pub fn linear_design(&self, table: &Table) -> Result<DMatrix<f64>> {
        linear_design(table, &self.info.linear_columns)
    }

    /// Evaluates every cached draw at the rows of `table`.
    pub fn predict(&self, table: &Table) -> Result<Prediction> {
        if !self.trees_cached() {
            return Err(Error::TreesNotCached);
        }
        let x = self.design(table)?;
        let z = self.linear_design(table)?;
        self.predict_design(&x, &z)
    }

    /// As [`Self::predict`] on an already transformed design.
    pub fn predict_design(&self, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<Prediction> {
        if !self.trees_cached() {
            return Err(Error::TreesNotCached);
        }
        let n = x.nrows();
        let s = self.draws.len();
        let sc = self.info.scaler;
        let mut mu = DMatrix::zeros(s, n);
        match self.info.kind {
            ModelKind::Regression => {
                for (i, d) in self.draws.iter().enumerate() {
                    let f = forest_predict(&d.forests[0], x)?;
                    for j in 0..n {
                        mu[(i, j)] = sc.unscale_one(f[j]);
                    }
                }
                Ok(Prediction { mu, components: vec![] })
            }
            ModelKind::Probit => {
                let mut r = DMatrix::zeros(s, n);
                for (i, d) in self.draws.iter().enumerate() {
                    let f = forest_predict(&d.forests[0], x)?;
                    for j in 0..n {
                        r[(i, j)] = f[j];
                        mu[(i, j)] = probit::probability(f[j]);
                    }
                }
                Ok(Prediction { mu, components: vec![("r".into(), r)] })
            }
            ModelKind::Vc => {
                let zc = single_column(z)?;
                let mut a = DMatrix::zeros(s, n);
                let mut b = DMatrix::zeros(s, n);
                for (i, d) in self.draws.iter().enumerate() {
                    let fa = forest_predict(&d.forests[0], x)?;
                    let fb = forest_predict(&d.forests[1], x)?;
                    for j in 0..n {
                        a[(i, j)] = sc.unscale_one(fa[j]);
                        b[(i, j)] = fb[j] * sc.scale;
                        mu[(i, j)] = a[(i, j)] + zc[j] * b[(i, j)];
                    }
                }
                Ok(Prediction { mu, components: vec![("alpha".into(), a), ("beta".into(), b)] })
            }
            ModelKind::Gbart => {
                if z.ncols() != self.info.linear_columns.len() {
                    return Err(Error::DimensionMismatch { expected: self.info.linear_columns.len(), found: z.ncols() });
                }
                let mut r = DMatrix::zeros(s, n);
                let mut eta = DMatrix::zeros(s, n);
                for (i, d) in self.draws.iter().enumerate() {
                    let f = forest_predict(&d.forests[0], x)?;
                    let beta = gbart::unscaled_coefficients(&d.coefficients, &sc);
                    for j in 0..n {
                        r[(i, j)] = sc.unscale_one(f[j]);
                        eta[(i, j)] = (0..z.ncols()).map(|k| z[(j, k)] * beta[k]).sum();
                        mu[(i, j)] = r[(i, j)] + eta[(i, j)];
                    }
                }
                Ok(Prediction { mu, components: vec![("r".into(), r), ("eta".into(), eta)] })
            }
        }
    }
}

fn single_column(z: &DMatrix<f64>) -> Result<Vec<f64>> {
    if z.ncols() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: z.ncols() });
    }
    Ok(z.column(0).iter().copied().collect())
}

/// Raw numeric values of `columns`, one design column each.
pub fn linear_design(table: &Table, columns: &[String]) -> Result<DMatrix<f64>> {
    let n = table.nrows();
    let mut z = DMatrix::zeros(n, columns.len());
    for (k, name) in columns.iter().enumerate() {
        let col = table
            .column(name)
            .ok_or_else(|| Error::SchemaMismatch(format!("missing linear column `{name}`")))?;
        let v = col.numbers()?;
        for (i, x) in v.into_iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite value in column `{name}`")));
            }
            z[(i, k)] = x;
        }
    }
    Ok(z)
}

/// Independent RNG streams derived from one seed: stream 0 drives the model
/// driver itself, stream `k + 1` drives forest `k`.
pub(crate) fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

pub(crate) fn new_forest(hypers: Hypers, opts: Opts, p: usize, seed: u64, k: usize) -> Result<ForestHandle> {
    ForestHandle::with_rng(hypers, opts, p, stream(seed, k as u64 + 1))
}

/// Index of the saved draw produced by sweep `iter`, if any.
pub(crate) fn save_slot(opts: &Opts, iter: usize) -> Option<usize> {
    if iter < opts.num_burn {
        return None;
    }
    let k = iter - opts.num_burn + 1;
    (k % opts.num_thin == 0).then(|| k / opts.num_thin - 1)
}

pub(crate) fn total_iterations(opts: &Opts) -> usize {
    opts.num_burn + opts.num_save * opts.num_thin
}

pub(crate) fn check_test_schema(transforms: &TransformSet, test: Option<&Table>) -> Result<Option<DMatrix<f64>>> {
    test.map(|t| transforms.apply(t)).transpose()
}

/// Stacks `s` saved rows of length `n`; `rows` may be empty when `n` is zero.
pub(crate) fn draws_matrix(rows: &[Vec<f64>], s: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(s, n, |i, j| rows[i][j])
}
