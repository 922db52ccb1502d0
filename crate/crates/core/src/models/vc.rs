//! Varying-coefficient model `Y = alpha(X) + Z beta(X) + eps` and its
//! causal special case with a binary treatment.

use nalgebra::DMatrix;

use super::{
    check_test_schema, column_means, draws_matrix, linear_design, new_forest, save_slot, total_iterations, FitConfig,
    FittedModel, ModelInfo, ModelKind, SavedDraw,
};
use crate::error::{Error, Result};
use crate::preprocess::{encode_binary, fit_transforms, Column, Table};
use crate::priors::{estimate_sigma_hat, Hypers};

#[derive(Debug, Clone)]
pub struct VcFitResult {
    /// Draws on the outcome scale, `num_save x N`.
    pub alpha_train: DMatrix<f64>,
    pub beta_train: DMatrix<f64>,
    pub mu_train: DMatrix<f64>,
    pub alpha_test: DMatrix<f64>,
    pub beta_test: DMatrix<f64>,
    pub mu_test: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub counts_alpha: Vec<Vec<usize>>,
    pub counts_beta: Vec<Vec<usize>>,
    pub model: FittedModel,
}

impl VcFitResult {
    pub fn beta_train_mean(&self) -> Vec<f64> {
        column_means(&self.beta_train)
    }

    pub fn alpha_train_mean(&self) -> Vec<f64> {
        column_means(&self.alpha_train)
    }

    /// Average of `alpha(X_i)` over training rows, per draw.
    pub fn alpha_bar(&self) -> Vec<f64> {
        self.alpha_train.row_iter().map(|r| r.mean()).collect()
    }

    pub fn sigma_mean(&self) -> f64 {
        self.sigma.iter().sum::<f64>() / self.sigma.len() as f64
    }
}

/// Default prior for the coefficient forest: the leaf anchor is divided by
/// the root mean square of `Z` so that `Z beta(x)` has the scale the
/// intercept forest would have.
pub fn beta_hypers(alpha: &Hypers, z: &[f64]) -> Hypers {
    let rms = (z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64).sqrt();
    Hypers { sigma_mu_hat: Some(alpha.sigma_mu_hat() / rms), ..alpha.clone() }
}

fn check_nonzero(z: &[f64]) -> Result<()> {
    match z.iter().position(|v| *v == 0.0) {
        Some(i) => Err(Error::ZeroCovariate(i)),
        None => Ok(()),
    }
}

/// Two-forest sampler with a shared noise scale. Each iteration updates the
/// coefficient forest against `(y - alpha) / Z` with weights `Z^2`, hands
/// its noise scale to the intercept forest, then updates the intercept
/// forest against `y - Z beta`.
pub fn fit_vc(train: &Table, outcome: &str, z_column: &str, test: Option<&Table>, config: &FitConfig) -> Result<VcFitResult> {
    config.opts.validate()?;
    let z_cols = vec![z_column.to_string()];
    let z = linear_design(train, &z_cols)?;
    let zv: Vec<f64> = z.column(0).iter().copied().collect();
    check_nonzero(&zv)?;
    let exclude = config.exclude_with(&[z_column]);
    let excl: Vec<&str> = exclude.iter().map(String::as_str).collect();
    let (data, transforms) = fit_transforms(train, outcome, config.scale_mode, &excl)?;
    let x_test = check_test_schema(&transforms, test)?;
    let z_test = test.map(|t| linear_design(t, &z_cols)).transpose()?;

    let sigma_hat = match config.sigma_hat {
        Some(s) => s,
        None => {
            let xz = DMatrix::from_fn(data.x.nrows(), data.x.ncols() + 1, |i, j| {
                if j < data.x.ncols() {
                    data.x[(i, j)]
                } else {
                    zv[i]
                }
            });
            estimate_sigma_hat(&xz, &data.y)
        }
    };
    let ha = Hypers { sigma_hat, ..config.hypers.clone() };
    let hb = match &config.beta_hypers {
        Some(h) => Hypers { sigma_hat, ..h.clone() },
        None => beta_hypers(&ha, &zv),
    };
    let opts = config.opts.clone();
    let p = data.x.ncols();
    let mut fa = new_forest(ha.clone(), opts.clone(), p, config.seed, 0)?;
    let mut fb = new_forest(hb.clone(), opts.clone(), p, config.seed, 1)?;
    let sc = data.scaler;
    let n = data.x.nrows();
    let w: Vec<f64> = zv.iter().map(|v| v * v).collect();
    let y = &data.y;

    let mut alpha = fa.do_predict(&data.x)?;
    let mut r = vec![0.0; n];
    let mut draws = Vec::with_capacity(opts.num_save);
    let (mut a_rows, mut b_rows) = (Vec::new(), Vec::new());
    for iter in 0..total_iterations(&opts) {
        fb.set_sigma(fa.get_sigma())?;
        for i in 0..n {
            r[i] = (y[i] - alpha[i]) / zv[i];
        }
        let beta: Vec<f64> = fb.do_gibbs_weighted(&data.x, &r, &w, &data.x, 1)?.row(0).iter().copied().collect();
        fa.set_sigma(fb.get_sigma())?;
        for i in 0..n {
            r[i] = y[i] - zv[i] * beta[i];
        }
        alpha = fa.do_gibbs(&data.x, &r, &data.x, 1)?.row(0).iter().copied().collect();
        if save_slot(&opts, iter).is_none() {
            continue;
        }
        a_rows.push(alpha.iter().map(|v| sc.unscale_one(*v)).collect::<Vec<_>>());
        b_rows.push(beta.iter().map(|v| v * sc.scale).collect::<Vec<_>>());
        draws.push(SavedDraw {
            sigma: fa.get_sigma() * sc.scale,
            forests: if opts.cache_trees { vec![fa.trees().to_vec(), fb.trees().to_vec()] } else { vec![] },
            counts: vec![fa.get_counts(), fb.get_counts()],
            coefficients: vec![],
        });
    }

    let saved = draws.len();
    let alpha_train = draws_matrix(&a_rows, saved, n);
    let beta_train = draws_matrix(&b_rows, saved, n);
    let mu_train = combine(&alpha_train, &beta_train, &zv);
    let model = FittedModel {
        info: ModelInfo {
            kind: ModelKind::Vc,
            outcome: outcome.to_string(),
            hypers: vec![ha, hb],
            opts,
            transforms,
            scaler: sc,
            linear_columns: z_cols,
            outcome_levels: vec![],
        },
        draws,
    };
    let s = model.draws.len();
    let (alpha_test, beta_test, mu_test) = match (&x_test, &z_test) {
        (Some(xt), Some(zt)) if model.trees_cached() => {
            let pred = model.predict_design(xt, zt)?;
            let a = pred.component("alpha").cloned().unwrap_or_default();
            let b = pred.component("beta").cloned().unwrap_or_default();
            (a, b, pred.mu)
        }
        _ => (DMatrix::zeros(s, 0), DMatrix::zeros(s, 0), DMatrix::zeros(s, 0)),
    };
    Ok(VcFitResult {
        alpha_train,
        beta_train,
        mu_train,
        alpha_test,
        beta_test,
        mu_test,
        sigma: model.sigma_draws(),
        counts_alpha: model.counts(0),
        counts_beta: model.counts(1),
        model,
    })
}

fn combine(alpha: &DMatrix<f64>, beta: &DMatrix<f64>, z: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(alpha.nrows(), alpha.ncols(), |i, j| alpha[(i, j)] + z[j] * beta[(i, j)])
}

#[derive(Debug, Clone)]
pub struct BcfFitResult {
    pub vc: VcFitResult,
    /// Conditional average causal effect draws at the training rows.
    pub cace_train: DMatrix<f64>,
    pub cace_test: DMatrix<f64>,
    /// Population average causal effect, one value per draw.
    pub pace: Vec<f64>,
}

impl BcfFitResult {
    pub fn pace_mean(&self) -> f64 {
        self.pace.iter().sum::<f64>() / self.pace.len() as f64
    }

    /// Equal-tailed interval of the PACE draws at level `level`.
    pub fn pace_interval(&self, level: f64) -> (f64, f64) {
        let mut v = self.pace.clone();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
        };
        let tail = 0.5 * (1.0 - level);
        (q(tail), q(1.0 - tail))
    }
}

const BCF_Z: &str = "__treatment_contrast";

fn with_contrast(table: &Table, treatment: &str) -> Result<Table> {
    let (a, _) = encode_binary(table.require(treatment)?)?;
    let mut cols: Vec<Column> = table.columns().to_vec();
    cols.push(Column::numeric(BCF_Z, a.iter().map(|v| 0.5 - v).collect()));
    Table::new(cols)
}

/// Causal forest for a binary treatment `A`: the varying-coefficient model with
/// `Z = 1/2 - A`. Under this coding `Y(1) - Y(0) = -beta(x)`, so the reported
/// effects are the negated coefficient draws.
pub fn fit_bcf(train: &Table, outcome: &str, treatment: &str, test: Option<&Table>, config: &FitConfig) -> Result<BcfFitResult> {
    let tr = with_contrast(train, treatment)?;
    let te = test.map(|t| with_contrast(t, treatment)).transpose()?;
    let cfg = FitConfig { exclude: config.exclude_with(&[treatment]), ..config.clone() };
    let vc = fit_vc(&tr, outcome, BCF_Z, te.as_ref(), &cfg)?;
    let cace_train = -&vc.beta_train;
    let cace_test = -&vc.beta_test;
    let pace = cace_train.row_iter().map(|r| r.mean()).collect();
    Ok(BcfFitResult { vc, cace_train, cace_test, pace })
}
