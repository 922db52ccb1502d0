//! Probit classification by latent-variable data augmentation.

use nalgebra::DMatrix;

use super::truncnorm::{sample_latent, std_normal_cdf};
use super::{
    check_test_schema, column_means, draws_matrix, new_forest, save_slot, stream, total_iterations, FitConfig,
    FittedModel, ModelInfo, ModelKind, SavedDraw,
};
use crate::error::Result;
use crate::preprocess::{fit_transforms_binary, Table};
use crate::priors::Hypers;
use crate::sampler::Opts;
use crate::trees::forest_predict;

/// `Phi(r)` kept strictly inside `(0, 1)`.
pub fn probability(r: f64) -> f64 {
    std_normal_cdf(r).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

#[derive(Debug, Clone)]
pub struct ProbitFitResult {
    /// Latent mean draws, `num_save x N`.
    pub r_train: DMatrix<f64>,
    pub r_test: DMatrix<f64>,
    /// `Phi(r)` draws.
    pub p_train: DMatrix<f64>,
    pub p_test: DMatrix<f64>,
    pub counts: Vec<Vec<usize>>,
    /// Labels of outcome 0 and 1.
    pub levels: Vec<String>,
    pub model: FittedModel,
}

impl ProbitFitResult {
    pub fn r_train_mean(&self) -> Vec<f64> {
        column_means(&self.r_train)
    }

    pub fn p_train_mean(&self) -> Vec<f64> {
        column_means(&self.p_train)
    }

    pub fn p_test_mean(&self) -> Vec<f64> {
        column_means(&self.p_test)
    }
}

/// Probit defaults on top of `hypers`: `k = 1/6` unless the leaf anchor was
/// set explicitly, unit noise.
pub fn probit_hypers(hypers: &Hypers, k_overridden: bool) -> Hypers {
    let k = if k_overridden { hypers.k } else { Hypers::probit().k };
    Hypers { k, sigma_hat: 1.0, ..hypers.clone() }
}

/// Fits `P(Y = 1 | x) = Phi(r(x))`. The noise scale is fixed at one.
///
/// `config.hypers.k` is replaced by the probit default `1/6` when it still
/// holds the regression default.
pub fn fit_probit(train: &Table, outcome: &str, test: Option<&Table>, config: &FitConfig) -> Result<ProbitFitResult> {
    config.opts.validate()?;
    let exclude = config.exclude_with(&[]);
    let excl: Vec<&str> = exclude.iter().map(String::as_str).collect();
    let (data, transforms, levels) = fit_transforms_binary(train, outcome, &excl)?;
    let x_test = check_test_schema(&transforms, test)?;
    let hypers = probit_hypers(&config.hypers, config.hypers.k != Hypers::default().k);
    let opts = Opts { update_sigma: false, ..config.opts.clone() };
    let mut forest = new_forest(hypers.clone(), opts.clone(), data.x.ncols(), config.seed, 0)?;
    forest.set_sigma(1.0)?;
    let mut rng = stream(config.seed, 0);

    let n = data.x.nrows();
    let n_test = x_test.as_ref().map_or(0, |x| x.nrows());
    let positive: Vec<bool> = data.y.iter().map(|&v| v == 1.0).collect();
    let mut r = forest.do_predict(&data.x)?;
    let mut z = vec![0.0; n];
    let (mut r_rows, mut rt_rows) = (Vec::new(), Vec::new());
    let mut draws = Vec::with_capacity(opts.num_save);
    for iter in 0..total_iterations(&opts) {
        for i in 0..n {
            z[i] = sample_latent(&mut rng, r[i], positive[i]);
        }
        let fit = forest.do_gibbs(&data.x, &z, &data.x, 1)?;
        r = fit.row(0).iter().copied().collect();
        if save_slot(&opts, iter).is_none() {
            continue;
        }
        r_rows.push(r.clone());
        if let Some(xt) = &x_test {
            rt_rows.push(forest_predict(forest.trees(), xt)?);
        }
        draws.push(SavedDraw {
            sigma: 1.0,
            forests: if opts.cache_trees { vec![forest.trees().to_vec()] } else { vec![] },
            counts: vec![forest.get_counts()],
            coefficients: vec![],
        });
    }

    let saved = draws.len();
    let r_train = draws_matrix(&r_rows, saved, n);
    let r_test = draws_matrix(&rt_rows, saved, n_test);
    let model = FittedModel {
        info: ModelInfo {
            kind: ModelKind::Probit,
            outcome: outcome.to_string(),
            hypers: vec![hypers],
            opts,
            transforms,
            scaler: data.scaler,
            linear_columns: vec![],
            outcome_levels: levels.clone(),
        },
        draws,
    };
    Ok(ProbitFitResult {
        p_train: r_train.map(probability),
        p_test: r_test.map(probability),
        r_train,
        r_test,
        counts: model.counts(0),
        levels,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::Column;

    #[test]
    fn probabilities_strictly_inside() {
        for r in [-100.0, -5.0, 0.0, 5.0, 100.0] {
            let p = probability(r);
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn separable_classes_fit() {
        let n = 80;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let y: Vec<String> = x.iter().map(|v| if *v > 0.5 { "yes".into() } else { "no".into() }).collect();
        let t = Table::new(vec![Column::numeric("x", x), Column::text("y", y)]).unwrap();
        let cfg = FitConfig { opts: Opts { num_burn: 200, num_save: 200, ..Opts::default() }, ..FitConfig::with_seed(5) };
        let fit = fit_probit(&t, "y", Some(&t), &cfg).unwrap();
        assert_eq!(fit.levels, vec!["no".to_string(), "yes".to_string()]);
        let p = fit.p_train_mean();
        assert!(p[5] < 0.2 && p[75] > 0.8, "{} {}", p[5], p[75]);
        assert!(fit.p_train.iter().all(|v| *v > 0.0 && *v < 1.0));
        let pred = fit.model.predict(&t).unwrap();
        assert!((&pred.mu - &fit.p_test).amax() == 0.0);
    }

    #[test]
    fn rejects_non_binary() {
        let t = Table::new(vec![Column::numeric("x", vec![0.1, 0.2, 0.3]), Column::numeric("y", vec![0.0, 1.0, 2.0])])
            .unwrap();
        assert!(fit_probit(&t, "y", None, &FitConfig::default()).is_err());
    }
}
