//! Gaussian nonparametric regression.

use nalgebra::DMatrix;

use super::{
    check_test_schema, column_means, draws_matrix, new_forest, save_slot, total_iterations, FitConfig, FittedModel,
    ModelInfo, ModelKind, SavedDraw,
};
use crate::error::Result;
use crate::preprocess::{fit_transforms, Table};
use crate::trees::forest_predict;

/// Posterior draws of a regression fit, on the original outcome scale.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// `num_save x N_train`
    pub y_hat_train: DMatrix<f64>,
    /// `num_save x N_test` (zero columns without test data)
    pub y_hat_test: DMatrix<f64>,
    pub sigma: Vec<f64>,
    /// Per saved iteration, the number of branches splitting on each design column.
    pub counts: Vec<Vec<usize>>,
    /// Per saved iteration, the splitting proportions.
    pub s: Vec<Vec<f64>>,
    pub model: FittedModel,
}

impl FitResult {
    pub fn y_hat_train_mean(&self) -> Vec<f64> {
        column_means(&self.y_hat_train)
    }

    pub fn y_hat_test_mean(&self) -> Vec<f64> {
        column_means(&self.y_hat_test)
    }

    pub fn sigma_mean(&self) -> f64 {
        self.sigma.iter().sum::<f64>() / self.sigma.len() as f64
    }
}

/// Fits `outcome ~ every other column` on `train`, predicting at `test` as it goes.
pub fn fit_regression(train: &Table, outcome: &str, test: Option<&Table>, config: &FitConfig) -> Result<FitResult> {
    config.opts.validate()?;
    let exclude = config.exclude_with(&[]);
    let excl: Vec<&str> = exclude.iter().map(String::as_str).collect();
    let (data, transforms) = fit_transforms(train, outcome, config.scale_mode, &excl)?;
    let x_test = check_test_schema(&transforms, test)?;
    let hypers = config.resolve_hypers(&data.x, &data.y);
    let opts = config.opts.clone();
    let mut forest = new_forest(hypers.clone(), opts.clone(), data.x.ncols(), config.seed, 0)?;
    let sc = data.scaler;

    let n = data.x.nrows();
    let n_test = x_test.as_ref().map_or(0, |x| x.nrows());
    let mut train_rows = Vec::with_capacity(opts.num_save);
    let mut test_rows = Vec::with_capacity(opts.num_save);
    let mut draws = Vec::with_capacity(opts.num_save);
    let mut s_draws = Vec::with_capacity(opts.num_save);
    for iter in 0..total_iterations(&opts) {
        let fit = forest.do_gibbs(&data.x, &data.y, &data.x, 1)?;
        if save_slot(&opts, iter).is_none() {
            continue;
        }
        let f: Vec<f64> = fit.row(0).iter().copied().collect();
        train_rows.push(sc.unscale(&f));
        if let Some(xt) = &x_test {
            test_rows.push(sc.unscale(&forest_predict(forest.trees(), xt)?));
        }
        s_draws.push(forest.get_s().to_vec());
        draws.push(SavedDraw {
            sigma: forest.get_sigma() * sc.scale,
            forests: if opts.cache_trees { vec![forest.trees().to_vec()] } else { vec![] },
            counts: vec![forest.get_counts()],
            coefficients: vec![],
        });
    }

    let saved = draws.len();
    let model = FittedModel {
        info: ModelInfo {
            kind: ModelKind::Regression,
            outcome: outcome.to_string(),
            hypers: vec![hypers],
            opts,
            transforms,
            scaler: sc,
            linear_columns: vec![],
            outcome_levels: vec![],
        },
        draws,
    };
    Ok(FitResult {
        y_hat_train: draws_matrix(&train_rows, saved, n),
        y_hat_test: draws_matrix(&test_rows, saved, n_test),
        sigma: model.sigma_draws(),
        counts: model.counts(0),
        s: s_draws,
        model,
    })
}

/// Draws (`num_save x N`) and posterior means at the rows of `table`.
pub fn predict_regression(fit: &FitResult, table: &Table) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let p = fit.model.predict(table)?;
    let mean = p.mu_mean();
    Ok((p.mu, mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::preprocess::Column;
    use crate::sampler::Opts;

    fn table(n: usize) -> Table {
        let x1: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).fract()).collect();
        let x2: Vec<f64> = (0..n).map(|i| (i as f64 * 0.61).fract()).collect();
        let y: Vec<f64> = x1.iter().map(|v| 3.0 * v + 1.0).collect();
        Table::new(vec![Column::numeric("x1", x1), Column::numeric("x2", x2), Column::numeric("y", y)]).unwrap()
    }

    fn config(burn: usize, save: usize) -> FitConfig {
        FitConfig { opts: Opts { num_burn: burn, num_save: save, ..Opts::default() }, ..FitConfig::with_seed(3) }
    }

    #[test]
    fn one_saved_draw_shape() {
        let t = table(30);
        let fit = fit_regression(&t, "y", None, &config(0, 1)).unwrap();
        assert_eq!(fit.y_hat_train.shape(), (1, 30));
        assert_eq!(fit.y_hat_test.shape(), (1, 0));
        assert_eq!(fit.sigma.len(), 1);
        let (draws, mean) = predict_regression(&fit, &t).unwrap();
        assert_eq!(draws.row(0).iter().copied().collect::<Vec<_>>(), mean);
    }

    #[test]
    fn predict_on_train_matches_and_duplicates() {
        let t = table(40);
        let fit = fit_regression(&t, "y", Some(&t), &config(20, 10)).unwrap();
        let (draws, _) = predict_regression(&fit, &t).unwrap();
        assert!((&draws - &fit.y_hat_train).amax() <= 1e-10);
        assert_eq!(draws, fit.y_hat_test);
        let dup = t.select_rows(&[3, 3]);
        let (d2, _) = predict_regression(&fit, &dup).unwrap();
        assert_eq!(d2.column(0), d2.column(1));
    }

    #[test]
    fn uncached_fit_cannot_predict() {
        let t = table(20);
        let mut cfg = config(0, 2);
        cfg.opts.cache_trees = false;
        let fit = fit_regression(&t, "y", None, &cfg).unwrap();
        assert!(matches!(predict_regression(&fit, &t), Err(Error::TreesNotCached)));
    }

    #[test]
    fn missing_outcome_is_reported() {
        let t = table(10);
        assert!(matches!(fit_regression(&t, "nope", None, &config(0, 1)), Err(Error::UnknownColumn(c)) if c == "nope"));
    }
}
