//! Embeddable forest handle for composing custom Gibbs samplers.
//!
//! The handle works on data the caller has already scaled: covariates in
//! `[0, 1]` and an outcome on whatever scale the hyperparameters describe.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::priors::{Hypers, SparsityState};
use crate::sampler::{ForestState, Opts};
use crate::trees::{forest_predict, SoftTree};

#[derive(Debug, Clone)]
pub struct ForestHandle {
    state: ForestState,
    rng: ChaCha8Rng,
    p: usize,
}

fn check_design(x: &DMatrix<f64>, p: usize) -> Result<()> {
    if x.ncols() != p {
        return Err(Error::DimensionMismatch { expected: p, found: x.ncols() });
    }
    if x.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
        return Err(Error::InvalidArgument("design entries must be finite and lie in [0, 1]".into()));
    }
    Ok(())
}

impl ForestHandle {
    /// `T` zero-leaf stumps over `p` design columns.
    pub fn new(hypers: Hypers, opts: Opts, p: usize, seed: u64) -> Result<Self> {
        Self::with_rng(hypers, opts, p, ChaCha8Rng::seed_from_u64(seed))
    }

    /// As [`Self::new`] drawing from an existing stream.
    pub fn with_rng(hypers: Hypers, opts: Opts, p: usize, mut rng: ChaCha8Rng) -> Result<Self> {
        let state = ForestState::new(&mut rng, hypers, opts, p)?;
        Ok(ForestHandle { state, rng, p })
    }

    pub fn num_columns(&self) -> usize {
        self.p
    }

    pub fn state(&self) -> &ForestState {
        &self.state
    }

    pub fn trees(&self) -> &[SoftTree] {
        &self.state.trees
    }

    pub fn hypers(&self) -> &Hypers {
        &self.state.hypers
    }

    pub fn opts(&self) -> &Opts {
        &self.state.opts
    }

    /// Runs `iters` sweeps; row `r` of the result holds predictions at
    /// `x_test` after sweep `r`.
    pub fn do_gibbs(&mut self, x: &DMatrix<f64>, y: &[f64], x_test: &DMatrix<f64>, iters: usize) -> Result<DMatrix<f64>> {
        let w = vec![1.0; x.nrows()];
        self.run(x, y, &w, x_test, iters)
    }

    /// As [`Self::do_gibbs`] with observation variances `sigma^2 / w_i`.
    pub fn do_gibbs_weighted(
        &mut self,
        x: &DMatrix<f64>,
        y: &[f64],
        w: &[f64],
        x_test: &DMatrix<f64>,
        iters: usize,
    ) -> Result<DMatrix<f64>> {
        if w.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite and strictly positive".into()));
        }
        self.run(x, y, w, x_test, iters)
    }

    fn run(&mut self, x: &DMatrix<f64>, y: &[f64], w: &[f64], x_test: &DMatrix<f64>, iters: usize) -> Result<DMatrix<f64>> {
        check_design(x, self.p)?;
        check_design(x_test, self.p)?;
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), found: y.len() });
        }
        if w.len() != x.nrows() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), found: w.len() });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("outcome must be finite".into()));
        }
        let mut out = DMatrix::zeros(iters, x_test.nrows());
        if iters == 0 {
            return Ok(out);
        }
        self.state.refresh_fits(x);
        for r in 0..iters {
            self.state.gibbs_sweep(&mut self.rng, x, y, w)?;
            let pred = forest_predict(&self.state.trees, x_test)?;
            out.row_mut(r).copy_from_slice(&pred);
        }
        Ok(out)
    }

    /// Predictions at the current state.
    pub fn do_predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_design(x, self.p)?;
        forest_predict(&self.state.trees, x)
    }

    pub fn get_sigma(&self) -> f64 {
        self.state.sigma
    }

    pub fn set_sigma(&mut self, sigma: f64) -> Result<()> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument("sigma must be positive".into()));
        }
        self.state.sigma = sigma;
        Ok(())
    }

    pub fn get_sigma_mu(&self) -> f64 {
        self.state.sigma_mu
    }

    pub fn set_sigma_mu(&mut self, sigma_mu: f64) -> Result<()> {
        if !(sigma_mu > 0.0) || !sigma_mu.is_finite() {
            return Err(Error::InvalidArgument("sigma_mu must be positive".into()));
        }
        self.state.sigma_mu = sigma_mu;
        Ok(())
    }

    pub fn get_s(&self) -> &[f64] {
        &self.state.sparsity.s
    }

    pub fn set_s(&mut self, s: &[f64]) -> Result<()> {
        if s.len() != self.p {
            return Err(Error::DimensionMismatch { expected: self.p, found: s.len() });
        }
        if s.iter().any(|v| !(*v >= 0.0)) || (s.iter().sum::<f64>() - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument("s must lie on the simplex".into()));
        }
        let log_s: Vec<f64> = s.iter().map(|v| v.ln()).collect();
        let sp = &self.state.sparsity;
        self.state.sparsity = SparsityState::from_log_weights(&log_s, sp.alpha, sp.update_enabled);
        Ok(())
    }

    pub fn get_alpha(&self) -> f64 {
        self.state.sparsity.alpha
    }

    pub fn set_alpha(&mut self, alpha: f64) -> Result<()> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument("alpha must be positive".into()));
        }
        self.state.sparsity.alpha = alpha;
        Ok(())
    }

    pub fn get_counts(&self) -> Vec<usize> {
        self.state.branch_var_counts.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(n: usize) -> (DMatrix<f64>, Vec<f64>) {
        let x = DMatrix::from_fn(n, 3, |i, j| ((i * (j + 3) * 7919) % 101) as f64 / 100.0);
        let y = (0..n).map(|i| (x[(i, 0)] - 0.5) * 2.0 + 0.1 * x[(i, 2)]).collect();
        (x, y)
    }

    fn handle(seed: u64) -> ForestHandle {
        let h = Hypers { num_tree: 10, sigma_hat: 0.5, ..Hypers::default() };
        ForestHandle::new(h, Opts::default(), 3, seed).unwrap()
    }

    #[test]
    fn fresh_handle() {
        let f = handle(1);
        let (x, _) = data(10);
        assert!(f.do_predict(&x).unwrap().iter().all(|v| *v == 0.0));
        assert_eq!(f.get_sigma(), 0.5);
        assert_eq!(f.get_counts(), vec![0, 0, 0]);
        assert_eq!(f.get_alpha(), 1.0);
    }

    #[test]
    fn zero_iterations_is_a_no_op() {
        let mut f = handle(1);
        let (x, y) = data(10);
        let out = f.do_gibbs(&x, &y, &x, 0).unwrap();
        assert_eq!(out.shape(), (0, 10));
        assert!(f.do_predict(&x).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn last_row_matches_predict_and_chaining() {
        let (x, y) = data(40);
        let mut a = handle(9);
        let mut b = handle(9);
        let out = a.do_gibbs(&x, &y, &x, 2).unwrap();
        b.do_gibbs(&x, &y, &x, 1).unwrap();
        let out_b = b.do_gibbs(&x, &y, &x, 1).unwrap();
        let pred = a.do_predict(&x).unwrap();
        for i in 0..40 {
            assert!((out[(1, i)] - pred[i]).abs() <= 1e-13);
            assert_eq!(out[(1, i)].to_bits(), out_b[(0, i)].to_bits());
        }
        assert_eq!(a.do_predict(&x).unwrap(), pred);
    }

    #[test]
    fn unit_weights_match_unweighted() {
        let (x, y) = data(30);
        let mut a = handle(4);
        let mut b = handle(4);
        let oa = a.do_gibbs(&x, &y, &x, 5).unwrap();
        let ob = b.do_gibbs_weighted(&x, &y, &vec![1.0; 30], &x, 5).unwrap();
        assert!(oa.iter().zip(ob.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
        assert_eq!(a.get_sigma().to_bits(), b.get_sigma().to_bits());
    }

    #[test]
    fn rejects_bad_inputs() {
        let (x, y) = data(10);
        let mut f = handle(1);
        assert!(f.do_gibbs_weighted(&x, &y, &vec![0.0; 10], &x, 1).is_err());
        assert!(f.set_sigma(0.0).is_err());
        let bad = DMatrix::from_element(2, 3, 1.5);
        assert!(f.do_predict(&bad).is_err());
        assert!(f.do_gibbs(&x, &y[..5], &x, 1).is_err());
    }

    #[test]
    fn fixed_sigma_stays_fixed() {
        let (x, y) = data(20);
        let opts = Opts { update_sigma: false, ..Opts::default() };
        let mut f = ForestHandle::new(Hypers { num_tree: 5, ..Hypers::default() }, opts, 3, 2).unwrap();
        f.set_sigma(1.0).unwrap();
        f.do_gibbs(&x, &y, &x, 10).unwrap();
        assert_eq!(f.get_sigma(), 1.0);
    }
}
