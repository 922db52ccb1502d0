//! Prior densities and prior samplers.
//!
//! Tree shapes follow the depth-indexed branching process with
//! `Pr(branch at depth d) = gamma / (1 + d)^beta`. Each branch picks its
//! variable from the splitting proportions `s` and its cutpoint uniformly over
//! the (hard) hyperrectangle of points reaching it. Leaves are
//! `Normal(0, sigma_mu^2)`, bandwidths are exponential with mean `tau_scale`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trees::{Gate, Hyperrect, Node, Side, SoftTree};

/// Prior configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hypers {
    pub num_tree: usize,
    pub gamma: f64,
    pub beta: f64,
    pub k: f64,
    /// Explicit override of the leaf-scale anchor; `None` means `0.5 / (k sqrt(T))`.
    pub sigma_mu_hat: Option<f64>,
    /// Anchor of the half-Cauchy prior on the noise scale.
    pub sigma_hat: f64,
    /// Mean of the exponential bandwidth prior.
    pub tau_scale: f64,
    pub alpha_shape_a: f64,
    pub alpha_shape_b: f64,
    /// Use hard (indicator) decision rules instead of soft ones.
    pub hard_trees: bool,
}

impl Default for Hypers {
    fn default() -> Self {
        Hypers {
            num_tree: 20,
            gamma: 0.95,
            beta: 2.0,
            k: 2.0,
            sigma_mu_hat: None,
            sigma_hat: 1.0,
            tau_scale: 0.1,
            alpha_shape_a: 0.5,
            alpha_shape_b: 1.0,
            hard_trees: false,
        }
    }
}

impl Hypers {
    /// Defaults with `sigma_hat` estimated from scaled training data.
    pub fn from_data(x: &DMatrix<f64>, y: &[f64]) -> Self {
        Hypers { sigma_hat: estimate_sigma_hat(x, y), ..Hypers::default() }
    }

    /// Defaults for latent-variable probit models: `k = 1/6` (so the leaf anchor
    /// is `3 / sqrt(T)`) and unit noise.
    pub fn probit() -> Self {
        Hypers { k: 1.0 / 6.0, sigma_hat: 1.0, ..Hypers::default() }
    }

    pub fn sigma_mu_hat(&self) -> f64 {
        self.sigma_mu_hat
            .unwrap_or_else(|| 0.5 / (self.k * (self.num_tree as f64).sqrt()))
    }

    pub fn gate(&self, tau: f64) -> Gate {
        if self.hard_trees {
            Gate::Hard
        } else {
            Gate::Soft(tau)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidHypers(m.to_string()));
        if self.num_tree == 0 {
            return bad("num_tree must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.beta >= 0.0) {
            return bad("beta must be nonnegative");
        }
        if !(self.k > 0.0) {
            return bad("k must be positive");
        }
        if !(self.sigma_mu_hat() > 0.0 && self.sigma_mu_hat().is_finite()) {
            return bad("sigma_mu_hat must be positive");
        }
        if !(self.sigma_hat > 0.0 && self.sigma_hat.is_finite()) {
            return bad("sigma_hat must be positive");
        }
        if !(self.tau_scale > 0.0) {
            return bad("tau_scale must be positive");
        }
        if !(self.alpha_shape_a > 0.0 && self.alpha_shape_b > 0.0) {
            return bad("alpha shapes must be positive");
        }
        Ok(())
    }
}

/// Splitting proportions and their Dirichlet concentration.
///
/// `log_s` is kept alongside `s` because small concentrations routinely
/// produce proportions below the smallest positive double.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityState {
    pub s: Vec<f64>,
    pub log_s: Vec<f64>,
    pub alpha: f64,
    pub update_enabled: bool,
}

impl SparsityState {
    pub fn uniform(p: usize, update_enabled: bool) -> Self {
        let v = 1.0 / p as f64;
        SparsityState { s: vec![v; p], log_s: vec![v.ln(); p], alpha: 1.0, update_enabled }
    }

    /// Builds a state from (possibly unnormalized) log weights.
    pub fn from_log_weights(log_w: &[f64], alpha: f64, update_enabled: bool) -> Self {
        let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + log_w.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        let log_s: Vec<f64> = log_w.iter().map(|l| l - lse).collect();
        let mut s: Vec<f64> = log_s.iter().map(|l| l.exp()).collect();
        let total: f64 = s.iter().sum();
        s.iter_mut().for_each(|v| *v /= total);
        SparsityState { s, log_s, alpha, update_enabled }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Draws a variable index from `Categorical(s)`.
    pub fn sample_var<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>();
        let mut acc = 0.0;
        for (j, &p) in self.s.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // rounding slack: last index with positive mass
        self.s.iter().rposition(|&p| p > 0.0).unwrap_or(self.s.len() - 1)
    }
}

/// Prior probability that a node at depth `d` is a branch.
pub fn branch_prob(depth: usize, gamma: f64, beta: f64) -> f64 {
    gamma / (1.0 + depth as f64).powf(beta)
}

/// Draws a splitting rule for a node whose hard box is `rect`.
pub fn sample_split<R: Rng + ?Sized>(rng: &mut R, sparsity: &SparsityState, rect: &Hyperrect) -> (usize, f64) {
    let var = sparsity.sample_var(rng);
    let u: f64 = rng.random::<f64>();
    let cut = rect.lower[var] + u * rect.width(var);
    (var, cut)
}

/// Log density of a splitting rule under the splitting-rule prior.
pub fn log_split_prior(sparsity: &SparsityState, rect: &Hyperrect, var: usize) -> f64 {
    sparsity.log_s[var] - rect.width(var).max(f64::MIN_POSITIVE).ln()
}

pub fn log_exp_density(x: f64, mean: f64) -> f64 {
    if x < 0.0 {
        f64::NEG_INFINITY
    } else {
        -mean.ln() - x / mean
    }
}

/// Log density of a half-Cauchy with the given scale, on `x > 0`.
pub fn log_half_cauchy(x: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else {
        (2.0 / std::f64::consts::PI).ln() - scale.ln() - (x / scale).powi(2).ln_1p()
    }
}

/// Draws a tree from the prior. `sigma_mu` sets the leaf scale.
pub fn sample_tree_from_prior<R: Rng + ?Sized>(
    rng: &mut R,
    hypers: &Hypers,
    sparsity: &SparsityState,
    sigma_mu: f64,
) -> SoftTree {
    fn grow<R: Rng + ?Sized>(
        rng: &mut R,
        hypers: &Hypers,
        sparsity: &SparsityState,
        sigma_mu: f64,
        depth: usize,
        rect: &Hyperrect,
    ) -> Node {
        let p = branch_prob(depth, hypers.gamma, hypers.beta);
        if rng.random::<f64>() < p {
            let (var, cut) = sample_split(rng, sparsity, rect);
            let mut lr = rect.clone();
            lr.narrow(var, cut, Side::Left);
            let mut rr = rect.clone();
            rr.narrow(var, cut, Side::Right);
            let left = grow(rng, hypers, sparsity, sigma_mu, depth + 1, &lr);
            let right = grow(rng, hypers, sparsity, sigma_mu, depth + 1, &rr);
            Node::branch(var, cut, left, right)
        } else {
            let z: f64 = rng.sample(StandardNormal);
            Node::leaf(sigma_mu * z)
        }
    }
    let root = grow(rng, hypers, sparsity, sigma_mu, 0, &Hyperrect::unit(sparsity.len()));
    let gate = if hypers.hard_trees {
        Gate::Hard
    } else {
        Gate::Soft(sample_tau_prior(rng, hypers.tau_scale))
    };
    SoftTree { root, gate }
}

pub fn sample_tau_prior<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    let u: f64 = rng.random::<f64>();
    -mean * (1.0 - u).ln()
}

/// Log probability of the tree shape under the branching process alone.
pub fn log_shape_prior(root: &Node, gamma: f64, beta: f64) -> f64 {
    fn walk(n: &Node, d: usize, gamma: f64, beta: f64) -> f64 {
        let p = branch_prob(d, gamma, beta);
        match n {
            Node::Leaf { .. } => (1.0 - p).ln(),
            Node::Branch { left, right, .. } => {
                p.ln() + walk(left, d + 1, gamma, beta) + walk(right, d + 1, gamma, beta)
            }
        }
    }
    walk(root, 0, gamma, beta)
}

/// Log prior of a tree's shape, splitting rules and bandwidth (leaf values excluded).
pub fn log_tree_prior(tree: &SoftTree, hypers: &Hypers, sparsity: &SparsityState) -> f64 {
    fn splits(n: &Node, rect: &Hyperrect, sparsity: &SparsityState) -> f64 {
        match n {
            Node::Leaf { .. } => 0.0,
            Node::Branch { var, cut, left, right } => {
                let here = log_split_prior(sparsity, rect, *var);
                let mut lr = rect.clone();
                lr.narrow(*var, *cut, Side::Left);
                let mut rr = rect.clone();
                rr.narrow(*var, *cut, Side::Right);
                here + splits(left, &lr, sparsity) + splits(right, &rr, sparsity)
            }
        }
    }
    let shape = log_shape_prior(&tree.root, hypers.gamma, hypers.beta);
    let rules = splits(&tree.root, &Hyperrect::unit(sparsity.len()), sparsity);
    let bw = match tree.gate {
        Gate::Soft(tau) => log_exp_density(tau, hypers.tau_scale),
        Gate::Hard => 0.0,
    };
    shape + rules + bw
}

/// `alpha * sum_{i=0}^{B-1} 1 / (alpha + i)`: approximate Poisson mean of the
/// number of used predictors minus one, given `B` branches.
pub fn theta_b(alpha: f64, b: usize) -> f64 {
    alpha * (0..b).map(|i| 1.0 / (alpha + i as f64)).sum::<f64>()
}

/// Draw from a half-Cauchy with scale `scale`.
pub fn sample_sigma_mu_prior<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    loop {
        let u: f64 = rng.random::<f64>();
        let v = scale * (0.5 * std::f64::consts::PI * u).tan();
        if v > 0.0 && v.is_finite() {
            return v;
        }
    }
}

/// Log of a normalized `Dirichlet(shapes)` draw, computed without underflow.
pub fn sample_log_dirichlet<R: Rng + ?Sized>(rng: &mut R, shapes: &[f64]) -> Vec<f64> {
    let log_g: Vec<f64> = shapes.iter().map(|&a| sample_log_gamma(rng, a)).collect();
    let m = log_g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + log_g.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    log_g.into_iter().map(|l| l - lse).collect()
}

/// `log G` for `G ~ Gamma(shape, 1)`; shapes below one use
/// `G = G' U^(1/a)` with `G' ~ Gamma(a + 1, 1)`.
pub fn sample_log_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        g.max(f64::MIN_POSITIVE).ln()
    } else {
        let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng);
        let u: f64 = rng.random::<f64>();
        g.max(f64::MIN_POSITIVE).ln() + (1.0 - u).ln() / shape
    }
}

/// Default noise anchor: residual SD of an OLS fit of `y` on `[1, X]` when
/// `N > P' + 2`, else the sample SD of `y`.
pub fn estimate_sigma_hat(x: &DMatrix<f64>, y: &[f64]) -> f64 {
    let n = y.len();
    let p = x.ncols();
    let sd = {
        let m = y.iter().sum::<f64>() / n as f64;
        (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0)).sqrt()
    };
    if n <= p + 2 {
        return if sd > 0.0 { sd } else { 1.0 };
    }
    let mut design = DMatrix::<f64>::from_element(n, p + 1, 1.0);
    design.view_mut((0, 1), (n, p)).copy_from(x);
    let yv = DVector::from_column_slice(y);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-10 * (n.max(p + 1) as f64);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let coef = match svd.solve(&yv, eps) {
        Ok(c) => c,
        Err(_) => return sd,
    };
    let resid = yv - design * coef;
    let df = n.saturating_sub(rank);
    if df == 0 {
        return sd;
    }
    let s = (resid.norm_squared() / df as f64).sqrt();
    if s > 0.0 && s.is_finite() {
        s
    } else if sd > 0.0 {
        sd
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn branch_prob_values() {
        assert_eq!(branch_prob(0, 0.95, 2.0), 0.95);
        assert!((branch_prob(1, 0.95, 2.0) - 0.2375).abs() < 1e-15);
        assert_eq!(branch_prob(3, 0.0, 2.0), 0.0);
    }

    #[test]
    fn theta_b_values() {
        assert_eq!(theta_b(1.0, 1), 1.0);
        assert_eq!(theta_b(1.0, 3), 1.0 + 0.5 + 1.0 / 3.0);
        for b in 1..20 {
            let d = theta_b(0.7, b + 1) - theta_b(0.7, b);
            assert!((d - 0.7 / (0.7 + b as f64)).abs() < 1e-12);
            assert!(d > 0.0);
        }
    }

    #[test]
    fn default_sigma_mu_hat() {
        let h = Hypers::default();
        assert!((h.sigma_mu_hat() - 0.5 / (2.0 * 20f64.sqrt())).abs() < 1e-15);
        let p = Hypers { num_tree: 50, ..Hypers::probit() };
        assert!((p.sigma_mu_hat() - 3.0 / 50f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn validate_rejects_bad_values() {
        assert!(Hypers::default().validate().is_ok());
        assert!(Hypers { gamma: 1.5, ..Hypers::default() }.validate().is_err());
        assert!(Hypers { num_tree: 0, ..Hypers::default() }.validate().is_err());
        assert!(Hypers { sigma_hat: -1.0, ..Hypers::default() }.validate().is_err());
    }

    #[test]
    fn single_leaf_log_prior() {
        let h = Hypers::default();
        let s = SparsityState::uniform(3, true);
        let t = SoftTree::stump(0.0, Gate::Soft(0.07));
        let expected = (1.0f64 - 0.95).ln() + (-(0.1f64).ln() - 0.07 / 0.1);
        assert!((log_tree_prior(&t, &h, &s) - expected).abs() < 1e-14);
    }

    #[test]
    fn degenerate_sparsity_splits_on_one_variable() {
        let h = Hypers { gamma: 0.95, beta: 0.5, ..Hypers::default() };
        let s = SparsityState::from_log_weights(&[f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY], 1.0, false);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let t = sample_tree_from_prior(&mut rng, &h, &s, 0.1);
            let mut c = vec![0; 4];
            t.add_var_counts(&mut c);
            assert_eq!(c[0] + c[1] + c[3], 0);
        }
    }

    #[test]
    fn half_cauchy_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scale = 0.3;
        let mut v: Vec<f64> = (0..100_000).map(|_| sample_sigma_mu_prior(&mut rng, scale)).collect();
        assert!(v.iter().all(|&x| x > 0.0));
        let below = v.iter().filter(|&&x| x <= 3.0 * scale).count() as f64 / v.len() as f64;
        assert!((below - 2.0 / std::f64::consts::PI * 3f64.atan()).abs() < 0.01);
        v.sort_by(f64::total_cmp);
        let median = v[v.len() / 2];
        assert!((median / scale - 1.0).abs() < 0.05);
    }

    #[test]
    fn log_dirichlet_is_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shapes = vec![0.004; 250];
        let ls = sample_log_dirichlet(&mut rng, &shapes);
        let st = SparsityState::from_log_weights(&ls, 1.0, true);
        assert!((st.s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(ls.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn sigma_hat_small_n_falls_back_to_sd() {
        let x = DMatrix::from_element(3, 5, 0.5);
        let y = [1.0, 2.0, 3.0];
        assert!((estimate_sigma_hat(&x, &y) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_hat_exact_linear_fit_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 2000;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 + 2.0 * x[(i, 0)] - x[(i, 1)] + 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let s = estimate_sigma_hat(&x, &y);
        assert!((s - 0.5).abs() < 0.03, "{s}");
    }
}
