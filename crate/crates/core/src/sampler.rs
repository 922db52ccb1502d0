//! Bayesian backfitting.
//!
//! Each tree is updated against the partial residuals of the others: a
//! GROW/PRUNE Metropolis-Hastings move scored by the leaf-marginalized
//! likelihood, a random-walk move on its log-bandwidth, then a conjugate draw
//! of its leaves. Noise scale, leaf scale, splitting proportions and their
//! concentration follow. Observation `i` has noise variance `sigma^2 / w_i`;
//! the unweighted sampler is the same code with `w = 1`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::priors::{
    log_exp_density, log_half_cauchy, log_split_prior, log_tree_prior, sample_log_dirichlet, sample_split,
    sample_tau_prior, Hypers, SparsityState,
};
use crate::slice::slice_sample;
use crate::trees::{branch_hyperrect, leaf_weight_matrix, Gate, Node, SoftTree};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const SLICE_MAX_STEPS: usize = 1000;

/// Chain control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Opts {
    /// Also sets the warm-up: `s` and its concentration stay fixed for the
    /// first `num_burn / 2` sweeps.
    pub num_burn: usize,
    pub num_save: usize,
    pub num_thin: usize,
    pub update_s: bool,
    /// Resample the Dirichlet concentration (only when `update_s` is on).
    pub update_alpha: bool,
    pub update_sigma: bool,
    pub update_sigma_mu: bool,
    pub update_tau: bool,
    pub cache_trees: bool,
    /// Standard deviation of the random-walk step on `log tau`.
    pub tau_step: f64,
}

impl Default for Opts {
    fn default() -> Self {
        Opts {
            num_burn: 2500,
            num_save: 2500,
            num_thin: 1,
            update_s: true,
            update_alpha: true,
            update_sigma: true,
            update_sigma_mu: true,
            update_tau: true,
            cache_trees: true,
            tau_step: 0.3,
        }
    }
}

impl Opts {
    pub fn validate(&self) -> Result<()> {
        if self.num_thin == 0 {
            return Err(Error::InvalidArgument("num_thin must be at least 1".into()));
        }
        if !(self.tau_step > 0.0) {
            return Err(Error::InvalidArgument("tau_step must be positive".into()));
        }
        Ok(())
    }
}

/// Sufficient statistics of one tree's leaf basis against weighted residuals.
#[derive(Debug, Clone)]
pub struct LeafStats {
    /// `Phi^T W Phi`
    pub gram: DMatrix<f64>,
    /// `Phi^T W R`
    pub cross: DVector<f64>,
    /// `sum w_i R_i^2`
    pub weighted_ss: f64,
    /// `sum log w_i`
    pub sum_log_w: f64,
    pub n: usize,
}

impl LeafStats {
    pub fn new(phi: &DMatrix<f64>, r: &[f64], w: &[f64]) -> Self {
        let (n, l) = phi.shape();
        let mut gram = DMatrix::<f64>::zeros(l, l);
        let mut cross = DVector::<f64>::zeros(l);
        for a in 0..l {
            let ca = phi.column(a);
            let mut c = 0.0;
            for i in 0..n {
                c += ca[i] * w[i] * r[i];
            }
            cross[a] = c;
            for b in a..l {
                let cb = phi.column(b);
                let mut g = 0.0;
                for i in 0..n {
                    g += ca[i] * w[i] * cb[i];
                }
                gram[(a, b)] = g;
                gram[(b, a)] = g;
            }
        }
        let weighted_ss = r.iter().zip(w).map(|(ri, wi)| wi * ri * ri).sum();
        let sum_log_w = w.iter().map(|wi| wi.ln()).sum();
        LeafStats { gram, cross, weighted_ss, sum_log_w, n }
    }

    fn precision(&self, sigma: f64, sigma_mu: f64) -> DMatrix<f64> {
        let l = self.gram.nrows();
        let mut lam = &self.gram / (sigma * sigma);
        for a in 0..l {
            lam[(a, a)] += 1.0 / (sigma_mu * sigma_mu);
        }
        lam
    }

    /// `log int prod_i N(R_i | Phi_i mu, sigma^2 / w_i) N(mu | 0, sigma_mu^2 I) dmu`.
    pub fn log_marginal(&self, sigma: f64, sigma_mu: f64) -> f64 {
        let l = self.gram.nrows();
        let lam = self.precision(sigma, sigma_mu);
        let chol = Cholesky::new(lam).expect("leaf precision is positive definite");
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let b = &self.cross / (sigma * sigma);
        let sol = chol.solve(&b);
        let quad = b.dot(&sol);
        -0.5 * self.n as f64 * LN_2PI - self.n as f64 * sigma.ln() + 0.5 * self.sum_log_w
            - l as f64 * sigma_mu.ln()
            - 0.5 * log_det
            - 0.5 * self.weighted_ss / (sigma * sigma)
            + 0.5 * quad
    }

    /// Posterior mean and Cholesky factor of the leaf precision.
    pub fn leaf_posterior(&self, sigma: f64, sigma_mu: f64) -> Result<(DVector<f64>, Cholesky<f64, Dyn>)> {
        let lam = self.precision(sigma, sigma_mu);
        let chol = Cholesky::new(lam).ok_or_else(|| Error::Singular("leaf precision".into()))?;
        let mean = chol.solve(&(&self.cross / (sigma * sigma)));
        Ok((mean, chol))
    }

    /// Draws leaves from `N(Lambda^-1 Phi^T W R / sigma^2, Lambda^-1)`.
    pub fn draw_leaves<R: Rng + ?Sized>(&self, rng: &mut R, sigma: f64, sigma_mu: f64) -> Result<Vec<f64>> {
        let (mean, chol) = self.leaf_posterior(sigma, sigma_mu)?;
        let l = mean.len();
        let z = DVector::from_iterator(l, (0..l).map(|_| rng.sample::<f64, _>(StandardNormal)));
        // mean + L^{-T} z has covariance (L L^T)^{-1}
        let lt = chol.l().transpose();
        let v = lt
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Singular("leaf precision factor".into()))?;
        Ok((mean + v).iter().copied().collect())
    }
}

fn check_positive(sigma: f64, sigma_mu: f64, w: &[f64]) -> Result<()> {
    if !(sigma > 0.0) || !(sigma_mu > 0.0) {
        return Err(Error::InvalidArgument("sigma and sigma_mu must be positive".into()));
    }
    if w.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument("weights must be positive".into()));
    }
    Ok(())
}

/// Leaf-marginalized log likelihood of `tree` for residuals `r` with noise
/// variances `sigma^2 / w_i` and leaf prior `N(0, sigma_mu^2)`.
pub fn log_marginal(
    tree: &SoftTree,
    x: &DMatrix<f64>,
    r: &[f64],
    w: &[f64],
    sigma: f64,
    sigma_mu: f64,
) -> Result<f64> {
    check_lengths(x.nrows(), r.len(), w.len())?;
    check_positive(sigma, sigma_mu, w)?;
    let phi = leaf_weight_matrix(tree, x);
    Ok(LeafStats::new(&phi, r, w).log_marginal(sigma, sigma_mu))
}

/// Draws the leaves of `tree` from their full conditional.
pub fn draw_leaves<R: Rng + ?Sized>(
    rng: &mut R,
    tree: &SoftTree,
    x: &DMatrix<f64>,
    r: &[f64],
    w: &[f64],
    sigma: f64,
    sigma_mu: f64,
) -> Result<Vec<f64>> {
    check_lengths(x.nrows(), r.len(), w.len())?;
    check_positive(sigma, sigma_mu, w)?;
    let phi = leaf_weight_matrix(tree, x);
    LeafStats::new(&phi, r, w).draw_leaves(rng, sigma, sigma_mu)
}

fn check_lengths(n: usize, r: usize, w: usize) -> Result<()> {
    if r != n {
        return Err(Error::DimensionMismatch { expected: n, found: r });
    }
    if w != n {
        return Err(Error::DimensionMismatch { expected: n, found: w });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveKind {
    Grow,
    Prune,
}

/// A proposed tree and `log q(T | T') - log q(T' | T)`.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub tree: SoftTree,
    pub log_q_ratio: f64,
    pub kind: MoveKind,
}

fn grow_prob(tree: &SoftTree) -> f64 {
    if tree.root.is_leaf() {
        1.0
    } else {
        0.5
    }
}

/// GROW or PRUNE proposal with its exact log proposal ratio.
///
/// New leaves are set to zero; they are integrated out of the acceptance
/// ratio and redrawn afterwards.
pub fn propose_tree<R: Rng + ?Sized>(rng: &mut R, tree: &SoftTree, sparsity: &SparsityState) -> Proposal {
    let p = sparsity.len();
    let grow = tree.root.is_leaf() || rng.random::<f64>() < 0.5;
    if grow {
        let leaves = tree.leaf_paths();
        let path = &leaves[rng.random_range(0..leaves.len())];
        let rect = branch_hyperrect(tree, path, p).expect("leaf path is valid");
        let (var, cut) = sample_split(rng, sparsity, &rect);
        let mut new = tree.clone();
        *new.node_at_mut(path).expect("leaf path is valid") = Node::branch(var, cut, Node::leaf(0.0), Node::leaf(0.0));
        let forward = grow_prob(tree).ln() - (leaves.len() as f64).ln() + log_split_prior(sparsity, &rect, var);
        let backward = 0.5f64.ln() - (new.prunable_paths().len() as f64).ln();
        Proposal { tree: new, log_q_ratio: backward - forward, kind: MoveKind::Grow }
    } else {
        let prunable = tree.prunable_paths();
        let path = &prunable[rng.random_range(0..prunable.len())];
        let var = match tree.node_at(path) {
            Some(Node::Branch { var, .. }) => *var,
            _ => unreachable!("prunable path addresses a branch"),
        };
        let mut new = tree.clone();
        *new.node_at_mut(path).expect("valid path") = Node::leaf(0.0);
        let rect = branch_hyperrect(&new, path, p).expect("valid path");
        let forward = 0.5f64.ln() - (prunable.len() as f64).ln();
        let backward =
            grow_prob(&new).ln() - (new.num_leaves() as f64).ln() + log_split_prior(sparsity, &rect, var);
        Proposal { tree: new, log_q_ratio: backward - forward, kind: MoveKind::Prune }
    }
}

/// Log Metropolis-Hastings ratio for replacing `current` by `proposal`.
pub fn mh_log_ratio(
    current: &SoftTree,
    proposal: &Proposal,
    loglik_current: f64,
    loglik_proposal: f64,
    hypers: &Hypers,
    sparsity: &SparsityState,
) -> f64 {
    loglik_proposal - loglik_current + log_tree_prior(&proposal.tree, hypers, sparsity)
        - log_tree_prior(current, hypers, sparsity)
        + proposal.log_q_ratio
}

/// Accepts with probability `min(1, exp(log_ratio))`.
pub fn mh_accept<R: Rng + ?Sized>(rng: &mut R, log_ratio: f64) -> bool {
    let u: f64 = rng.random::<f64>();
    log_ratio >= 0.0 || (1.0 - u).ln() < log_ratio
}

/// One structure move on `tree` under an arbitrary tree log likelihood.
/// Returns whether the proposal was accepted.
pub fn mh_tree_step<R, F>(
    rng: &mut R,
    tree: &mut SoftTree,
    hypers: &Hypers,
    sparsity: &SparsityState,
    loglik_current: f64,
    mut loglik: F,
) -> (bool, f64)
where
    R: Rng + ?Sized,
    F: FnMut(&SoftTree) -> f64,
{
    let proposal = propose_tree(rng, tree, sparsity);
    let ll_new = loglik(&proposal.tree);
    let ratio = mh_log_ratio(tree, &proposal, loglik_current, ll_new, hypers, sparsity);
    if mh_accept(rng, ratio) {
        *tree = proposal.tree;
        (true, ll_new)
    } else {
        (false, loglik_current)
    }
}

/// Random-walk move on `log tau` targeting the exponential prior times `loglik`.
pub fn tau_step<R, F>(
    rng: &mut R,
    tree: &mut SoftTree,
    tau_scale: f64,
    step_sd: f64,
    loglik_current: f64,
    mut loglik: F,
) -> (bool, f64)
where
    R: Rng + ?Sized,
    F: FnMut(&SoftTree) -> f64,
{
    let Gate::Soft(tau) = tree.gate else {
        return (false, loglik_current);
    };
    let z: f64 = rng.sample(StandardNormal);
    let tau_new = tau * (step_sd * z).exp();
    let mut cand = tree.clone();
    cand.gate = Gate::Soft(tau_new);
    let ll_new = loglik(&cand);
    let ratio = ll_new - loglik_current + log_exp_density(tau_new, tau_scale) - log_exp_density(tau, tau_scale)
        + tau_new.ln()
        - tau.ln();
    if mh_accept(rng, ratio) {
        tree.gate = Gate::Soft(tau_new);
        (true, ll_new)
    } else {
        (false, loglik_current)
    }
}

/// Slice update of the noise scale under a half-Cauchy(`sigma_hat`) prior.
pub fn update_sigma<R: Rng + ?Sized>(rng: &mut R, sigma: f64, residuals: &[f64], weights: &[f64], sigma_hat: f64) -> f64 {
    let n = residuals.len() as f64;
    let ss: f64 = residuals.iter().zip(weights).map(|(r, w)| w * r * r).sum();
    let logf = |s: f64| {
        if s <= 0.0 {
            return f64::NEG_INFINITY;
        }
        -n * s.ln() - 0.5 * ss / (s * s) + log_half_cauchy(s, sigma_hat)
    };
    slice_sample(rng, sigma, logf, sigma_hat, SLICE_MAX_STEPS, 0.0, f64::INFINITY)
}

/// Slice update of the leaf scale given every leaf value in the forest.
pub fn update_sigma_mu<R: Rng + ?Sized>(rng: &mut R, sigma_mu: f64, leaves: &[f64], sigma_mu_hat: f64) -> f64 {
    let l = leaves.len() as f64;
    let ss: f64 = leaves.iter().map(|m| m * m).sum();
    let logf = |s: f64| {
        if s <= 0.0 {
            return f64::NEG_INFINITY;
        }
        -l * s.ln() - 0.5 * ss / (s * s) + log_half_cauchy(s, sigma_mu_hat)
    };
    slice_sample(rng, sigma_mu, logf, sigma_mu_hat, SLICE_MAX_STEPS, 0.0, f64::INFINITY)
}

/// Conjugate Dirichlet update of the splitting proportions.
pub fn update_s<R: Rng + ?Sized>(rng: &mut R, sparsity: &SparsityState, counts: &[usize]) -> SparsityState {
    let p = sparsity.len() as f64;
    let shapes: Vec<f64> = counts.iter().map(|&c| sparsity.alpha / p + c as f64).collect();
    let log_s = sample_log_dirichlet(rng, &shapes);
    SparsityState::from_log_weights(&log_s, sparsity.alpha, sparsity.update_enabled)
}

/// Log conditional density of the Dirichlet concentration, parameterized by
/// `rho = alpha / (alpha + P)` with `rho ~ Beta(a, b)`.
pub fn log_alpha_conditional_rho(rho: f64, sum_log_s: f64, p: usize, a: f64, b: f64) -> f64 {
    if !(rho > 0.0 && rho < 1.0) {
        return f64::NEG_INFINITY;
    }
    let pf = p as f64;
    let alpha = pf * rho / (1.0 - rho);
    let prior = (a - 1.0) * rho.ln() + (b - 1.0) * (1.0 - rho).ln();
    let dir = ln_gamma(alpha) - pf * ln_gamma(alpha / pf) + (alpha / pf - 1.0) * sum_log_s;
    prior + dir
}

/// Slice update of the Dirichlet concentration `alpha`.
pub fn update_alpha<R: Rng + ?Sized>(rng: &mut R, alpha: f64, log_s: &[f64], a: f64, b: f64) -> f64 {
    let p = log_s.len();
    let sum_log_s: f64 = log_s.iter().sum();
    let rho0 = alpha / (alpha + p as f64);
    let rho = slice_sample(
        rng,
        rho0,
        |r| log_alpha_conditional_rho(r, sum_log_s, p, a, b),
        0.5,
        SLICE_MAX_STEPS,
        0.0,
        1.0,
    );
    p as f64 * rho / (1.0 - rho)
}

/// Sampler state of one forest.
#[derive(Debug, Clone)]
pub struct ForestState {
    pub trees: Vec<SoftTree>,
    pub sigma: f64,
    pub sigma_mu: f64,
    pub sparsity: SparsityState,
    pub hypers: Hypers,
    pub opts: Opts,
    /// Fitted values of each tree on the rows of the last sweep.
    pub tree_fits: Vec<Vec<f64>>,
    pub branch_var_counts: Vec<usize>,
    /// Completed sweeps.
    pub sweeps: usize,
}

impl ForestState {
    /// `T` zero-valued stumps over `p` design columns.
    pub fn new<R: Rng + ?Sized>(rng: &mut R, hypers: Hypers, opts: Opts, p: usize) -> Result<Self> {
        hypers.validate()?;
        opts.validate()?;
        if p == 0 {
            return Err(Error::InvalidArgument("at least one design column is required".into()));
        }
        let trees = (0..hypers.num_tree)
            .map(|_| {
                let gate = if hypers.hard_trees { Gate::Hard } else { Gate::Soft(sample_tau_prior(rng, hypers.tau_scale)) };
                SoftTree::stump(0.0, gate)
            })
            .collect();
        Ok(ForestState {
            trees,
            sigma: hypers.sigma_hat,
            sigma_mu: hypers.sigma_mu_hat(),
            sparsity: SparsityState::uniform(p, opts.update_s),
            tree_fits: Vec::new(),
            branch_var_counts: vec![0; p],
            sweeps: 0,
            hypers,
            opts,
        })
    }

    pub fn num_columns(&self) -> usize {
        self.sparsity.len()
    }

    /// Recomputes every tree's fitted values on `x`.
    pub fn refresh_fits(&mut self, x: &DMatrix<f64>) {
        self.tree_fits = self.trees.iter().map(|t| crate::trees::tree_predict_rows(t, x)).collect();
    }

    /// Sum of cached per-tree fits.
    pub fn total_fit(&self) -> Vec<f64> {
        let n = self.tree_fits.first().map_or(0, Vec::len);
        let mut total = vec![0.0; n];
        for f in &self.tree_fits {
            for (t, v) in total.iter_mut().zip(f) {
                *t += v;
            }
        }
        total
    }

    pub fn recount(&mut self) {
        let mut counts = vec![0; self.num_columns()];
        for t in &self.trees {
            t.add_var_counts(&mut counts);
        }
        self.branch_var_counts = counts;
    }

    pub fn all_leaves(&self) -> Vec<f64> {
        self.trees.iter().flat_map(|t| t.leaf_values()).collect()
    }

    /// One backfitting sweep over all trees followed by the hyperparameter
    /// updates. The cached fits must correspond to `x` (see [`Self::refresh_fits`]).
    pub fn gibbs_sweep<R: Rng + ?Sized>(&mut self, rng: &mut R, x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<()> {
        let n = x.nrows();
        if x.ncols() != self.num_columns() {
            return Err(Error::DimensionMismatch { expected: self.num_columns(), found: x.ncols() });
        }
        check_lengths(n, y.len(), w.len())?;
        if self.tree_fits.len() != self.trees.len() || self.tree_fits.iter().any(|f| f.len() != n) {
            self.refresh_fits(x);
        }
        let mut total = self.total_fit();
        let mut resid = vec![0.0; n];

        for t in 0..self.trees.len() {
            for i in 0..n {
                resid[i] = y[i] - (total[i] - self.tree_fits[t][i]);
            }
            let (sigma, sigma_mu) = (self.sigma, self.sigma_mu);
            let mut phi = leaf_weight_matrix(&self.trees[t], x);
            let mut stats = LeafStats::new(&phi, &resid, w);
            let ll = stats.log_marginal(sigma, sigma_mu);

            // structure
            let proposal = propose_tree(rng, &self.trees[t], &self.sparsity);
            let phi_new = leaf_weight_matrix(&proposal.tree, x);
            let stats_new = LeafStats::new(&phi_new, &resid, w);
            let ll_new = stats_new.log_marginal(sigma, sigma_mu);
            let ratio = mh_log_ratio(&self.trees[t], &proposal, ll, ll_new, &self.hypers, &self.sparsity);
            let mut ll = ll;
            if mh_accept(rng, ratio) {
                self.trees[t] = proposal.tree;
                phi = phi_new;
                stats = stats_new;
                ll = ll_new;
            }

            // bandwidth
            if self.opts.update_tau && !self.trees[t].is_hard() {
                let mut cand_phi = None;
                let mut cand_stats = None;
                let (accepted, _) = tau_step(
                    rng,
                    &mut self.trees[t],
                    self.hypers.tau_scale,
                    self.opts.tau_step,
                    ll,
                    |cand| {
                        if cand.root.is_leaf() {
                            return ll;
                        }
                        let p = leaf_weight_matrix(cand, x);
                        let s = LeafStats::new(&p, &resid, w);
                        let v = s.log_marginal(sigma, sigma_mu);
                        cand_phi = Some(p);
                        cand_stats = Some(s);
                        v
                    },
                );
                if accepted {
                    if let (Some(p), Some(s)) = (cand_phi, cand_stats) {
                        phi = p;
                        stats = s;
                    }
                }
            }

            // leaves
            let mu = stats.draw_leaves(rng, sigma, sigma_mu)?;
            self.trees[t].set_leaf_values(&mu);
            let fit: Vec<f64> = (0..n).map(|i| (0..mu.len()).map(|l| phi[(i, l)] * mu[l]).sum()).collect();
            for i in 0..n {
                total[i] += fit[i] - self.tree_fits[t][i];
            }
            self.tree_fits[t] = fit;
        }
        self.recount();

        if self.opts.update_sigma {
            let total = self.total_fit();
            for i in 0..n {
                resid[i] = y[i] - total[i];
            }
            self.sigma = update_sigma(rng, self.sigma, &resid, w, self.hypers.sigma_hat);
        }
        if self.opts.update_sigma_mu {
            let leaves = self.all_leaves();
            self.sigma_mu = update_sigma_mu(rng, self.sigma_mu, &leaves, self.hypers.sigma_mu_hat());
        }
        self.sweeps += 1;
        if self.opts.update_s && self.sweeps > self.opts.num_burn / 2 {
            self.sparsity = update_s(rng, &self.sparsity, &self.branch_var_counts);
            if self.opts.update_alpha {
                self.sparsity.alpha = update_alpha(
                    rng,
                    self.sparsity.alpha,
                    &self.sparsity.log_s,
                    self.hypers.alpha_shape_a,
                    self.hypers.alpha_shape_b,
                );
            }
        }
        Ok(())
    }
}
