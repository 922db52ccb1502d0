//! End-to-end acceptance checks. Runs without the libtest harness so each
//! criterion prints exactly one PASS/FAIL line; the process fails if any does.
//!
//! Every stochastic criterion uses seed 1 for both data and chain.

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use softbart::archive::{read_model, write_model};
use softbart::models::{fit_gbart, fit_probit, fit_regression, fit_vc, FitConfig};
use softbart::priors::{sample_tree_from_prior, theta_b, Hypers, SparsityState};
use softbart::sampler::{draw_leaves, log_marginal, mh_tree_step, tau_step};
use softbart::simulate;
use softbart::summaries::{correlation, posterior_probs, rmse};
use softbart::trees::{forest_predict, leaf_weight_matrix, leaf_weights, Gate, Node, SoftTree};
use softbart::{ForestHandle, Opts};

const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn config(exclude: &[&str]) -> FitConfig {
    let mut cfg = FitConfig::with_seed(SEED);
    cfg.opts.num_burn = 2500;
    cfg.opts.num_save = 2500;
    cfg.exclude = exclude.iter().map(|s| s.to_string()).collect();
    cfg
}

struct Friedman {
    rmse: f64,
    selected: Vec<String>,
    max_nuisance_pip: f64,
}

fn friedman_data() -> (softbart::preprocess::Table, softbart::preprocess::Table, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let train = simulate::friedman(&mut rng, 250, 250, 1.0).unwrap();
    let test = simulate::friedman(&mut rng, 250, 250, 1.0).unwrap();
    let mu = test.column("mu").unwrap().numbers().unwrap();
    (train, test, mu)
}

/// The default Friedman fit is shared by criteria 1 to 3.
fn friedman() -> &'static Friedman {
    static FIT: OnceLock<Friedman> = OnceLock::new();
    FIT.get_or_init(|| {
        let (train, test, mu) = friedman_data();
        let fit = fit_regression(&train, "Y", Some(&test), &config(&["mu"])).unwrap();
        let vs = posterior_probs(&fit.counts, &fit.model.info.transforms.column_map()).unwrap();
        let max_nuisance_pip = vs
            .variables
            .iter()
            .zip(&vs.post_probs)
            .filter(|(v, _)| !["X.1", "X.2", "X.3", "X.4", "X.5"].contains(&v.as_str()))
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        Friedman {
            rmse: rmse(&fit.y_hat_test_mean(), &mu).unwrap(),
            selected: vs.selected_names().iter().map(|s| s.to_string()).collect(),
            max_nuisance_pip,
        }
    })
}

fn c1_friedman_rmse() -> Outcome {
    let r = friedman().rmse;
    outcome(r <= 0.65, format!("test RMSE {r:.4} (bound 0.65)"))
}

fn c2_selection() -> Outcome {
    let f = friedman();
    let pass = f.selected == ["X.1", "X.2", "X.3", "X.4", "X.5"] && f.max_nuisance_pip < 0.5;
    outcome(pass, format!("MPM {:?}, max nuisance PIP {:.3}", f.selected, f.max_nuisance_pip))
}

fn c3_ablation() -> Outcome {
    let (train, test, mu) = friedman_data();
    let mut cfg = config(&["mu"]);
    cfg.opts.update_s = false;
    cfg.hypers.num_tree = 50;
    cfg.hypers.beta = 1.0;
    cfg.hypers.gamma = 0.9;
    let fit = fit_regression(&train, "Y", Some(&test), &cfg).unwrap();
    let ablated = rmse(&fit.y_hat_test_mean(), &mu).unwrap();
    let ratio = ablated / friedman().rmse;
    outcome(ratio >= 1.8, format!("RMSE {ablated:.4}, ratio {ratio:.2} (bound 1.8)"))
}

fn c4_smoothness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let train = simulate::sine(&mut rng, 250, 0.1).unwrap();
    let test = simulate::sine(&mut rng, 1000, 0.1).unwrap();
    let mu = test.column("mu").unwrap().numbers().unwrap();
    let cfg = config(&["mu"]);
    let soft = fit_regression(&train, "Y", Some(&test), &cfg).unwrap();
    let mut hard_cfg = cfg.clone();
    hard_cfg.hypers.hard_trees = true;
    let hard = fit_regression(&train, "Y", Some(&test), &hard_cfg).unwrap();
    let ms = rmse(&soft.y_hat_test_mean(), &mu).unwrap().powi(2);
    let mh = rmse(&hard.y_hat_test_mean(), &mu).unwrap().powi(2);
    outcome(ms < mh, format!("soft MSE {ms:.5} vs hard MSE {mh:.5}"))
}

fn c5_probit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let train = simulate::probit(&mut rng, 250, 250).unwrap();
    let r = train.column("r").unwrap().numbers().unwrap();
    let fit = fit_probit(&train, "Y", None, &config(&["r", "mu"])).unwrap();
    let c = correlation(&fit.r_train_mean(), &r).unwrap();
    outcome(c >= 0.9, format!("cor(r_hat, r) {c:.4} (bound 0.9)"))
}

fn c6_varying_coefficient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let train = simulate::varying_coefficient(&mut rng, 250, 250, 1.0).unwrap();
    let beta = train.column("beta").unwrap().numbers().unwrap();
    let fit = fit_vc(&train, "Y", "Z", None, &config(&["alpha", "beta", "mu"])).unwrap();
    let abar = fit.alpha_bar();
    let a = abar.iter().sum::<f64>() / abar.len() as f64;
    let c = correlation(&fit.beta_train_mean(), &beta).unwrap();
    let s = fit.sigma_mean();
    let pass = a.abs() <= 0.5 && c >= 0.9 && (0.8..=1.3).contains(&s);
    outcome(pass, format!("mean alpha-bar {a:.4}, cor(beta_hat, beta) {c:.4}, sigma {s:.3}"))
}

fn c7_partial_linear() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let train = simulate::friedman(&mut rng, 250, 250, 1.0).unwrap();
    let z = ["X.4".to_string(), "X.5".to_string()];
    let fit = fit_gbart(&train, "Y", &z, None, &config(&["mu"])).unwrap();
    let b = fit.beta_mean();
    let s = fit.sigma_mean();
    let pass = (b[0] - 10.0).abs() <= 1.0 && (b[1] - 5.0).abs() <= 1.0 && (0.8..=1.2).contains(&s);
    outcome(pass, format!("beta ({:.3}, {:.3}), sigma {s:.3}", b[0], b[1]))
}

fn depth_two_tree(tau: f64) -> SoftTree {
    SoftTree {
        root: Node::branch(
            0,
            0.45,
            Node::branch(1, 0.3, Node::leaf(0.0), Node::leaf(0.0)),
            Node::branch(1, 0.7, Node::leaf(0.0), Node::leaf(0.0)),
        ),
        gate: Gate::Soft(tau),
    }
}

fn oracle_a() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let hypers = Hypers { beta: 0.5, ..Hypers::default() };
    let sparsity = SparsityState::uniform(4, false);
    (0..1000).all(|_| {
        let tree = sample_tree_from_prior(&mut rng, &hypers, &sparsity, 1.0);
        let x: Vec<f64> = (0..4).map(|_| rng.random()).collect();
        (leaf_weights(&tree, &x).iter().sum::<f64>() - 1.0).abs() <= 1e-12
    })
}

fn oracle_b() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    [1usize, 5, 12, 20].iter().all(|&n| {
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
        let r: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let w: Vec<f64> = (0..n).map(|_| 0.2 + 3.0 * rng.random::<f64>()).collect();
        let tree = depth_two_tree(0.08);
        let (sigma, sigma_mu) = (0.7, 0.4);
        let phi = leaf_weight_matrix(&tree, &x);
        let mut cov = &phi * phi.transpose() * (sigma_mu * sigma_mu);
        for i in 0..n {
            cov[(i, i)] += sigma * sigma / w[i];
        }
        let chol = cov.cholesky().unwrap();
        let rv = DVector::from_vec(r.clone());
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let dense = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + rv.dot(&chol.solve(&rv)));
        let got = log_marginal(&tree, &x, &r, &w, sigma, sigma_mu).unwrap();
        (got - dense).abs() <= 1e-8
    })
}

fn oracle_c() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 15;
    let x = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
    let r: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
    let w: Vec<f64> = (0..n).map(|i| 0.5 + (i % 3) as f64).collect();
    let tree = depth_two_tree(0.15);
    let (sigma, sigma_mu) = (0.8, 0.6);
    let phi = leaf_weight_matrix(&tree, &x);
    let wm = DMatrix::from_diagonal(&DVector::from_vec(w.clone()));
    let prec = phi.transpose() * &wm * &phi / (sigma * sigma) + DMatrix::identity(4, 4) / (sigma_mu * sigma_mu);
    let cov = prec.try_inverse().unwrap();
    let mean = &cov * (phi.transpose() * &wm * DVector::from_vec(r.clone())) / (sigma * sigma);
    let draws = 100_000;
    let mut s1 = DVector::zeros(4);
    let mut s2 = DMatrix::zeros(4, 4);
    for _ in 0..draws {
        let m = DVector::from_vec(draw_leaves(&mut rng, &tree, &x, &r, &w, sigma, sigma_mu).unwrap());
        s2 += &m * m.transpose();
        s1 += m;
    }
    let d = draws as f64;
    let m = &s1 / d;
    let c = &s2 / d - &m * m.transpose();
    (0..4).all(|a| {
        (m[a] - mean[a]).abs() <= 3.0 * (cov[(a, a)] / d).sqrt()
            && (0..4).all(|b| {
                let se = ((cov[(a, a)] * cov[(b, b)] + cov[(a, b)].powi(2)) / d).sqrt();
                (c[(a, b)] - cov[(a, b)]).abs() <= 3.0 * se
            })
    })
}

fn small_data(n: usize) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let x = DMatrix::from_fn(n, 4, |_, _| rng.random::<f64>());
    let y = (0..n)
        .map(|i| (std::f64::consts::PI * x[(i, 0)] * x[(i, 1)]).sin() + 0.2 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (x, y)
}

fn oracle_e() -> bool {
    let (x, y) = small_data(40);
    let mut a = ForestHandle::new(Hypers::default(), Opts::default(), 4, SEED).unwrap();
    let mut b = ForestHandle::new(Hypers::default(), Opts::default(), 4, SEED).unwrap();
    let oa = a.do_gibbs(&x, &y, &x, 50).unwrap();
    let ob = b.do_gibbs_weighted(&x, &y, &vec![1.0; 40], &x, 50).unwrap();
    oa.iter().zip(ob.iter()).all(|(u, v)| u.to_bits() == v.to_bits()) && a.get_sigma().to_bits() == b.get_sigma().to_bits()
}

fn oracle_f() -> bool {
    let (x, y) = small_data(60);
    let mut f = ForestHandle::new(Hypers { sigma_hat: 0.5, ..Hypers::default() }, Opts::default(), 4, SEED).unwrap();
    (0..200).all(|_| {
        f.do_gibbs(&x, &y, &x, 1).unwrap();
        let state = f.state();
        let scratch = forest_predict(&state.trees, &x).unwrap();
        (0..x.nrows()).all(|i| (state.tree_fits.iter().map(|t| t[i]).sum::<f64>() - scratch[i]).abs() <= 1e-10)
    })
}

fn c8_oracles() -> Outcome {
    let checks = [
        ("a", oracle_a()),
        ("b", oracle_b()),
        ("c", oracle_c()),
        ("d", theta_b(1.0, 3) == 11.0 / 6.0),
        ("e", oracle_e()),
        ("f", oracle_f()),
    ];
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    outcome(failed.is_empty(), if failed.is_empty() { "a-f hold".into() } else { format!("failed: {failed:?}") })
}

fn c9_prior_recovery() -> Outcome {
    let hypers = Hypers::default();
    let sparsity = SparsityState::uniform(3, false);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut tree = SoftTree::stump(0.0, Gate::Soft(0.1));
    let sweeps = 100_000;
    let (mut root_split, mut tau_sum) = (0usize, 0.0);
    for _ in 0..sweeps {
        mh_tree_step(&mut rng, &mut tree, &hypers, &sparsity, 0.0, |_| 0.0);
        tau_step(&mut rng, &mut tree, hypers.tau_scale, 0.3, 0.0, |_| 0.0);
        root_split += usize::from(!tree.root.is_leaf());
        tau_sum += tree.tau();
    }
    let f = root_split as f64 / sweeps as f64;
    let t = tau_sum / sweeps as f64;
    let pass = (f - 0.95).abs() <= 0.02 && (t - 0.1).abs() <= 0.005;
    outcome(pass, format!("root split {f:.4}, tau mean {t:.4} over {sweeps} sweeps"))
}

fn softbart(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_softbart")).args(args).output().map(|o| o.status.success()).unwrap_or(false)
}

fn cli_run(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let s = |p: &str| dir.join(p).to_string_lossy().into_owned();
    let ok = softbart(&["simulate", "--setting", "friedman", "--n", "60", "--p", "8", "--seed", "1", "--out", &s("train.csv")])
        && softbart(&["simulate", "--setting", "friedman", "--n", "30", "--p", "8", "--seed", "2", "--out", &s("test.csv")])
        && softbart(&[
            "fit", "--data", &s("train.csv"), "--test", &s("test.csv"), "--outcome", "Y", "--exclude", "mu",
            "--seed", "1", "--burn", "100", "--save", "50", "--out", &s("model.sbart"),
        ])
        && softbart(&["predict", "--model", &s("model.sbart"), "--data", &s("test.csv"), "--out", &s("pred")])
        && softbart(&["pdp", "--model", &s("model.sbart"), "--data", &s("train.csv"), "--variable", "X.1", "--out", &s("pd.csv")])
        && softbart(&["varselect", "--model", &s("model.sbart"), "--out", &s("vs.csv")]);
    if !ok {
        return Err("a CLI command failed".into());
    }
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    Ok(files)
}

fn c10_determinism() -> Outcome {
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (a, b) = match (cli_run(da.path()), cli_run(db.path())) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, e),
    };
    let identical = a == b;

    let (train, test, _) = friedman_data();
    let mut cfg = FitConfig::with_seed(SEED);
    cfg.opts.num_burn = 100;
    cfg.opts.num_save = 50;
    cfg.exclude = vec!["mu".into()];
    let fit = fit_regression(&train, "Y", None, &cfg).unwrap();
    let mut buf = Vec::new();
    write_model(&fit.model, &mut buf).unwrap();
    let back = read_model(buf.as_slice()).unwrap();
    let pa = fit.model.predict(&test).unwrap();
    let pb = back.predict(&test).unwrap();
    let exact = pa.mu.iter().zip(pb.mu.iter()).all(|(u, v)| u.to_bits() == v.to_bits());
    outcome(
        identical && exact,
        format!("{} CLI files byte-identical: {identical}; archive round-trip bit-exact: {exact}", a.len()),
    )
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("1 Friedman test RMSE", c1_friedman_rmse),
        ("2 variable selection", c2_selection),
        ("3 sparsity ablation", c3_ablation),
        ("4 soft vs hard smoothness", c4_smoothness),
        ("5 probit latent recovery", c5_probit),
        ("6 varying coefficients", c6_varying_coefficient),
        ("7 partial-linear coefficients", c7_partial_linear),
        ("8 oracle suite", c8_oracles),
        ("9 prior recovery", c9_prior_recovery),
        ("10 determinism and persistence", c10_determinism),
    ];
    // `cargo test -- --list` and similar probes pass flags; only run on a plain invocation or a name filter
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let results: Vec<(&str, Outcome)> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria.iter().map(|(name, f)| (*name, s.spawn(f))).collect();
        handles
            .into_iter()
            .map(|(name, h)| (name, h.join().unwrap_or_else(|_| outcome(false, "panicked".into()))))
            .collect()
    });
    let mut failed = 0;
    for (name, r) in &results {
        println!("{} criterion {name}: {}", if r.pass { "PASS" } else { "FAIL" }, r.detail);
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
