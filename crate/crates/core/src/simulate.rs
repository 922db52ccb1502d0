//! Synthetic benchmark data.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::models::truncnorm::std_normal_cdf;
use crate::preprocess::{Column, Table};

/// `10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5`
pub fn friedman_mean(x: &[f64]) -> f64 {
    10.0 * (std::f64::consts::PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
}

pub fn covariate_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("X.{j}")).collect()
}

fn check(n: usize, p: usize, min_p: usize, sigma: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if p < min_p {
        return Err(Error::InvalidArgument(format!("p must be at least {min_p}")));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument("sigma must be finite and nonnegative".into()));
    }
    Ok(())
}

fn uniform_rows<R: Rng + ?Sized>(rng: &mut R, n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..p).map(|_| rng.random::<f64>()).collect()).collect()
}

fn covariate_columns(rows: &[Vec<f64>], p: usize) -> Vec<Column> {
    covariate_names(p)
        .into_iter()
        .enumerate()
        .map(|(j, name)| Column::numeric(name, rows.iter().map(|r| r[j]).collect()))
        .collect()
}

fn noise<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform covariates `X.1..X.p`, outcome `Y = mu + sigma eps` and true mean `mu`.
pub fn friedman<R: Rng + ?Sized>(rng: &mut R, n: usize, p: usize, sigma: f64) -> Result<Table> {
    check(n, p, 5, sigma)?;
    let rows = uniform_rows(rng, n, p);
    let mu: Vec<f64> = rows.iter().map(|r| friedman_mean(r)).collect();
    let y: Vec<f64> = mu.iter().map(|m| m + sigma * noise(rng)).collect();
    let mut cols = covariate_columns(&rows, p);
    cols.push(Column::numeric("Y", y));
    cols.push(Column::numeric("mu", mu));
    Table::new(cols)
}

/// One covariate `X.1`, `Y = sin(2 pi x) + sigma eps`.
pub fn sine<R: Rng + ?Sized>(rng: &mut R, n: usize, sigma: f64) -> Result<Table> {
    check(n, 1, 1, sigma)?;
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let mu: Vec<f64> = x.iter().map(|v| (2.0 * std::f64::consts::PI * v).sin()).collect();
    let y: Vec<f64> = mu.iter().map(|m| m + sigma * noise(rng)).collect();
    Table::new(vec![Column::numeric("X.1", x), Column::numeric("Y", y), Column::numeric("mu", mu)])
}

/// Binary `Y ~ Bernoulli(Phi(r))` with `r = 3 (f(x) - 14) / 5` for the
/// Friedman mean `f`; also returns `r` and the probability `mu`.
pub fn probit<R: Rng + ?Sized>(rng: &mut R, n: usize, p: usize) -> Result<Table> {
    check(n, p, 5, 0.0)?;
    let rows = uniform_rows(rng, n, p);
    let r: Vec<f64> = rows.iter().map(|x| 3.0 * (friedman_mean(x) - 14.0) / 5.0).collect();
    let mu: Vec<f64> = r.iter().map(|v| std_normal_cdf(*v)).collect();
    let y: Vec<f64> = mu.iter().map(|m| if rng.random::<f64>() < *m { 1.0 } else { 0.0 }).collect();
    let mut cols = covariate_columns(&rows, p);
    cols.push(Column::numeric("Y", y));
    cols.push(Column::numeric("r", r));
    cols.push(Column::numeric("mu", mu));
    Table::new(cols)
}

/// Varying coefficient data: `Z ~ Normal(0, 1)`, `alpha = 0`, `beta(x)` the
/// Friedman mean, `Y = Z beta(X) + sigma eps`.
pub fn varying_coefficient<R: Rng + ?Sized>(rng: &mut R, n: usize, p: usize, sigma: f64) -> Result<Table> {
    check(n, p, 5, sigma)?;
    let rows = uniform_rows(rng, n, p);
    let beta: Vec<f64> = rows.iter().map(|r| friedman_mean(r)).collect();
    let z: Vec<f64> = (0..n)
        .map(|_| loop {
            let v = noise(rng);
            if v != 0.0 {
                break v;
            }
        })
        .collect();
    let mu: Vec<f64> = beta.iter().zip(&z).map(|(b, zi)| b * zi).collect();
    let y: Vec<f64> = mu.iter().map(|m| m + sigma * noise(rng)).collect();
    let mut cols = covariate_columns(&rows, p);
    cols.push(Column::numeric("Z", z));
    cols.push(Column::numeric("Y", y));
    cols.push(Column::numeric("alpha", vec![0.0; n]));
    cols.push(Column::numeric("beta", beta));
    cols.push(Column::numeric("mu", mu));
    Table::new(cols)
}

/// Binary treatment data: `A ~ Bernoulli(1/2)`,
/// `Y = f(X) + A tau + sigma eps` with Friedman mean `f` and constant effect `tau`.
pub fn treatment<R: Rng + ?Sized>(rng: &mut R, n: usize, p: usize, sigma: f64, tau: f64) -> Result<Table> {
    check(n, p, 5, sigma)?;
    let rows = uniform_rows(rng, n, p);
    let a: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 }).collect();
    let mu: Vec<f64> = rows.iter().zip(&a).map(|(r, ai)| friedman_mean(r) + ai * tau).collect();
    let y: Vec<f64> = mu.iter().map(|m| m + sigma * noise(rng)).collect();
    let mut cols = covariate_columns(&rows, p);
    cols.push(Column::numeric("A", a));
    cols.push(Column::numeric("Y", y));
    cols.push(Column::numeric("tau", vec![tau; n]));
    cols.push(Column::numeric("mu", mu));
    Table::new(cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn friedman_formula_and_noise_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = friedman(&mut rng, 50, 7, 0.0).unwrap();
        assert_eq!(t.ncols(), 9);
        let mu = t.column("mu").unwrap().numbers().unwrap();
        let y = t.column("Y").unwrap().numbers().unwrap();
        assert_eq!(mu, y);
        for i in 0..50 {
            let x: Vec<f64> = (1..=5).map(|j| t.column(&format!("X.{j}")).unwrap().data.number(i).unwrap()).collect();
            assert!((friedman_mean(&x) - mu[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn reproducible() {
        let a = friedman(&mut ChaCha8Rng::seed_from_u64(3), 20, 5, 1.0).unwrap();
        let b = friedman(&mut ChaCha8Rng::seed_from_u64(3), 20, 5, 1.0).unwrap();
        assert_eq!(a.column("Y").unwrap().numbers().unwrap(), b.column("Y").unwrap().numbers().unwrap());
    }

    #[test]
    fn sine_has_one_covariate() {
        let t = sine(&mut ChaCha8Rng::seed_from_u64(3), 10, 0.1).unwrap();
        assert_eq!(t.column_names(), vec!["X.1", "Y", "mu"]);
    }

    #[test]
    fn invalid_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(friedman(&mut rng, 10, 4, 1.0).is_err());
        assert!(friedman(&mut rng, 0, 5, 1.0).is_err());
        assert!(friedman(&mut rng, 10, 5, -1.0).is_err());
    }
}
