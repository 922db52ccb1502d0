//! Truncated normal sampling.

use std::f64::consts::SQRT_2;

use rand::Rng;
use statrs::function::erf::{erfc, erfc_inv};

/// Beyond this many standard deviations the inverse CDF gives way to
/// exponential rejection.
const TAIL_SWITCH: f64 = 5.0;

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Standard normal restricted to `(a, inf)`; the result is strictly greater than `a`.
pub fn sample_std_lower<R: Rng + ?Sized>(rng: &mut R, a: f64) -> f64 {
    if a > TAIL_SWITCH {
        // exponential proposal with the optimal rate
        let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
        loop {
            let x = a - open_unit(rng).ln() / lambda;
            let accept = (-0.5 * (x - lambda).powi(2)).exp();
            if rng.random::<f64>() < accept && x > a {
                return x;
            }
        }
    }
    loop {
        let u = open_unit(rng);
        let x = if a <= 0.0 {
            let lo = std_normal_cdf(a);
            std_normal_quantile(lo + u * (1.0 - lo))
        } else {
            // work in the upper tail, where the mass is represented accurately
            -std_normal_quantile(u * std_normal_cdf(-a))
        };
        if x > a && x.is_finite() {
            return x;
        }
    }
}

/// `Normal(mean, 1)` restricted to `(0, inf)` when `positive`, else `(-inf, 0)`.
pub fn sample_latent<R: Rng + ?Sized>(rng: &mut R, mean: f64, positive: bool) -> f64 {
    if positive {
        mean + sample_std_lower(rng, -mean)
    } else {
        mean - sample_std_lower(rng, mean)
    }
}
