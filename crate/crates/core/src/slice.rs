//! Univariate slice sampling with stepping out and shrinkage.

use rand::Rng;

/// One slice-sampling transition from `x0` targeting `exp(log_density)`.
///
/// `width` is the initial bracket width, `max_steps` caps stepping out, and
/// the bracket is clipped to `[lower, upper]` where the density is zero outside.
pub fn slice_sample<R, F>(
    rng: &mut R,
    x0: f64,
    log_density: F,
    width: f64,
    max_steps: usize,
    lower: f64,
    upper: f64,
) -> f64
where
    R: Rng + ?Sized,
    F: Fn(f64) -> f64,
{
    let f0 = log_density(x0);
    debug_assert!(f0.is_finite(), "slice sampler started outside the support");
    let e: f64 = -(1.0 - rng.random::<f64>()).ln();
    let level = f0 - e;

    let u: f64 = rng.random::<f64>();
    let mut left = x0 - width * u;
    let mut right = left + width;
    let v: f64 = rng.random::<f64>();
    let mut j = (max_steps as f64 * v).floor() as usize;
    let mut k = max_steps.saturating_sub(1).saturating_sub(j);
    while j > 0 && left > lower && log_density(left) > level {
        left -= width;
        j -= 1;
    }
    while k > 0 && right < upper && log_density(right) > level {
        right += width;
        k -= 1;
    }
    left = left.max(lower);
    right = right.min(upper);

    loop {
        let x1 = left + rng.random::<f64>() * (right - left);
        if log_density(x1) > level {
            return x1;
        }
        if x1 < x0 {
            left = x1;
        } else {
            right = x1;
        }
        if right - left <= f64::EPSILON * x0.abs().max(1e-300) {
            return x0;
        }
    }
}
