//! Small numerical helpers shared by the estimators.

/// Arithmetic mean, shifted by the first element so constant inputs are
/// reproduced exactly; NaN for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    match xs.first() {
        None => f64::NAN,
        Some(&x0) if x0.is_finite() => x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64,
        Some(_) => xs.iter().sum::<f64>() / xs.len() as f64,
    }
}

/// Sample variance with the n−1 divisor.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1) as f64
}

/// Standard error of the mean of `xs`.
///
/// Applied to per-sample influence values this is the infinitesimal
/// jackknife estimate for any smooth function of sample means.
pub fn std_error(xs: &[f64]) -> f64 {
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

/// `log(mean(exp(xs)))` with max-shift. Returns +∞ if any entry is +∞.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + (s / xs.len() as f64).ln()
}

/// `u ln u − u + 1`, the pointwise integrand of entropy relative to the mean.
///
/// Nonnegative, zero only at u = 1, and evaluated without cancellation near 1.
pub fn relative_entropy_term(u: f64) -> f64 {
    if u == 0.0 {
        return 1.0;
    }
    let t = u - 1.0;
    if t.abs() < 1e-2 {
        // (1+t)ln(1+t) − t = t²/2 − t³/6 + t⁴/12 − t⁵/20 + t⁶/30 − …
        let t2 = t * t;
        t2 * (0.5 + t * (-1.0 / 6.0 + t * (1.0 / 12.0 + t * (-1.0 / 20.0 + t * (1.0 / 30.0 - t / 42.0)))))
    } else {
        u * u.ln() - t
    }
}

/// `x ln x` with the convention `0 ln 0 = 0`.
pub fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_mean_exp_handles_large_exponents() {
        let v = log_mean_exp(&[1000.0, 1000.0]);
        assert!((v - 1000.0).abs() < 1e-12);
        assert_eq!(log_mean_exp(&[f64::INFINITY, 0.0]), f64::INFINITY);
        assert!((log_mean_exp(&[0.0, 2.0_f64.ln()]) - 1.5_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn relative_entropy_term_series_matches_direct() {
        for &u in &[0.98, 0.995, 1.0, 1.002, 1.0099] {
            let direct = u * f64::ln(u) - (u - 1.0);
            assert!((relative_entropy_term(u) - direct).abs() < 1e-15);
        }
        assert!(relative_entropy_term(1.0 + 1e-9) > 0.0);
        assert_eq!(relative_entropy_term(0.0), 1.0);
    }

    #[test]
    fn variance_uses_n_minus_one() {
        assert_eq!(sample_variance(&[0.0, 2.0]), 2.0);
        assert_eq!(sample_variance(&[5.0]), 0.0);
    }
}
