//! Small statistics helpers: moments, Kolmogorov-Smirnov, quantiles and
//! least-squares lines.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::montecarlo::compensated_sum;

pub fn mean(xs: &[f64]) -> f64 {
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    compensated_sum(xs.iter().map(|x| (x - m) * (x - m))) / (xs.len() - 1) as f64
}

/// Sample skewness and excess kurtosis (moment estimators). `None` for a
/// sample with zero spread.
pub fn skewness_kurtosis(xs: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    let m = mean(xs);
    let m2 = compensated_sum(xs.iter().map(|x| (x - m).powi(2))) / n;
    if !(m2 > 1e-300) {
        return None;
    }
    let m3 = compensated_sum(xs.iter().map(|x| (x - m).powi(3))) / n;
    let m4 = compensated_sum(xs.iter().map(|x| (x - m).powi(4))) / n;
    Some((m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0))
}

/// Kolmogorov-Smirnov distance between the empirical law of `xs` and
/// `N(center, variance)`.
pub fn ks_normal(xs: &[f64], center: f64, variance: f64) -> f64 {
    let normal = match Normal::new(center, variance.sqrt()) {
        Ok(n) => n,
        Err(_) => return 1.0,
    };
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = normal.cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Asymptotic critical value of the one-sample KS statistic at level 1%.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// Linear-interpolated empirical quantile (type 7).
pub fn quantile(xs: &mut [f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (xs.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
}

/// Ordinary least squares `y = a + b x`; returns `(intercept, slope, r2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (intercept, slope, r2)
}
