//! Small descriptive-statistics helpers shared by the estimators.

use serde::{Deserialize, Serialize};

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub mc_error: f64,
}

impl Estimate {
    pub fn new(value: f64, mc_error: f64) -> Self {
        Self { value, mc_error }
    }

    /// Whether `target` lies within `k` standard errors (plus `slack`).
    pub fn agrees_with(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.value - target).abs() <= k * self.mc_error + slack
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Sample mean with its i.i.d. standard error.
pub fn mean_estimate(xs: &[f64]) -> Estimate {
    Estimate::new(mean(xs), (variance(xs) / xs.len() as f64).sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).0
}

/// `Σ_{j>n} j^{-p}` for `p > 1`.
///
/// The first 64 terms are summed directly; the remainder uses the
/// Euler–Maclaurin expansion, which is accurate to rounding for the
/// remaining start index ≥ 65.
pub fn power_tail(p: f64, n: usize) -> f64 {
    debug_assert!(p > 1.0);
    const DIRECT: usize = 64;
    let mut direct = 0.0;
    // sum small terms first
    for j in (n + 1..=n + DIRECT).rev() {
        direct += (j as f64).powf(-p);
    }
    let a = (n + DIRECT + 1) as f64;
    let f = a.powf(-p);
    let integral = a.powf(1.0 - p) / (p - 1.0);
    // derivatives f^{(2k-1)}(a) = -p(p+1)…(p+2k-2) a^{-p-2k+1}
    let d1 = -p * a.powf(-p - 1.0);
    let d3 = -p * (p + 1.0) * (p + 2.0) * a.powf(-p - 3.0);
    let d5 = -p * (p + 1.0) * (p + 2.0) * (p + 3.0) * (p + 4.0) * a.powf(-p - 5.0);
    let em = integral + 0.5 * f - d1 / 12.0 + d3 / 720.0 - d5 / 30_240.0;
    em + direct
}
