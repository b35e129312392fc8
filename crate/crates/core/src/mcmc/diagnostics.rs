use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::stats::{mean, Estimate};

/// Shortest series accepted by [`iact`].
pub const MIN_SERIES: usize = 100;

/// Autocorrelations `ρ_0..ρ_{n−1}` (biased normalization) via zero-padded FFT.
pub fn autocorrelation(series: &[f64]) -> Result<Vec<f64>> {
    let n = series.len();
    let m = mean(series);
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|x| Complex::new(x - m, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let c0 = buf[0].re;
    if !(c0 > 1e-300 * n as f64) {
        return Err(Error::DegenerateSeries);
    }
    Ok(buf[..n].iter().map(|c| c.re / c0).collect())
}

/// Integrated autocorrelation time `1 + 2Σρ_k`, truncated by Geyer's initial
/// positive (and monotone) sequence. Floored at 0.5 so that antithetic
/// series still report a positive value.
pub fn iact(series: &[f64]) -> Result<f64> {
    if series.len() < MIN_SERIES {
        return Err(Error::domain(format!(
            "IACT needs at least {MIN_SERIES} values, got {}",
            series.len()
        )));
    }
    let rho = autocorrelation(series)?;
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    for m in 0..rho.len() / 2 {
        let g = rho[2 * m] + rho[2 * m + 1];
        if g <= 0.0 {
            break;
        }
        let g = g.min(prev);
        sum += g;
        prev = g;
    }
    Ok((2.0 * sum - 1.0).max(0.5))
}

/// Effective sample size `min(n, n/τ)`.
pub fn ess(n: usize, tau: f64) -> f64 {
    (n as f64 / tau).min(n as f64)
}

/// Mean of a correlated series with the IACT-corrected standard error.
pub fn chain_mean(series: &[f64]) -> Result<Estimate> {
    let tau = iact(series)?;
    let m = mean(series);
    let var = crate::stats::variance(series);
    Ok(Estimate::new(m, (var * tau / series.len() as f64).sqrt()))
}

/// Variance of a correlated series, with the standard error of the mean of
/// the squared deviations.
pub fn chain_variance(series: &[f64]) -> Result<Estimate> {
    let m = mean(series);
    let sq: Vec<f64> = series.iter().map(|x| (x - m).powi(2)).collect();
    let mut e = chain_mean(&sq)?;
    // unbiased
    e.value *= series.len() as f64 / (series.len() as f64 - 1.0);
    Ok(e)
}
