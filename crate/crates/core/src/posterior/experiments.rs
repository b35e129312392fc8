use serde::{Deserialize, Serialize};

use super::{hellinger_estimate, map_prior_samples, snis, HeatConjugate, HellingerValue, PosteriorSpec};
use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::sequence_space::SpectralField;
use crate::stats::{log_log_slope, Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellposednessRow {
    /// `‖y − y′‖`
    pub size: f64,
    pub hellinger: Estimate,
    /// Exact distance when the posterior has a closed form.
    pub oracle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellposednessTable {
    pub rows: Vec<WellposednessRow>,
    /// Fitted slope of `log d_Hell` against `log ‖y − y′‖`.
    pub slope: f64,
    /// `max(d/ε) / min(d/ε)` over the nonzero perturbations.
    pub ratio_spread: f64,
    pub max_ratio: f64,
}

/// Hellinger distance between `μ^y` and `μ^{y+δy}` for each data offset, on a
/// single shared prior sample.
pub fn wellposedness_experiment(
    post: &PosteriorSpec,
    perturbations: &[Vec<f64>],
    m: usize,
    seed: SeedStream,
) -> Result<WellposednessTable> {
    let perturbed: Vec<PosteriorSpec> = perturbations
        .iter()
        .map(|dy| Ok(post.with_potential(post.potential.with_data_offset(dy)?)))
        .collect::<Result<_>>()?;
    let phis = map_prior_samples(&post.prior, post.n, m, seed, |u| {
        let mut row = Vec::with_capacity(perturbed.len() + 1);
        row.push(post.potential_at(u)?);
        for p in &perturbed {
            row.push(p.potential_at(u)?);
        }
        Ok(row)
    })?;
    let base: Vec<f64> = phis.iter().map(|r| r[0]).collect();
    let exact_base = HeatConjugate::from_posterior(post);
    let mut rows = Vec::new();
    for (k, (dy, p)) in perturbations.iter().zip(&perturbed).enumerate() {
        let other: Vec<f64> = phis.iter().map(|r| r[k + 1]).collect();
        let size = dy.iter().map(|v| v * v).sum::<f64>().sqrt();
        let oracle = match (&exact_base, HeatConjugate::from_posterior(p)) {
            (Some(a), Some(b)) => Some(a.hellinger(&b).value),
            _ => None,
        };
        rows.push(WellposednessRow {
            size,
            hellinger: hellinger_estimate(&base, &other)?,
            oracle,
        });
    }
    let fit: Vec<&WellposednessRow> = rows.iter().filter(|r| r.size > 0.0 && r.hellinger.value > 0.0).collect();
    let ratios: Vec<f64> = fit.iter().map(|r| r.hellinger.value / r.size).collect();
    let slope = if fit.len() >= 2 {
        log_log_slope(
            &fit.iter().map(|r| r.size).collect::<Vec<_>>(),
            &fit.iter().map(|r| r.hellinger.value).collect::<Vec<_>>(),
        )
    } else {
        f64::NAN
    };
    let max_ratio = ratios.iter().cloned().fold(f64::NAN, f64::max);
    let min_ratio = ratios.iter().cloned().fold(f64::NAN, f64::min);
    Ok(WellposednessTable {
        rows,
        slope,
        ratio_spread: max_ratio / min_ratio,
        max_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproximationRow {
    pub n: usize,
    pub hellinger: Estimate,
    pub exact: Option<HellingerValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximationTable {
    pub rows: Vec<ApproximationRow>,
    /// Slope of `log d_Hell` against `log N`, from the exact values when
    /// available and from the estimates otherwise.
    pub slope: f64,
}

/// `d_Hell(μ, μ^N)` where `μ^N` has potential `Φ ∘ P^N` and `μ` is the
/// posterior at its own truncation.
pub fn approximation_experiment(post: &PosteriorSpec, n_list: &[usize], m: usize, seed: SeedStream) -> Result<ApproximationTable> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("N list must be increasing"));
    }
    let approx: Vec<PosteriorSpec> = n_list
        .iter()
        .map(|&n| post.with_potential(post.potential.clone().truncated(n)))
        .collect();
    let phis = map_prior_samples(&post.prior, post.n, m, seed, |u| {
        let mut row = vec![post.potential_at(u)?];
        for p in &approx {
            row.push(p.potential_at(u)?);
        }
        Ok(row)
    })?;
    let base: Vec<f64> = phis.iter().map(|r| r[0]).collect();
    let exact_ref = HeatConjugate::from_posterior(post);
    let mut rows = Vec::new();
    for (k, (&n, p)) in n_list.iter().zip(&approx).enumerate() {
        let other: Vec<f64> = phis.iter().map(|r| r[k + 1]).collect();
        let exact = match (&exact_ref, HeatConjugate::from_posterior(p)) {
            (Some(a), Some(b)) => Some(a.hellinger(&b)),
            _ => None,
        };
        rows.push(ApproximationRow {
            n,
            hellinger: hellinger_estimate(&base, &other)?,
            exact,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| match r.exact {
            Some(e) if e.log_value.is_finite() => Some((r.n as f64, e.log_value)),
            Some(_) => None,
            None => (r.hellinger.value > 0.0).then(|| (r.n as f64, r.hellinger.value.ln())),
        })
        .collect();
    let slope = if pts.len() >= 2 {
        let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let ly: Vec<f64> = pts.iter().map(|p| p.1).collect();
        crate::stats::linear_fit(&lx, &ly).0
    } else {
        f64::NAN
    };
    Ok(ApproximationTable { rows, slope })
}

/// Test functionals for the expectation bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Functional {
    /// `⟨u, φ_1⟩`
    FirstCoefficient,
    /// `‖u‖²`
    NormSquared,
    /// `exp(min(‖u‖, 10))`
    ClippedExpNorm,
    /// A constant, for which the two expectations coincide exactly.
    Constant,
}

impl Functional {
    pub const ALL: [Functional; 3] = [Functional::FirstCoefficient, Functional::NormSquared, Functional::ClippedExpNorm];

    pub fn eval(&self, u: &SpectralField) -> f64 {
        match self {
            Functional::FirstCoefficient => u.coeff(1),
            Functional::NormSquared => u.sobolev_norm(0.0).powi(2),
            Functional::ClippedExpNorm => u.sobolev_norm(0.0).min(10.0).exp(),
            Functional::Constant => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub functional: Functional,
    /// `|E^{μ1} f − E^{μ2} f|`
    pub lhs: f64,
    /// `2·(E^{μ1}f² + E^{μ2}f²)^{1/2}·d_Hell`
    pub bound: f64,
    /// Combined standard error of the left-hand side.
    pub mc_error: f64,
    pub holds: bool,
}

/// Check `|E^{μ1}f − E^{μ2}f| ≤ 2(E^{μ1}f² + E^{μ2}f²)^{1/2} d_Hell` up to three
/// combined standard errors.
pub fn expectation_transfer_check(
    functionals: &[Functional],
    post1: &PosteriorSpec,
    post2: &PosteriorSpec,
    m: usize,
    seed: SeedStream,
) -> Result<Vec<TransferRow>> {
    post1.same_reference(post2)?;
    let rows = map_prior_samples(&post1.prior, post1.n, m, seed, |u| {
        let vals: Vec<f64> = functionals.iter().map(|f| f.eval(u)).collect();
        Ok((post1.potential_at(u)?, post2.potential_at(u)?, vals))
    })?;
    let p1: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let p2: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let d = hellinger_estimate(&p1, &p2)?;
    let mut out = Vec::new();
    for (k, &f) in functionals.iter().enumerate() {
        let v: Vec<f64> = rows.iter().map(|r| r.2[k]).collect();
        let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
        let (e1, e2) = (snis(&p1, &v), snis(&p2, &v));
        let (s1, s2) = (snis(&p1, &sq), snis(&p2, &sq));
        let lhs = if f == Functional::Constant {
            0.0
        } else {
            (e1.value - e2.value).abs()
        };
        let bound = 2.0 * (s1.value + s2.value).sqrt() * d.value;
        let mc_error = (e1.mc_error.powi(2) + e2.mc_error.powi(2)).sqrt();
        let bound_err = 2.0 * (s1.value + s2.value).sqrt() * d.mc_error;
        out.push(TransferRow {
            functional: f,
            lhs,
            bound,
            mc_error,
            holds: lhs <= bound + 3.0 * (mc_error + bound_err),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::{HeatPotential, Potential};
    use crate::random_fields::{GaussianPrior, Prior};
    use crate::sequence_space::BasisSpec;

    fn heat_post(n: usize, y: Vec<f64>) -> PosteriorSpec {
        let b = BasisSpec::dirichlet_1d();
        let prior = Prior::Gaussian(GaussianPrior::new(b, 2.0, 1.0).unwrap());
        PosteriorSpec::new(prior, Potential::Heat(HeatPotential::new(b, 0.0, y).unwrap()), n).unwrap()
    }

    #[test]
    fn wellposedness_is_lipschitz_for_the_heat_posterior() {
        let post = heat_post(1, vec![0.4]);
        let eps = [0.04, 0.02, 0.01];
        let pert: Vec<Vec<f64>> = eps.iter().map(|e| vec![*e]).collect();
        let t = wellposedness_experiment(&post, &pert, 50_000, SeedStream::new(3, 1)).unwrap();
        assert!((t.slope - 1.0).abs() < 0.25, "{t:?}");
        assert!(t.ratio_spread < 1.5);
        for r in &t.rows {
            assert!(r.hellinger.agrees_with(r.oracle.unwrap(), 3.0, 0.0), "{r:?}");
        }
        let zero = wellposedness_experiment(&post, &[vec![0.0]], 1000, SeedStream::new(3, 1)).unwrap();
        assert_eq!(zero.rows[0].hellinger.value, 0.0);
    }

    #[test]
    fn approximation_at_full_truncation_is_zero() {
        let post = heat_post(8, vec![1.0; 8]);
        let t = approximation_experiment(&post, &[2, 8], 1000, SeedStream::new(4, 0)).unwrap();
        assert_eq!(t.rows[1].hellinger.value, 0.0);
        assert_eq!(t.rows[1].exact.unwrap().value, 0.0);
        assert!(t.rows[0].exact.unwrap().log_value.is_finite());
    }

    #[test]
    fn transfer_bound_trivial_cases() {
        let post = heat_post(2, vec![1.0, 1.0]);
        let rows = expectation_transfer_check(
            &[Functional::FirstCoefficient, Functional::Constant],
            &post,
            &post,
            2000,
            SeedStream::new(5, 0),
        )
        .unwrap();
        assert_eq!(rows[0].lhs, 0.0);
        assert_eq!(rows[1].lhs, 0.0);
        assert!(rows.iter().all(|r| r.holds));
    }
}
