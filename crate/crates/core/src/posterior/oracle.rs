use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{HeatPotential, PosteriorSpec};
use crate::error::{Error, Result};
use crate::quadrature::{gauss_hermite, gauss_legendre, Rule};
use crate::random_fields::{GaussianPrior, Prior};
use crate::sequence_space::SpectralField;

/// Tensor-product quadrature over the first `active_modes` coefficients, the
/// remaining ones frozen at the prior mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOracle {
    pub active_modes: usize,
    pub nodes_per_mode: usize,
    /// Largest change allowed when the node count is doubled.
    pub tolerance: f64,
}

impl Default for QuadratureOracle {
    fn default() -> Self {
        Self {
            active_modes: 1,
            nodes_per_mode: 40,
            tolerance: 1e-8,
        }
    }
}

impl QuadratureOracle {
    pub fn new(active_modes: usize) -> Self {
        Self {
            active_modes,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureMoments {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub z: f64,
    pub log_z: f64,
    /// Largest change observed under refinement.
    pub refinement_change: f64,
}

/// Posterior mean, covariance and normalization constant by brute-force
/// quadrature, with a built-in refinement check.
///
/// For Gaussian priors the Gauss–Hermite rule is re-centred and re-scaled on
/// the posterior (adaptive Gauss–Hermite): a rule laid out on the prior needs
/// far more nodes once the likelihood concentrates the posterior. The
/// centring is iterated to a fixed point; if it collapses or fails to settle,
/// or if doubling the node count moves any output by more than the
/// tolerance, the result is reported as unreliable.
pub fn quadrature_moments(post: &PosteriorSpec, oracle: &QuadratureOracle) -> Result<QuadratureMoments> {
    let k = oracle.active_modes;
    if k == 0 || k > 3 {
        return Err(Error::config("the quadrature oracle handles 1 to 3 active modes"));
    }
    if k > post.n {
        return Err(Error::config("more active modes than the posterior truncation"));
    }
    let nodes = oracle.nodes_per_mode;
    let mut frame: Vec<(f64, f64)> = (1..=k).map(|j| (0.0, post.prior.gamma(j))).collect();
    if matches!(post.prior, Prior::Gaussian(_)) {
        let mut settled = false;
        for _ in 0..MAX_RECENTRING {
            let m = tensor_moments(post, k, nodes, &frame)?;
            let next: Vec<(f64, f64)> = (0..k).map(|i| (m.mean[i], m.cov[(i, i)].sqrt())).collect();
            if next.iter().any(|(c, s)| !(c.is_finite() && *s > 0.0 && s.is_finite())) {
                return Err(Error::OracleUnreliable { change: f64::INFINITY });
            }
            let moved = frame
                .iter()
                .zip(&next)
                .map(|((c0, s0), (c1, s1))| ((c1 - c0).abs() / s1).max((s1 / s0 - 1.0).abs()))
                .fold(0.0, f64::max);
            frame = next;
            if moved < 1e-6 {
                settled = true;
                break;
            }
        }
        if !settled {
            return Err(Error::OracleUnreliable { change: f64::INFINITY });
        }
    }
    let coarse = tensor_moments(post, k, nodes, &frame)?;
    let fine = tensor_moments(post, k, 2 * nodes, &frame)?;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    let mut change = rel(coarse.z, fine.z);
    for (a, b) in coarse.mean.iter().zip(&fine.mean) {
        change = change.max(rel(*a, *b));
    }
    for (a, b) in coarse.cov.iter().zip(fine.cov.iter()) {
        change = change.max(rel(*a, *b));
    }
    if !(change <= oracle.tolerance) {
        return Err(Error::OracleUnreliable { change });
    }
    Ok(QuadratureMoments {
        refinement_change: change,
        ..fine
    })
}

const MAX_RECENTRING: usize = 12;

/// Tensor rule with mode `i` laid out as `x = c_i + s_i·node`. For Gaussian
/// priors the weights carry the density ratio `N(x; 0, γ²) / N(x; c, s²)`.
fn tensor_moments(post: &PosteriorSpec, k: usize, nodes: usize, frame: &[(f64, f64)]) -> Result<QuadratureMoments> {
    let (rule, gammas, gaussian): (Rule, Vec<f64>, bool) = match &post.prior {
        Prior::Gaussian(g) => (gauss_hermite(nodes), (1..=k).map(|j| g.gamma(j)).collect(), true),
        Prior::Uniform(u) => (gauss_legendre(nodes), (1..=k).map(|j| u.gamma(j)).collect(), false),
        Prior::Besov(_) => return Err(Error::config("no quadrature oracle for Besov priors")),
    };
    let total = nodes.pow(k as u32);
    let base = post.prior.mean_field(post.n);
    let mut points = Vec::with_capacity(total);
    let mut log_w = Vec::with_capacity(total);
    let mut u: SpectralField = base.clone();
    for idx in 0..total {
        let mut rest = idx;
        let mut lw = 0.0;
        let mut x = vec![0.0; k];
        for (i, xi) in x.iter_mut().enumerate() {
            let r = rest % nodes;
            rest /= nodes;
            let z = rule.nodes[r];
            let (c, s) = frame[i];
            *xi = c + s * z;
            u.coeffs[i] = *xi;
            lw += rule.weights[r].ln();
            if gaussian {
                lw += (s / gammas[i]).ln() - 0.5 * (*xi / gammas[i]).powi(2) + 0.5 * z * z;
            }
        }
        let phi = post.potential_at(&u)?;
        log_w.push(lw - phi);
        points.push(x);
    }
    let lmax = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - lmax).exp()).collect();
    let s: f64 = w.iter().sum();
    let log_z = lmax + s.ln();
    let z = log_z.exp();
    if !log_z.is_finite() {
        return Err(Error::DegenerateWeights { max_log_weight: lmax });
    }
    // moments about the frame centre, then shifted back
    let mut mean = vec![0.0; k];
    for (p, wi) in points.iter().zip(&w) {
        for i in 0..k {
            mean[i] += wi * (p[i] - frame[i].0);
        }
    }
    for (i, m) in mean.iter_mut().enumerate() {
        *m = *m / s + frame[i].0;
    }
    let mut cov = DMatrix::zeros(k, k);
    for (p, wi) in points.iter().zip(&w) {
        for a in 0..k {
            for b in 0..k {
                cov[(a, b)] += wi * (p[a] - mean[a]) * (p[b] - mean[b]);
            }
        }
    }
    cov /= s;
    Ok(QuadratureMoments {
        mean,
        cov,
        z,
        log_z,
        refinement_change: 0.0,
    })
}

/// A Hellinger distance with its logarithm; the log stays informative when
/// the distance itself underflows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HellingerValue {
    pub value: f64,
    pub log_value: f64,
}

/// Per-mode law of a conjugate heat posterior, kept in log form.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ModeLaw {
    gamma2: f64,
    /// log of the data precision `α^β e^{−2α}`; `−∞` outside the truncation
    log_a: f64,
    /// log of `|α^β e^{−α} y_j|`; `−∞` when the mode carries no data
    log_b: f64,
    sign: f64,
}

impl ModeLaw {
    fn c(&self) -> f64 {
        self.gamma2 * self.log_a.exp()
    }

    fn log_var(&self) -> f64 {
        self.gamma2.ln() - self.c().ln_1p()
    }

    fn log_abs_mean(&self) -> f64 {
        self.log_var() + self.log_b
    }
}

/// Closed form of the Gaussian-prior heat posterior: independent modes with
/// precision `γ_j^{−2} + α_j^β e^{−2α_j}` and mean `σ_j² α_j^β e^{−α_j} y_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatConjugate {
    modes: Vec<ModeLaw>,
}

impl HeatConjugate {
    /// Posterior on `n` modes for `Φ ∘ P^{truncation}` (no truncation when `None`).
    pub fn new(prior: &GaussianPrior, pot: &HeatPotential, n: usize, truncation: Option<usize>) -> Self {
        let cut = truncation.unwrap_or(n);
        let modes = (1..=n)
            .map(|j| {
                let gamma2 = prior.gamma(j).powi(2);
                if j > cut {
                    return ModeLaw {
                        gamma2,
                        log_a: f64::NEG_INFINITY,
                        log_b: f64::NEG_INFINITY,
                        sign: 1.0,
                    };
                }
                let (log_a, log_lin) = pot.log_weights(j);
                let y = pot.data().get(j - 1).copied().unwrap_or(0.0);
                ModeLaw {
                    gamma2,
                    log_a,
                    log_b: log_lin + y.abs().ln(),
                    sign: y.signum(),
                }
            })
            .collect();
        Self { modes }
    }

    /// From a posterior whose prior is Gaussian and whose potential is a
    /// (possibly shifted or truncated) heat potential.
    pub fn from_posterior(post: &PosteriorSpec) -> Option<Self> {
        let prior = post.prior.as_gaussian()?;
        let heat = post.potential.as_heat()?;
        Some(Self::new(prior, heat, post.n, post.potential.truncation()))
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn mean(&self, j: usize) -> f64 {
        let m = &self.modes[j - 1];
        m.sign * m.log_abs_mean().exp()
    }

    pub fn variance(&self, j: usize) -> f64 {
        self.modes[j - 1].log_var().exp()
    }

    /// Exact Hellinger distance to another posterior over the same prior.
    pub fn hellinger(&self, other: &HeatConjugate) -> HellingerValue {
        // −log BC = Σ_j [ (m1−m2)²/(4(v1+v2)) + ½ log cosh(½ log(v1/v2)) ]
        let mut terms = Vec::new();
        for (a, b) in self.modes.iter().zip(&other.modes) {
            if a == b {
                continue;
            }
            let (lv1, lv2) = (a.log_var(), b.log_var());
            let log_vsum = log_add(lv1, lv2);
            if let Some(ldm) = log_abs_diff(a.sign, a.log_abs_mean(), b.sign, b.log_abs_mean()) {
                terms.push(2.0 * ldm - (4f64.ln() + log_vsum));
            }
            if a.log_a != b.log_a {
                let log_delta = log_half_log_ratio(a, b);
                if log_delta > f64::NEG_INFINITY {
                    let t = if log_delta > 1e-4f64.ln() {
                        (0.5 * log_delta.exp().cosh().ln()).ln()
                    } else {
                        // ½ log cosh δ ≈ δ²/4
                        2.0 * log_delta - 4f64.ln()
                    };
                    terms.push(t);
                }
            }
        }
        let l = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if l == f64::NEG_INFINITY {
            return HellingerValue {
                value: 0.0,
                log_value: f64::NEG_INFINITY,
            };
        }
        let log_neg_log_bc = l + terms.iter().map(|t| (t - l).exp()).sum::<f64>().ln();
        let neg_log_bc = log_neg_log_bc.exp();
        let d2 = -(-neg_log_bc).exp_m1();
        let log_value = if d2 > 1e-290 { 0.5 * d2.ln() } else { 0.5 * log_neg_log_bc };
        HellingerValue {
            value: d2.sqrt(),
            log_value,
        }
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// `log|s1 e^{l1} − s2 e^{l2}|`, `None` when the difference is zero.
fn log_abs_diff(s1: f64, l1: f64, s2: f64, l2: f64) -> Option<f64> {
    let (l1, l2) = (
        if s1 == 0.0 { f64::NEG_INFINITY } else { l1 },
        if s2 == 0.0 { f64::NEG_INFINITY } else { l2 },
    );
    if l1 == f64::NEG_INFINITY && l2 == f64::NEG_INFINITY {
        return None;
    }
    if s1 != s2 || l1 == f64::NEG_INFINITY || l2 == f64::NEG_INFINITY {
        return Some(log_add(l1, l2));
    }
    if l1 == l2 {
        return None;
    }
    let (hi, lo) = if l1 > l2 { (l1, l2) } else { (l2, l1) };
    Some(hi + (-(lo - hi).exp_m1()).ln())
}

/// `log|½ log(v1/v2)|`, accurate when both data precisions are tiny.
fn log_half_log_ratio(a: &ModeLaw, b: &ModeLaw) -> f64 {
    let (c1, c2) = (a.c(), b.c());
    if c1.max(c2) > 1e-8 {
        return (0.5 * (c1.ln_1p() - c2.ln_1p()).abs()).ln();
    }
    // log(1+c) ≈ c here; work with the logs of c
    let (l1, l2) = (a.gamma2.ln() + a.log_a, b.gamma2.ln() + b.log_a);
    match log_abs_diff(1.0, l1, 1.0, l2) {
        Some(l) => 0.5f64.ln() + l,
        None => f64::NEG_INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::ObservationSet;
    use crate::posterior::{ForwardMap, GaussianMisfit, Potential};
    use crate::sequence_space::BasisSpec;
    use approx::assert_relative_eq;

    fn prior(scale: f64) -> GaussianPrior {
        GaussianPrior::new(BasisSpec::dirichlet_1d(), 2.0, scale).unwrap()
    }

    #[test]
    fn flat_potential_returns_prior_moments() {
        let p = prior(1.0);
        let post = PosteriorSpec::new(Prior::Gaussian(p), Potential::zero(), 3).unwrap();
        let q = quadrature_moments(&post, &QuadratureOracle::new(2)).unwrap();
        assert!(q.mean.iter().all(|m| m.abs() < 1e-14));
        assert_relative_eq!(q.cov[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(q.cov[(1, 1)], p.gamma(2).powi(2), epsilon = 1e-12);
        assert!(q.cov[(0, 1)].abs() < 1e-14);
        assert_relative_eq!(q.z, 1.0, epsilon = 1e-12);
    }

    fn conjugate(y: f64) -> PosteriorSpec {
        let pot = Potential::Misfit(GaussianMisfit {
            forward: ForwardMap::Diagonal(vec![1.5]),
            obs: ObservationSet::isotropic(vec![y], 0.3).unwrap(),
        });
        PosteriorSpec::new(Prior::Gaussian(prior(0.8)), pot, 1).unwrap()
    }

    #[test]
    fn conjugate_mean() {
        let (g, s2, gam2, y) = (1.5, 0.3, 0.64, 0.9);
        let q = quadrature_moments(&conjugate(y), &QuadratureOracle::new(1)).unwrap();
        assert_relative_eq!(q.mean[0], g * gam2 * y / (s2 + g * g * gam2), max_relative = 1e-10);
        assert_relative_eq!(q.cov[(0, 0)], gam2 * s2 / (s2 + g * g * gam2), max_relative = 1e-10);
        let flipped = quadrature_moments(&conjugate(-y), &QuadratureOracle::new(1)).unwrap();
        assert_relative_eq!(flipped.mean[0], -q.mean[0], max_relative = 1e-12);
    }

    #[test]
    fn shift_only_rescales_z() {
        let post = conjugate(0.4);
        let shifted = post.with_potential(post.potential.clone().shifted(3.0));
        let a = quadrature_moments(&post, &QuadratureOracle::new(1)).unwrap();
        let b = quadrature_moments(&shifted, &QuadratureOracle::new(1)).unwrap();
        assert_relative_eq!(a.mean[0], b.mean[0], max_relative = 1e-12);
        assert_relative_eq!(a.cov[(0, 0)], b.cov[(0, 0)], max_relative = 1e-12);
        assert_relative_eq!(b.z, a.z * (-3.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn sharp_likelihood_is_flagged() {
        let pot = Potential::Misfit(GaussianMisfit {
            forward: ForwardMap::Diagonal(vec![1.0]),
            obs: ObservationSet::isotropic(vec![0.3], 1e-8).unwrap(),
        });
        let post = PosteriorSpec::new(Prior::Gaussian(prior(1.0)), pot, 1).unwrap();
        assert!(matches!(
            quadrature_moments(&post, &QuadratureOracle::new(1)),
            Err(Error::OracleUnreliable { .. })
        ));
    }

    #[test]
    fn heat_conjugate_matches_quadrature() {
        let b = BasisSpec::dirichlet_1d();
        let heat = HeatPotential::new(b, 0.0, vec![3e4, -2.0]).unwrap();
        let p = prior(1.0);
        let post = PosteriorSpec::new(Prior::Gaussian(p), Potential::Heat(heat.clone()), 2).unwrap();
        let exact = HeatConjugate::from_posterior(&post).unwrap();
        let q = quadrature_moments(&post, &QuadratureOracle::new(2)).unwrap();
        for j in 1..=2 {
            assert_relative_eq!(q.mean[j - 1], exact.mean(j), max_relative = 1e-9, epsilon = 1e-14);
            assert_relative_eq!(q.cov[(j - 1, j - 1)], exact.variance(j), max_relative = 1e-9);
        }
    }

    #[test]
    fn closed_form_hellinger_against_plain_formula() {
        let b = BasisSpec::dirichlet_1d();
        let p = prior(1.0);
        let h1 = HeatPotential::new(b, 0.0, vec![1e4]).unwrap();
        let h2 = HeatPotential::new(b, 0.0, vec![1e4 + 500.0]).unwrap();
        let a = HeatConjugate::new(&p, &h1, 1, None);
        let c = HeatConjugate::new(&p, &h2, 1, None);
        let s2 = a.variance(1);
        let dm = a.mean(1) - c.mean(1);
        let plain = (-(-(dm * dm) / (8.0 * s2)).exp_m1()).sqrt();
        let v = a.hellinger(&c);
        assert_relative_eq!(v.value, plain, max_relative = 1e-10);
        assert_eq!(a.hellinger(&a).value, 0.0);
    }

    #[test]
    fn truncation_distance_decays_super_fast() {
        let b = BasisSpec::dirichlet_1d();
        let p = prior(1.0);
        let y: Vec<f64> = (1..=64).map(|j| (j as f64).cos()).collect();
        let h = HeatPotential::new(b, 0.0, y).unwrap();
        let full = HeatConjugate::new(&p, &h, 64, None);
        let logs: Vec<f64> = [2, 4, 8, 16]
            .iter()
            .map(|&n| full.hellinger(&HeatConjugate::new(&p, &h, 64, Some(n))).log_value)
            .collect();
        for w in logs.windows(2) {
            assert!(w[1] < w[0], "{logs:?}");
        }
        // leading behaviour: log d ≈ −(N+1)²π² + O(1)
        assert!((logs[3] + 17.0f64.powi(2) * std::f64::consts::PI.powi(2)).abs() < 10.0, "{logs:?}");
    }
}
