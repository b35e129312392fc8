//! Posteriors `dμ^y/dμ_0 ∝ exp(−Φ(u; y))`: potentials, normalization
//! constants, Hellinger distances and brute-force oracles.
//!
//! All Monte-Carlo estimators draw from the prior. Work is split into fixed
//! chunks with one forked [`SeedStream`] each, so results do not depend on
//! the number of threads.

mod experiments;
mod oracle;
mod potential;

pub use experiments::{
    approximation_experiment, expectation_transfer_check, wellposedness_experiment, ApproximationRow, ApproximationTable, Functional,
    TransferRow, WellposednessRow, WellposednessTable,
};
pub use oracle::{quadrature_moments, HeatConjugate, HellingerValue, QuadratureMoments, QuadratureOracle};
pub use potential::{ForwardMap, GaussianMisfit, HeatPotential, LinearPotential, Potential, QuadraticPotential};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::random_fields::Prior;
use crate::rng::SeedStream;
use crate::sequence_space::SpectralField;
use crate::stats::Estimate;

const CHUNK: usize = 4096;

/// Smallest weight that still counts as a measurement.
const WEIGHT_FLOOR: f64 = 1e-300;

/// Prior, potential and the truncation `N` at which fields are sampled.
#[derive(Debug, Clone)]
pub struct PosteriorSpec {
    pub prior: Prior,
    pub potential: Potential,
    pub n: usize,
}

impl PosteriorSpec {
    pub fn new(prior: Prior, potential: Potential, n: usize) -> Result<Self> {
        if let Some(h) = potential.as_heat() {
            prior.basis().check_compatible(&h.basis())?;
        }
        Ok(Self { prior, potential, n })
    }

    pub fn potential_at(&self, u: &SpectralField) -> Result<f64> {
        self.potential.value(u)
    }

    /// Same prior, different potential.
    pub fn with_potential(&self, potential: Potential) -> Self {
        Self {
            prior: self.prior.clone(),
            potential,
            n: self.n,
        }
    }

    fn same_reference(&self, other: &PosteriorSpec) -> Result<()> {
        if self.prior != other.prior || self.n != other.n {
            return Err(Error::config("posteriors must share the prior and the truncation"));
        }
        Ok(())
    }
}

/// Evaluate `f` on `m` prior draws, in draw order, in parallel.
pub fn map_prior_samples<T, F>(prior: &Prior, n: usize, m: usize, seed: SeedStream, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&SpectralField) -> Result<T> + Sync,
{
    let chunks = m.div_ceil(CHUNK);
    let parts: Vec<Result<Vec<T>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed.fork(c as u64).rng();
            let len = CHUNK.min(m - c * CHUNK);
            (0..len).map(|_| f(&prior.sample(n, &mut rng))).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(m);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Synthetic heat data `y_j = e^{−α_j} u†_j + α_j^{−β/2} z_j` on `n` modes,
/// with the truth `u†` drawn from `prior` first and the noise after it.
pub fn synthetic_heat_data(prior: &Prior, noise_beta: f64, n: usize, seed: SeedStream) -> Result<(SpectralField, Vec<f64>)> {
    use rand::Rng;
    let basis = prior.basis();
    let mut rng = seed.rng();
    let truth = prior.sample(n, &mut rng);
    let y = (1..=n)
        .map(|j| {
            let a = basis.eigenvalue(j)?;
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            Ok((-a).exp() * truth.coeff(j) + a.powf(-noise_beta / 2.0) * z)
        })
        .collect::<Result<_>>()?;
    Ok((truth, y))
}

/// `Z = E_{μ_0} exp(−Φ)` with its standard error.
pub fn estimate_z(post: &PosteriorSpec, m: usize, seed: SeedStream) -> Result<Estimate> {
    if m < 2 {
        return Err(Error::domain("estimate_z needs at least two samples"));
    }
    let phis = map_prior_samples(&post.prior, post.n, m, seed, |u| post.potential_at(u))?;
    z_from_potentials(&phis)
}

/// Running (Welford) mean and standard error of `exp(−Φ_i)`; a constant
/// potential gives its weight back exactly.
pub fn z_from_potentials(phis: &[f64]) -> Result<Estimate> {
    let max_log_weight = phis.iter().map(|p| -p).fold(f64::NEG_INFINITY, f64::max);
    if !(max_log_weight.exp() >= WEIGHT_FLOOR) {
        return Err(Error::DegenerateWeights { max_log_weight });
    }
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, p) in phis.iter().enumerate() {
        let w = (-p).exp();
        let delta = w - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (w - mean);
    }
    let n = phis.len() as f64;
    Ok(Estimate::new(mean, (m2 / (n - 1.0) / n).sqrt()))
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Hellinger distance between the two self-normalized weightings
/// `exp(−Φ_1)`, `exp(−Φ_2)` of one prior sample.
///
/// Written as `½Σ(√p_i − √q_i)²` in terms of the symmetric part
/// `−(Φ_1+Φ_2)/2` and the antisymmetric part `(Φ_1−Φ_2)/2`, which avoids
/// the cancellation in `1 − Σ√(p_i q_i)` and makes the estimate exactly
/// symmetric under swapping the two potentials.
pub fn hellinger_from_potentials(phi1: &[f64], phi2: &[f64]) -> Result<f64> {
    if phi1.len() != phi2.len() || phi1.is_empty() {
        return Err(Error::domain("need two equally long, nonempty potential samples"));
    }
    if phi1.iter().chain(phi2).any(|p| !p.is_finite()) {
        return Err(Error::DegenerateWeights { max_log_weight: f64::NAN });
    }
    let sym: Vec<f64> = phi1.iter().zip(phi2).map(|(a, b)| -(a + b) / 2.0).collect();
    let anti: Vec<f64> = phi1.iter().zip(phi2).map(|(a, b)| (a - b) / 2.0).collect();
    let k = (0..sym.len()).max_by(|&i, &j| sym[i].total_cmp(&sym[j])).unwrap();
    let h: Vec<f64> = anti.iter().map(|a| a - anti[k]).collect();
    let l1 = log_sum_exp(sym.iter().zip(&h).map(|(m, h)| m - h));
    let l2 = log_sum_exp(sym.iter().zip(&h).map(|(m, h)| m + h));
    let centre = (l1 + l2) / 2.0;
    let d = (l1 - l2) / 2.0;
    let d2: f64 = sym
        .iter()
        .zip(&h)
        .map(|(m, hi)| {
            // √p − √q = −2 e^{(m − centre)/2} sinh((h + D)/2)
            let s = ((hi + d) / 2.0).sinh();
            2.0 * (m - centre).exp() * s * s
        })
        .sum();
    Ok(d2.clamp(0.0, 1.0).sqrt())
}

const BATCHES: usize = 20;

/// Hellinger distance between two posteriors on a shared prior sample, with a
/// batch-means standard error.
pub fn hellinger(post1: &PosteriorSpec, post2: &PosteriorSpec, m: usize, seed: SeedStream) -> Result<Estimate> {
    post1.same_reference(post2)?;
    if m < 2 * BATCHES {
        return Err(Error::domain(format!("hellinger needs at least {} samples", 2 * BATCHES)));
    }
    let pairs = map_prior_samples(&post1.prior, post1.n, m, seed, |u| {
        Ok((post1.potential_at(u)?, post2.potential_at(u)?))
    })?;
    let (p1, p2): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    hellinger_estimate(&p1, &p2)
}

pub(crate) fn hellinger_estimate(p1: &[f64], p2: &[f64]) -> Result<Estimate> {
    let value = hellinger_from_potentials(p1, p2)?;
    let b = p1.len() / BATCHES;
    let batch: Vec<f64> = (0..BATCHES)
        .map(|i| hellinger_from_potentials(&p1[i * b..(i + 1) * b], &p2[i * b..(i + 1) * b]))
        .collect::<Result<_>>()?;
    let sd = crate::stats::variance(&batch).sqrt();
    Ok(Estimate::new(value, sd / (BATCHES as f64).sqrt()))
}

/// Self-normalized importance estimate of `E^{μ^y} f` from log-weights
/// `−Φ_i` and values `f_i` (delta-method standard error).
pub fn snis(phis: &[f64], values: &[f64]) -> Estimate {
    let lmax = phis.iter().map(|p| -p).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = phis.iter().map(|p| (-p - lmax).exp()).collect();
    let sw: f64 = w.iter().sum();
    let mean = w.iter().zip(values).map(|(w, f)| w * f).sum::<f64>() / sw;
    let var = w.iter().zip(values).map(|(w, f)| (w * (f - mean)).powi(2)).sum::<f64>() / (sw * sw);
    Estimate::new(mean, var.sqrt())
}

/// Posterior means and variances of the first `k` coefficients by
/// self-normalized importance sampling from the prior.
pub fn importance_moments(post: &PosteriorSpec, k: usize, m: usize, seed: SeedStream) -> Result<(Vec<Estimate>, Vec<Estimate>)> {
    let rows = map_prior_samples(&post.prior, post.n, m, seed, |u| {
        Ok((post.potential_at(u)?, (1..=k).map(|j| u.coeff(j)).collect::<Vec<f64>>()))
    })?;
    let phis: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mut means = Vec::new();
    let mut vars = Vec::new();
    for j in 0..k {
        let x: Vec<f64> = rows.iter().map(|r| r.1[j]).collect();
        let mean = snis(&phis, &x);
        let sq: Vec<f64> = x.iter().map(|v| (v - mean.value).powi(2)).collect();
        means.push(mean);
        vars.push(snis(&phis, &sq));
    }
    Ok((means, vars))
}

/// Upper bound `M(y)` on the misfit for the uniform-prior elliptic posterior:
/// every prior draw satisfies `Φ ≤ M(y)`, so every weight is `≥ e^{−M(y)}`.
///
/// Uses `|p(x)| ≤ √(x(1−x)) ‖p‖_V` on `H¹₀` and `‖p‖_V ≤ (1+δ)‖f‖_{V*}/φ_min`.
pub fn uniform_elliptic_misfit_bound(
    prior: &crate::random_fields::UniformPrior,
    forward: &crate::forward::EllipticForward1D,
    obs: &crate::forward::ObservationSet,
) -> f64 {
    let pv = (1.0 + prior.delta()) * forward.source_dual_norm() / prior.phi_min();
    let g: f64 = forward.obs_points().iter().map(|x| x * (1.0 - x) * pv * pv).sum::<f64>().sqrt();
    let eig = nalgebra::SymmetricEigen::new(obs.covariance().clone());
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_scaled = 2.0 * obs.misfit(&vec![0.0; obs.len()]).unwrap_or(f64::INFINITY);
    0.5 * (y_scaled.sqrt() + g / lmin.sqrt()).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{EllipticForward1D, KappaTransform, ObservationSet, Source};
    use crate::random_fields::{GammaLaw, GaussianPrior, UniformPrior};
    use crate::sequence_space::{BasisFamily, BasisSpec, Offset};
    use approx::assert_relative_eq;

    fn gauss1() -> Prior {
        Prior::Gaussian(GaussianPrior::new(BasisSpec::dirichlet_1d(), 1.0, 1.0).unwrap())
    }

    fn seed() -> SeedStream {
        SeedStream::new(99, 0)
    }

    #[test]
    fn z_examples() {
        let post = PosteriorSpec::new(gauss1(), Potential::zero(), 1).unwrap();
        assert_eq!(estimate_z(&post, 100, seed()).unwrap().value, 1.0);
        let c = post.with_potential(Potential::Constant(1.7));
        assert_eq!(estimate_z(&c, 100, seed()).unwrap().value, (-1.7f64).exp());

        let q = post.with_potential(Potential::Quadratic(QuadraticPotential::new(1.0, 0.0, vec![]).unwrap()));
        let z = estimate_z(&q, 200_000, seed()).unwrap();
        assert!(z.agrees_with(std::f64::consts::FRAC_1_SQRT_2, 3.0, 0.0), "{z:?}");

        let far = post.with_potential(Potential::Constant(1000.0));
        assert!(matches!(estimate_z(&far, 100, seed()), Err(Error::DegenerateWeights { .. })));
    }

    #[test]
    fn hellinger_trivial_cases() {
        let post = PosteriorSpec::new(gauss1(), Potential::zero(), 1).unwrap();
        let d = hellinger(&post, &post, 1000, seed()).unwrap();
        assert_eq!(d.value, 0.0);
        let c = post.with_potential(Potential::Constant(3.0));
        assert_eq!(hellinger(&post, &c, 1000, seed()).unwrap().value, 0.0);
    }

    #[test]
    fn hellinger_against_gaussian_oracle() {
        // prior N(0,1); Φ_i = ½(u − y_i)²/σ² gives posteriors N(m_i, s²)
        let sigma2: f64 = 0.5;
        let mk = |y: f64| {
            Potential::Misfit(GaussianMisfit {
                forward: ForwardMap::Diagonal(vec![1.0]),
                obs: ObservationSet::isotropic(vec![y], sigma2).unwrap(),
            })
        };
        let p1 = PosteriorSpec::new(gauss1(), mk(0.3), 1).unwrap();
        let p2 = p1.with_potential(mk(0.8));
        let s2 = 1.0 / (1.0 + 1.0 / sigma2);
        let (m1, m2) = (s2 * 0.3 / sigma2, s2 * 0.8 / sigma2);
        let oracle = (1.0 - (-(m1 - m2).powi(2) / (8.0 * s2)).exp()).sqrt();
        let d = hellinger(&p1, &p2, 200_000, seed()).unwrap();
        assert!(d.agrees_with(oracle, 3.0, 0.0), "{d:?} vs {oracle}");
    }

    #[test]
    fn hellinger_is_symmetric_and_bounded() {
        let h = |y: Vec<f64>| Potential::Heat(HeatPotential::new(BasisSpec::dirichlet_1d(), 0.0, y).unwrap());
        let p1 = PosteriorSpec::new(gauss1(), h(vec![1.0, 2.0]), 2).unwrap();
        let p2 = p1.with_potential(h(vec![1.5, -2.0]));
        let a = hellinger(&p1, &p2, 4000, seed()).unwrap();
        let b = hellinger(&p2, &p1, 4000, seed()).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert!((0.0..=1.0).contains(&a.value));
    }

    #[test]
    fn importance_agrees_with_conjugate_formula() {
        let (g, y, s2) = (2.0, 0.7, 0.25);
        let pot = Potential::Misfit(GaussianMisfit {
            forward: ForwardMap::Diagonal(vec![g]),
            obs: ObservationSet::isotropic(vec![y], s2).unwrap(),
        });
        let post = PosteriorSpec::new(gauss1(), pot, 1).unwrap();
        let (m, v) = importance_moments(&post, 1, 400_000, seed()).unwrap();
        let mean = g * y / (s2 + g * g);
        let var = s2 / (s2 + g * g);
        assert!(m[0].agrees_with(mean, 3.0, 0.0), "{:?} vs {mean}", m[0]);
        assert!(v[0].agrees_with(var, 3.0, 0.0), "{:?} vs {var}", v[0]);
    }

    #[test]
    fn uniform_elliptic_weights_are_bounded_below() {
        let prior = UniformPrior::new(
            BasisFamily::DirichletSine,
            Offset::Constant(1.0),
            0.5,
            GammaLaw::PSeries { exponent: 2.0 },
        )
        .unwrap();
        let fwd = EllipticForward1D::new(
            63,
            &Source::Constant { value: 1.0 },
            vec![0.25, 0.5, 0.75],
            KappaTransform::Identity,
        )
        .unwrap();
        let obs = ObservationSet::isotropic(vec![0.1, 0.12, 0.09], 1e-4).unwrap();
        let bound = uniform_elliptic_misfit_bound(&prior, &fwd, &obs);
        let pot = Potential::Misfit(GaussianMisfit {
            forward: ForwardMap::Elliptic(fwd),
            obs,
        });
        let post = PosteriorSpec::new(Prior::Uniform(prior), pot, 16).unwrap();
        let phis = map_prior_samples(&post.prior, 16, 2000, seed(), |u| post.potential_at(u)).unwrap();
        assert!(phis.iter().all(|p| *p >= 0.0 && *p <= bound));
        assert!(z_from_potentials(&phis).unwrap().value > 0.0);
    }

    #[test]
    fn snis_with_flat_weights_is_the_sample_mean() {
        let e = snis(&[0.0; 4], &[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(e.value, 2.5);
    }
}
