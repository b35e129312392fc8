//! Series priors: `u = φ_0 + Σ γ_j ξ_j φ_j` with uniform, generalized-Gaussian
//! (Besov) or Gaussian `ξ_j`, and `C`-Wiener paths built from the same decay
//! law.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence_space::{BasisFamily, BasisSpec, Normalization, Offset, SpectralField};
use crate::stats::{power_tail, Estimate};

/// Decay law of the uniform prior's `γ_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GammaLaw {
    /// `γ_j = c·j^{-exponent}`, `c` fixed by the ℓ¹ normalization.
    PSeries { exponent: f64 },
    /// No randomization: the prior is the point mass at `φ_0`.
    Zero,
}

/// Uniform prior in `L^∞`: `ξ_j ~ U[-1,1]`, `‖γ‖_{ℓ¹} = δφ_min/(1+δ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformPrior {
    basis: BasisSpec,
    offset: Offset,
    phi_min: f64,
    phi_max: f64,
    delta: f64,
    law: GammaLaw,
    scale: f64,
}

impl UniformPrior {
    /// Basis functions are rescaled to unit sup-norm.
    pub fn new(family: BasisFamily, offset: Offset, delta: f64, law: GammaLaw) -> Result<Self> {
        let basis = BasisSpec {
            family,
            dim: 1,
            grid_points: 128,
            normalization: Normalization::Sup,
        };
        let (phi_min, phi_max) = offset.bounds();
        if !(phi_min > 0.0) {
            return Err(Error::config(format!("uniform prior needs φ_min > 0, got {phi_min}")));
        }
        let scale = match law {
            GammaLaw::PSeries { exponent } => {
                if !(exponent > 1.0) {
                    return Err(Error::config("γ_j = c·j^-p is summable only for p > 1"));
                }
                if !(delta > 0.0) {
                    return Err(Error::config("uniform prior needs δ > 0"));
                }
                let zeta = power_tail(exponent, 0);
                delta * phi_min / (1.0 + delta) / zeta
            }
            GammaLaw::Zero => {
                if delta != 0.0 {
                    return Err(Error::config("an all-zero γ satisfies ‖γ‖₁ = δφ_min/(1+δ) only with δ = 0"));
                }
                0.0
            }
        };
        Ok(Self {
            basis,
            offset,
            phi_min,
            phi_max,
            delta,
            law,
            scale,
        })
    }

    pub fn basis(&self) -> BasisSpec {
        self.basis
    }

    pub fn offset(&self) -> Offset {
        self.offset
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn phi_min(&self) -> f64 {
        self.phi_min
    }

    pub fn phi_max(&self) -> f64 {
        self.phi_max
    }

    pub fn gamma(&self, j: usize) -> f64 {
        match self.law {
            GammaLaw::PSeries { exponent } => self.scale * (j as f64).powf(-exponent),
            GammaLaw::Zero => 0.0,
        }
    }

    /// `‖γ‖_{ℓ¹}`, truncated sum plus analytic tail.
    pub fn gamma_l1(&self) -> f64 {
        match self.law {
            GammaLaw::PSeries { exponent } => self.scale * power_tail(exponent, 0),
            GammaLaw::Zero => 0.0,
        }
    }

    /// `ε_tail = Σ_{j>N} γ_j`.
    pub fn tail(&self, n: usize) -> f64 {
        match self.law {
            GammaLaw::PSeries { exponent } => self.scale * power_tail(exponent, n),
            GammaLaw::Zero => 0.0,
        }
    }

    /// Almost-sure range `[φ_min/(1+δ), φ_max + δφ_min/(1+δ)]` of the full series.
    pub fn bounds(&self) -> (f64, f64) {
        let shift = self.delta * self.phi_min / (1.0 + self.delta);
        (self.phi_min / (1.0 + self.delta), self.phi_max + shift)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> SpectralField {
        let coeffs = (1..=n)
            .map(|j| {
                let xi: f64 = rng.random_range(-1.0..=1.0);
                self.gamma(j) * xi
            })
            .collect();
        SpectralField::new(self.basis, coeffs).with_offset(self.offset)
    }
}

/// Law with density `∝ exp(−|x|^q / 2)`, sampled as `S·(2Y)^{1/q}`,
/// `Y ~ Gamma(1/q, 1)`.
#[derive(Debug, Clone, Copy)]
pub struct GeneralizedGaussian {
    q: f64,
    gamma: Gamma<f64>,
}

impl GeneralizedGaussian {
    pub fn new(q: f64) -> Result<Self> {
        if !(q >= 1.0) || !q.is_finite() {
            return Err(Error::domain(format!("generalized Gaussian needs q ≥ 1, got {q}")));
        }
        let gamma = Gamma::new(1.0 / q, 1.0).map_err(|e| Error::domain(e.to_string()))?;
        Ok(Self { q, gamma })
    }
}

impl Distribution<f64> for GeneralizedGaussian {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let y = self.gamma.sample(rng);
        let mag = (2.0 * y).powf(1.0 / self.q);
        if rng.random::<bool>() {
            mag
        } else {
            -mag
        }
    }
}

pub fn sample_generalized_gaussian<R: Rng + ?Sized>(q: f64, rng: &mut R) -> Result<f64> {
    Ok(GeneralizedGaussian::new(q)?.sample(rng))
}

/// Monte-Carlo estimate of `E exp(α|ξ|^q)`; the exact value is `(1−2α)^{−1/q}`.
pub fn fernique_moment<R: Rng + ?Sized>(q: f64, alpha: f64, m: usize, rng: &mut R) -> Result<Estimate> {
    if alpha >= 0.5 {
        return Err(Error::Divergence(format!("E exp(α|ξ|^q) is infinite for α = {alpha} ≥ 1/2")));
    }
    if alpha < 0.0 {
        return Err(Error::domain("fernique_moment needs α ≥ 0"));
    }
    if m < 2 {
        return Err(Error::domain("need at least two draws"));
    }
    let law = GeneralizedGaussian::new(q)?;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..m {
        let x: f64 = law.sample(rng);
        let v = (alpha * x.abs().powf(q)).exp();
        s += v;
        s2 += v * v;
    }
    let mf = m as f64;
    let mean = s / mf;
    let var = ((s2 - mf * mean * mean) / (mf - 1.0)).max(0.0);
    Ok(Estimate::new(mean, (var / mf).sqrt()))
}

/// Besov prior: `γ_j = j^{−(s/d + 1/2 − 1/q)} δ^{−1/q}` with generalized-Gaussian `ξ_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesovPrior {
    basis: BasisSpec,
    s: f64,
    q: f64,
    delta: f64,
}

impl BesovPrior {
    pub fn new(basis: BasisSpec, s: f64, q: f64, delta: f64) -> Result<Self> {
        if !(s > 0.0) || !(delta > 0.0) {
            return Err(Error::config("Besov prior needs s > 0 and δ > 0"));
        }
        if !(q >= 1.0) {
            return Err(Error::config("Besov prior needs q ≥ 1"));
        }
        Ok(Self { basis, s, q, delta })
    }

    pub fn basis(&self) -> BasisSpec {
        self.basis
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn gamma(&self, j: usize) -> f64 {
        let d = self.basis.dim as f64;
        (j as f64).powf(-(self.s / d + 0.5 - 1.0 / self.q)) * self.delta.powf(-1.0 / self.q)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> SpectralField {
        let law = GeneralizedGaussian::new(self.q).expect("validated at construction");
        let coeffs = (1..=n).map(|j| self.gamma(j) * law.sample(rng)).collect();
        SpectralField::new(self.basis, coeffs)
    }
}

/// Gaussian prior `N(0, C)` with `C φ_j = γ_j² φ_j`, `γ_j = scale·j^{−s/d}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPrior {
    basis: BasisSpec,
    s: f64,
    scale: f64,
}

impl GaussianPrior {
    pub fn new(basis: BasisSpec, s: f64, scale: f64) -> Result<Self> {
        if !(s > basis.dim as f64 / 2.0) {
            return Err(Error::config(format!(
                "Gaussian prior needs s > d/2 for a trace-class covariance (s = {s})"
            )));
        }
        if !(scale > 0.0) {
            return Err(Error::config("Gaussian prior scale must be positive"));
        }
        Ok(Self { basis, s, scale })
    }

    pub fn basis(&self) -> BasisSpec {
        self.basis
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn gamma(&self, j: usize) -> f64 {
        self.scale * (j as f64).powf(-self.s / self.basis.dim as f64)
    }

    pub fn gammas(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|j| self.gamma(j)).collect()
    }

    /// Karhunen–Loève truncation `Σ_{j≤N} γ_j ξ_j φ_j`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> SpectralField {
        let coeffs = (1..=n)
            .map(|j| {
                let z: f64 = rng.sample(StandardNormal);
                self.gamma(j) * z
            })
            .collect();
        SpectralField::new(self.basis, coeffs)
    }

    /// Cameron–Martin norm `‖C^{−1/2} u‖²`.
    pub fn cameron_martin_sq(&self, u: &[f64]) -> f64 {
        u.iter().enumerate().map(|(i, c)| (c / self.gamma(i + 1)).powi(2)).sum()
    }
}

/// The three prior families behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    Uniform(UniformPrior),
    Besov(BesovPrior),
    Gaussian(GaussianPrior),
}

impl Prior {
    pub fn basis(&self) -> BasisSpec {
        match self {
            Prior::Uniform(p) => p.basis(),
            Prior::Besov(p) => p.basis(),
            Prior::Gaussian(p) => p.basis(),
        }
    }

    pub fn gamma(&self, j: usize) -> f64 {
        match self {
            Prior::Uniform(p) => p.gamma(j),
            Prior::Besov(p) => p.gamma(j),
            Prior::Gaussian(p) => p.gamma(j),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> SpectralField {
        match self {
            Prior::Uniform(p) => p.sample(n, rng),
            Prior::Besov(p) => p.sample(n, rng),
            Prior::Gaussian(p) => p.sample(n, rng),
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianPrior> {
        match self {
            Prior::Gaussian(p) => Some(p),
            _ => None,
        }
    }

    /// The field at the prior mean (coefficients zero, offset kept).
    pub fn mean_field(&self, n: usize) -> SpectralField {
        let u = SpectralField::zeros(self.basis(), n);
        match self {
            Prior::Uniform(p) => u.with_offset(p.offset()),
            _ => u,
        }
    }
}

/// Declarative prior description as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorSpec {
    Uniform {
        #[serde(default = "default_family")]
        family: BasisFamily,
        /// Offset id, e.g. `constant:1` or `linear:1:2`.
        offset: String,
        delta: f64,
        gamma: GammaLaw,
    },
    Besov {
        #[serde(default = "default_family")]
        family: BasisFamily,
        s: f64,
        q: f64,
        delta: f64,
    },
    Gaussian {
        #[serde(default = "default_family")]
        family: BasisFamily,
        s: f64,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn default_family() -> BasisFamily {
    BasisFamily::DirichletSine
}

fn one() -> f64 {
    1.0
}

impl PriorSpec {
    pub fn build(&self) -> Result<Prior> {
        Ok(match self {
            PriorSpec::Uniform {
                family,
                offset,
                delta,
                gamma,
            } => Prior::Uniform(UniformPrior::new(*family, offset.parse()?, *delta, *gamma)?),
            PriorSpec::Besov { family, s, q, delta } => {
                let basis = BasisSpec::new(*family, 1, 128)?;
                Prior::Besov(BesovPrior::new(basis, *s, *q, *delta)?)
            }
            PriorSpec::Gaussian { family, s, scale } => {
                let basis = BasisSpec::new(*family, 1, 128)?;
                Prior::Gaussian(GaussianPrior::new(basis, *s, *scale)?)
            }
        })
    }
}

/// `Σ_{j>N} j^{2(t−s)/d}`: expected squared `H^t` truncation error of the
/// Karhunen–Loève series, up to the `scale²` factor.
pub fn kl_tail(s: f64, t: f64, d: usize, n: usize) -> Result<f64> {
    let p = 2.0 * (s - t) / d as f64;
    if !(p > 1.0) {
        return Err(Error::Divergence(format!("Σ j^(2(t-s)/d) diverges for s = {s}, t = {t}, d = {d}")));
    }
    Ok(power_tail(p, n))
}

/// Increments of a truncated `C`-Wiener process `W = Σ γ_j β_j(t) φ_j` on a
/// uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CWienerPath {
    pub dt: f64,
    pub gammas: Vec<f64>,
    /// `increments[k][j-1] = W_j(t_{k+1}) − W_j(t_k)`
    pub increments: Vec<Vec<f64>>,
}

impl CWienerPath {
    pub fn sample<R: Rng + ?Sized>(gammas: &[f64], steps: usize, dt: f64, rng: &mut R) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::config("time step must be positive"));
        }
        let sd = dt.sqrt();
        let increments = (0..steps)
            .map(|_| {
                gammas
                    .iter()
                    .map(|g| {
                        let z: f64 = rng.sample(StandardNormal);
                        g * sd * z
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            dt,
            gammas: gammas.to_vec(),
            increments,
        })
    }

    /// A path with every increment zero.
    pub fn zero(modes: usize, steps: usize, dt: f64) -> Self {
        Self {
            dt,
            gammas: vec![0.0; modes],
            increments: vec![vec![0.0; modes]; steps],
        }
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    pub fn modes(&self) -> usize {
        self.gammas.len()
    }

    /// Path values `W(t_0 = 0), W(t_1), …`.
    pub fn values(&self, basis: BasisSpec) -> Vec<SpectralField> {
        let mut w = vec![0.0; self.modes()];
        let mut out = Vec::with_capacity(self.steps() + 1);
        out.push(SpectralField::new(basis, w.clone()));
        for inc in &self.increments {
            for (a, b) in w.iter_mut().zip(inc) {
                *a += b;
            }
            out.push(SpectralField::new(basis, w.clone()));
        }
        out
    }

    /// Same Brownian path observed on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::config(format!("cannot coarsen {} steps by a factor {factor}", self.steps())));
        }
        let increments = self
            .increments
            .chunks(factor)
            .map(|c| {
                let mut acc = vec![0.0; self.modes()];
                for inc in c {
                    for (a, b) in acc.iter_mut().zip(inc) {
                        *a += b;
                    }
                }
                acc
            })
            .collect();
        Ok(Self {
            dt: self.dt * factor as f64,
            gammas: self.gammas.clone(),
            increments,
        })
    }
}

/// `W^N(t_k)` on `t_k = k·dt`, `k = 0..=round(T/dt)`.
pub fn sample_cwiener_path<R: Rng + ?Sized>(
    prior: &GaussianPrior,
    n: usize,
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<SpectralField>> {
    if !(dt > 0.0) || horizon < dt {
        return Err(Error::config("need dt > 0 and T ≥ dt"));
    }
    let steps = (horizon / dt).round() as usize;
    Ok(CWienerPath::sample(&prior.gammas(n), steps, dt, rng)?.values(prior.basis()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use crate::sequence_space::synthesize;
    use crate::stats::{mean_estimate, variance};
    use approx::assert_relative_eq;

    fn rng(k: u64) -> crate::rng::StreamRng {
        SeedStream::new(20_240_611, k).rng()
    }

    #[test]
    fn uniform_normalization_and_point_mass() {
        let p = UniformPrior::new(
            BasisFamily::DirichletSine,
            Offset::Constant(1.0),
            0.5,
            GammaLaw::PSeries { exponent: 2.0 },
        )
        .unwrap();
        assert_relative_eq!(p.gamma_l1(), 1.0 / 3.0, max_relative = 1e-14);
        let (lo, hi) = p.bounds();
        assert_relative_eq!(lo, 2.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(hi, 4.0 / 3.0, max_relative = 1e-15);
        let direct: f64 = (1..=256).map(|j| p.gamma(j)).sum();
        assert_relative_eq!(direct + p.tail(256), p.gamma_l1(), max_relative = 1e-13);

        let z = UniformPrior::new(BasisFamily::DirichletSine, Offset::Constant(1.0), 0.0, GammaLaw::Zero).unwrap();
        let u = z.sample(16, &mut rng(0));
        let v = synthesize(&u, &[0.1, 0.5, 0.9]).unwrap();
        assert_eq!(v, vec![1.0, 1.0, 1.0]);

        assert!(UniformPrior::new(
            BasisFamily::DirichletSine,
            Offset::Constant(-1.0),
            0.5,
            GammaLaw::PSeries { exponent: 2.0 }
        )
        .is_err());
        assert!(UniformPrior::new(
            BasisFamily::DirichletSine,
            Offset::Constant(1.0),
            0.5,
            GammaLaw::PSeries { exponent: 1.0 }
        )
        .is_err());
    }

    #[test]
    fn uniform_mean_is_offset() {
        let p = UniformPrior::new(
            BasisFamily::DirichletSine,
            Offset::Linear { left: 1.0, right: 2.0 },
            0.5,
            GammaLaw::PSeries { exponent: 2.0 },
        )
        .unwrap();
        let mut r = rng(1);
        let grid = [0.3];
        let vals: Vec<f64> = (0..10_000).map(|_| synthesize(&p.sample(32, &mut r), &grid).unwrap()[0]).collect();
        assert!(mean_estimate(&vals).agrees_with(1.3, 3.0, 0.0));
    }

    #[test]
    fn generalized_gaussian_moments() {
        let mut r = rng(2);
        let n = 1_000_000;
        let g2 = GeneralizedGaussian::new(2.0).unwrap();
        let x: Vec<f64> = (0..n).map(|_| g2.sample(&mut r)).collect();
        let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
        assert!(mean_estimate(&sq).agrees_with(1.0, 3.0, 0.0));
        assert!(mean_estimate(&x).agrees_with(0.0, 3.0, 0.0));

        let g1 = GeneralizedGaussian::new(1.0).unwrap();
        let a: Vec<f64> = (0..n).map(|_| g1.sample(&mut r).abs()).collect();
        assert!(mean_estimate(&a).agrees_with(2.0, 3.0, 0.0));

        assert!(matches!(sample_generalized_gaussian(0.5, &mut r), Err(Error::Domain(_))));
    }

    #[test]
    fn fernique_edge_cases() {
        let mut r = rng(3);
        let e = fernique_moment(2.0, 0.0, 100, &mut r).unwrap();
        assert_eq!(e.value, 1.0);
        assert!(matches!(fernique_moment(2.0, 0.5, 100, &mut r), Err(Error::Divergence(_))));
    }

    #[test]
    fn besov_coefficients() {
        let b = BesovPrior::new(BasisSpec::dirichlet_1d(), 1.0, 2.0, 1.0).unwrap();
        assert_relative_eq!(b.gamma(1), 1.0);
        assert_relative_eq!(b.gamma(4), 0.25, max_relative = 1e-15);
        assert!(b.sample(0, &mut rng(4)).is_empty());
    }

    /// Two-sample Kolmogorov–Smirnov statistic.
    fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn besov_at_q2_matches_gaussian() {
        let basis = BasisSpec::dirichlet_1d();
        let delta: f64 = 2.0;
        let b = BesovPrior::new(basis, 1.5, 2.0, delta).unwrap();
        let g = GaussianPrior::new(basis, 1.5, delta.powf(-0.5)).unwrap();
        for j in 1..10 {
            assert_relative_eq!(b.gamma(j), g.gamma(j), max_relative = 1e-14);
        }
        let n = 4000;
        let mut r = rng(5);
        let nb: Vec<f64> = (0..n).map(|_| b.sample(16, &mut r).sobolev_norm(0.0)).collect();
        let ng: Vec<f64> = (0..n).map(|_| g.sample(16, &mut r).sobolev_norm(0.0)).collect();
        // α = 0.001 critical value
        let crit = 1.95 * ((2 * n) as f64 / (n * n) as f64).sqrt();
        assert!(ks_statistic(&nb, &ng) < crit);
    }

    #[test]
    fn gaussian_prior_moments() {
        let g = GaussianPrior::new(BasisSpec::dirichlet_1d(), 1.0, 1.0).unwrap();
        assert!(g.sample(0, &mut rng(6)).is_empty());
        assert!(GaussianPrior::new(BasisSpec::dirichlet_1d(), 0.5, 1.0).is_err());
        let mut r = rng(7);
        let draws: Vec<SpectralField> = (0..20_000).map(|_| g.sample(4, &mut r)).collect();
        for j in 1..=4 {
            let sq: Vec<f64> = draws.iter().map(|u| u.coeff(j).powi(2)).collect();
            assert!(mean_estimate(&sq).agrees_with(g.gamma(j).powi(2), 3.0, 0.0), "mode {j}");
        }
    }

    #[test]
    fn kl_tail_values() {
        // brute-force oracle
        let brute: f64 = (11..2_000_000u64).rev().map(|j| (j as f64).powi(-4)).sum();
        assert_relative_eq!(kl_tail(2.0, 0.0, 1, 10).unwrap(), brute, max_relative = 1e-12);
        // ζ(4) − Σ_{j≤10} j^{−4}
        assert_relative_eq!(kl_tail(2.0, 0.0, 1, 10).unwrap(), 2.8665e-4, max_relative = 1e-4);
        assert_relative_eq!(
            kl_tail(1.0, 0.0, 1, 0).unwrap(),
            std::f64::consts::PI.powi(2) / 6.0,
            max_relative = 1e-14
        );
        assert!(kl_tail(1.0, 0.0, 1, 100).unwrap() < kl_tail(1.0, 0.0, 1, 10).unwrap());
        assert!(matches!(kl_tail(1.0, 0.5, 1, 10), Err(Error::Divergence(_))));
    }

    #[test]
    fn cwiener_path_statistics() {
        let g = GaussianPrior::new(BasisSpec::dirichlet_1d(), 1.0, 1.0).unwrap();
        let mut r = rng(8);
        let paths: Vec<Vec<SpectralField>> = (0..10_000)
            .map(|_| sample_cwiener_path(&g, 3, 1.0, 0.25, &mut r).unwrap())
            .collect();
        assert!(paths[0][0].coeffs.iter().all(|&c| c == 0.0));
        for j in 1..=3 {
            for k in [2usize, 4] {
                let t = k as f64 * 0.25;
                let sq: Vec<f64> = paths.iter().map(|p| p[k].coeff(j).powi(2)).collect();
                assert!(mean_estimate(&sq).agrees_with(g.gamma(j).powi(2) * t, 3.0, 0.0));
            }
        }
        // disjoint increments: [0, 0.5] and [0.5, 1]
        let prod: Vec<f64> = paths.iter().map(|p| p[2].coeff(1) * (p[4].coeff(1) - p[2].coeff(1))).collect();
        let a: Vec<f64> = paths.iter().map(|p| p[2].coeff(1)).collect();
        let b: Vec<f64> = paths.iter().map(|p| p[4].coeff(1) - p[2].coeff(1)).collect();
        let corr = mean_estimate(&prod).value / (variance(&a) * variance(&b)).sqrt();
        assert!(corr.abs() < 3.0 / (10_000f64).sqrt());
    }

    #[test]
    fn coarsening_sums_increments() {
        let g = GaussianPrior::new(BasisSpec::dirichlet_1d(), 1.0, 1.0).unwrap();
        let p = CWienerPath::sample(&g.gammas(2), 8, 0.1, &mut rng(9)).unwrap();
        let c = p.coarsen(4).unwrap();
        assert_eq!(c.steps(), 2);
        let fine = p.values(g.basis());
        let coarse = c.values(g.basis());
        assert_relative_eq!(fine[8].coeff(1), coarse[2].coeff(1), max_relative = 1e-14);
        assert!(p.coarsen(3).is_err());
    }

    #[test]
    fn seeds_reproduce() {
        let g = GaussianPrior::new(BasisSpec::dirichlet_1d(), 1.0, 1.0).unwrap();
        let s = SeedStream::new(1, 2);
        assert_eq!(g.sample(10, &mut s.rng()), g.sample(10, &mut s.rng()));
    }
}
