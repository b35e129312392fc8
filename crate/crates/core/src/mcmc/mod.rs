//! Metropolis samplers on the truncated coefficient space.
//!
//! * [`SamplerKind::Pcn`] — `v = √(1−β²)u + βξ`, `ξ ~ N(0, C)`, accepted with
//!   `min{1, exp(Φ(u) − Φ(v))}`. Prior-reversible, so the acceptance rate does
//!   not collapse as `N` grows.
//! * [`SamplerKind::Rwm`] — `v = u + βξ`, accepted with
//!   `min{1, exp(I(u) − I(v))}`, `I = Φ + ½‖C^{−1/2}u‖²`.
//! * [`SamplerKind::Independence`] — fresh prior draws; works for any prior.
//!
//! Every step draws the proposal first and then exactly one uniform, whether
//! or not the acceptance is certain, so paired runs stay aligned.

mod diagnostics;
mod experiments;

pub use diagnostics::{autocorrelation, chain_mean, chain_variance, ess, iact, MIN_SERIES};
pub use experiments::{clt_check, gap_scaling_experiment, i_divergence_check, BetaPolicy, CltRow, CltTable, GapRow, IDivergenceRow};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::PosteriorSpec;
use crate::random_fields::Prior;
use crate::rng::{SeedStream, StreamRng};
use crate::sequence_space::SpectralField;
use crate::stats::Estimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Pcn,
    Rwm,
    Independence,
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplerKind::Pcn => "pcn",
            SamplerKind::Rwm => "rwm",
            SamplerKind::Independence => "independence",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub sampler: SamplerKind,
    pub step_beta: f64,
    pub iters: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "one")]
    pub thin: usize,
    pub seed: SeedStream,
    /// Store every retained state (memory `N × retained`).
    #[serde(default)]
    pub keep_samples: bool,
    /// 1-based coordinates whose traces are kept for diagnostics.
    #[serde(default = "default_monitor")]
    pub monitor: Vec<usize>,
}

fn one() -> usize {
    1
}

fn default_monitor() -> Vec<usize> {
    vec![1, 2]
}

impl ChainConfig {
    pub fn new(sampler: SamplerKind, step_beta: f64, iters: usize, seed: SeedStream) -> Self {
        Self {
            sampler,
            step_beta,
            iters,
            burn_in: 0,
            thin: 1,
            seed,
            keep_samples: false,
            monitor: default_monitor(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_beta > 0.0) {
            return Err(Error::config("step_beta must be positive"));
        }
        if self.sampler == SamplerKind::Pcn && self.step_beta > 1.0 {
            return Err(Error::config(format!("pCN needs step_beta ≤ 1, got {}", self.step_beta)));
        }
        if self.burn_in >= self.iters {
            return Err(Error::config("burn_in must be smaller than iters"));
        }
        if self.thin == 0 {
            return Err(Error::config("thin must be positive"));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.iters - self.burn_in).div_ceil(self.thin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepResult {
    pub accepted: bool,
    /// The potential could not be evaluated at the proposal (rejected).
    pub forward_failed: bool,
}

/// One Markov chain; holds the current state and its potential.
#[derive(Debug)]
pub struct Chain<'a> {
    post: &'a PosteriorSpec,
    kind: SamplerKind,
    beta: f64,
    gammas: Vec<f64>,
    u: SpectralField,
    phi: f64,
    /// `½‖C^{−1/2}u‖²`, tracked for the standard random walk
    prior_energy: f64,
    rng: StreamRng,
}

impl<'a> Chain<'a> {
    /// Start from `init`, or from a prior draw taken from the chain's stream.
    pub fn new(post: &'a PosteriorSpec, kind: SamplerKind, beta: f64, seed: SeedStream, init: Option<SpectralField>) -> Result<Self> {
        if !(beta > 0.0) || (kind == SamplerKind::Pcn && beta > 1.0) {
            return Err(Error::config(format!("invalid step_beta {beta} for {kind}")));
        }
        if kind != SamplerKind::Independence && post.prior.as_gaussian().is_none() {
            return Err(Error::config(format!("the {kind} sampler needs a Gaussian prior")));
        }
        let n = post.n;
        let gammas: Vec<f64> = (1..=n).map(|j| post.prior.gamma(j)).collect();
        if kind == SamplerKind::Rwm && gammas.contains(&0.0) {
            return Err(Error::config("standard RWM needs γ_j > 0 on every active mode"));
        }
        let mut rng = seed.rng();
        let u = match init {
            Some(u) => u,
            None => post.prior.sample(n, &mut rng),
        };
        let phi = post.potential_at(&u)?;
        let mut chain = Self {
            post,
            kind,
            beta,
            gammas,
            u,
            phi,
            prior_energy: 0.0,
            rng,
        };
        chain.prior_energy = chain.energy(&chain.u.coeffs);
        Ok(chain)
    }

    fn energy(&self, u: &[f64]) -> f64 {
        0.5 * u.iter().zip(&self.gammas).map(|(x, g)| (x / g).powi(2)).sum::<f64>()
    }

    pub fn state(&self) -> &SpectralField {
        &self.u
    }

    pub fn potential(&self) -> f64 {
        self.phi
    }

    /// `I(u) = Φ(u) + ½‖C^{−1/2}u‖²`.
    pub fn i_value(&self) -> f64 {
        self.phi + self.prior_energy
    }

    fn propose(&mut self) -> SpectralField {
        match self.kind {
            SamplerKind::Independence => self.post.prior.sample(self.post.n, &mut self.rng),
            SamplerKind::Pcn | SamplerKind::Rwm => {
                let a = if self.kind == SamplerKind::Pcn {
                    (1.0 - self.beta * self.beta).sqrt()
                } else {
                    1.0
                };
                let mut v = self.u.clone();
                for (x, g) in v.coeffs.iter_mut().zip(&self.gammas) {
                    let z: f64 = self.rng.sample(StandardNormal);
                    let xi = g * z;
                    *x = a * *x + self.beta * xi;
                }
                v
            }
        }
    }

    pub fn step(&mut self) -> Result<StepResult> {
        let v = self.propose();
        let phi_v = match self.post.potential_at(&v) {
            Ok(p) if p.is_finite() => Some(p),
            Ok(_) | Err(Error::Positivity { .. }) => None,
            Err(e) => return Err(e),
        };
        let uniform: f64 = self.rng.random();
        let Some(phi_v) = phi_v else {
            return Ok(StepResult {
                accepted: false,
                forward_failed: true,
            });
        };
        let (log_ratio, energy_v) = match self.kind {
            SamplerKind::Rwm => {
                let e = self.energy(&v.coeffs);
                (self.phi + self.prior_energy - phi_v - e, e)
            }
            _ => (self.phi - phi_v, 0.0),
        };
        let accepted = uniform < log_ratio.min(0.0).exp();
        if accepted {
            self.u = v;
            self.phi = phi_v;
            self.prior_energy = energy_v;
        }
        Ok(StepResult {
            accepted,
            forward_failed: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub acceptance_rate: f64,
    pub forward_failures: usize,
    pub retained: usize,
    /// Per monitored coordinate; `None` when the trace is too short or constant.
    pub iact: Vec<Option<f64>>,
    pub ess: Vec<Option<f64>>,
    pub ergodic_means: Vec<Estimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub samples: Option<Vec<Vec<f64>>>,
    /// `traces[i]` is the retained series of coordinate `monitor[i]`.
    pub traces: Vec<Vec<f64>>,
    pub potential_trace: Vec<f64>,
    pub diagnostics: ChainDiagnostics,
}

/// Run `cfg.iters` steps, drop the burn-in, thin, and summarize.
pub fn run_chain(post: &PosteriorSpec, cfg: &ChainConfig, init: Option<SpectralField>) -> Result<ChainOutput> {
    cfg.validate()?;
    let mut chain = Chain::new(post, cfg.sampler, cfg.step_beta, cfg.seed, init)?;
    let mut traces = vec![Vec::with_capacity(cfg.retained()); cfg.monitor.len()];
    let mut potential_trace = Vec::with_capacity(cfg.retained());
    let mut samples = cfg.keep_samples.then(|| Vec::with_capacity(cfg.retained()));
    let (mut accepted, mut failures) = (0usize, 0usize);
    for k in 0..cfg.iters {
        let r = chain.step()?;
        accepted += r.accepted as usize;
        failures += r.forward_failed as usize;
        if k >= cfg.burn_in && (k - cfg.burn_in).is_multiple_of(cfg.thin) {
            let u = chain.state();
            for (t, &j) in traces.iter_mut().zip(&cfg.monitor) {
                t.push(u.coeff(j));
            }
            potential_trace.push(chain.potential());
            if let Some(s) = samples.as_mut() {
                s.push(u.coeffs.clone());
            }
        }
    }
    let retained = potential_trace.len();
    let mut iacts = Vec::new();
    let mut esses = Vec::new();
    let mut means = Vec::new();
    for t in &traces {
        let tau = iact(t).ok();
        iacts.push(tau);
        esses.push(tau.map(|tau| ess(t.len(), tau)));
        let m = crate::stats::mean(t);
        let err = match tau {
            Some(tau) if t.len() > 1 => (crate::stats::variance(t) * tau / t.len() as f64).sqrt(),
            _ => f64::NAN,
        };
        means.push(Estimate::new(m, err));
    }
    Ok(ChainOutput {
        samples,
        traces,
        potential_trace,
        diagnostics: ChainDiagnostics {
            acceptance_rate: accepted as f64 / cfg.iters as f64,
            forward_failures: failures,
            retained,
            iact: iacts,
            ess: esses,
            ergodic_means: means,
        },
    })
}

/// Log of the pCN transition density `q(u, v)` w.r.t. Lebesgue measure.
pub fn pcn_log_transition(prior: &Prior, beta: f64, u: &[f64], v: &[f64]) -> f64 {
    let a = (1.0 - beta * beta).sqrt();
    u.iter()
        .zip(v)
        .enumerate()
        .map(|(i, (x, y))| {
            let s2 = beta * beta * prior.gamma(i + 1).powi(2);
            -0.5 * (y - a * x).powi(2) / s2 - 0.5 * (2.0 * std::f64::consts::PI * s2).ln()
        })
        .sum()
}
