//! Preconditioned Langevin dynamics
//! `du = (−u − C P^N DΦ(P^N u)) dt + √2 dW`, `W` a `C`-Wiener process.
//!
//! The integrator is a Lie splitting: each step applies the exact
//! Ornstein–Uhlenbeck transition (decay `e^{−dt}`, Gaussian increment of
//! variance `(1 − e^{−2dt})γ_j²`) and adds the explicit increment
//! `−dt·γ_j²(DΦ)_j` on the first `N` modes. Modes `N < j ≤ n_rep` only see the
//! OU part, so with `Φ ≡ 0` every mode is sampled exactly and all time-step
//! bias comes from the `DΦ` term.
//!
//! The drift is written `−u − C^N DΦ(P^N u)`; for `C` diagonal in the basis
//! this is the same map whether the projection is applied before or after
//! differentiating.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{ChainConfig, SamplerKind};
use crate::posterior::{HeatConjugate, PosteriorSpec, Potential};
use crate::random_fields::{CWienerPath, GaussianPrior, Prior};
use crate::rng::SeedStream;
use crate::sequence_space::SpectralField;
use crate::stats::{linear_fit, mean, Estimate};

/// Most modes a finite-difference gradient will touch.
pub const FD_MODE_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpdeConfig {
    /// Modes that feel the drift.
    pub n: usize,
    /// Modes simulated at all; `(n, n_rep]` follow the exact OU transition.
    pub n_rep: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Regularity index of the reported `X^t` norms.
    #[serde(default)]
    pub t_index: f64,
    /// Record the state every this many steps (the final state is always kept).
    #[serde(default = "one")]
    pub record_every: usize,
}

fn default_dt() -> f64 {
    0.01
}

fn default_horizon() -> f64 {
    10.0
}

fn one() -> usize {
    1
}

impl SpdeConfig {
    pub fn new(n: usize, dt: f64, horizon: f64) -> Self {
        Self {
            n,
            n_rep: n,
            dt,
            horizon,
            t_index: 0.0,
            record_every: 1,
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn validate(&self, prior: &GaussianPrior) -> Result<()> {
        if !(self.dt > 0.0) || !(self.horizon >= self.dt) {
            return Err(Error::config(format!(
                "need 0 < dt ≤ T, got dt = {}, T = {}",
                self.dt, self.horizon
            )));
        }
        if self.n == 0 || self.n_rep < self.n {
            return Err(Error::config("need 1 ≤ n ≤ n_rep"));
        }
        if self.record_every == 0 {
            return Err(Error::config("record_every must be positive"));
        }
        let d = prior.basis().dim as f64;
        if !(self.t_index >= 0.0 && self.t_index < prior.s() - d / 2.0) {
            return Err(Error::config(format!(
                "t_index must lie in [0, {}) for this prior",
                prior.s() - d / 2.0
            )));
        }
        Ok(())
    }
}

/// How `DΦ` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GradientEvaluator {
    /// Closed form (heat, quadratic, linear and diagonal-misfit potentials).
    Analytic,
    /// Central differences `(Φ(u + h e_j) − Φ(u − h e_j)) / 2h` on the first
    /// `active` modes; zero beyond.
    FiniteDifference { h: f64, active: usize },
}

/// `DΦ(P^N u)` as a field on `N` modes.
pub fn grad_potential(u: &SpectralField, g: &GradientEvaluator, pot: &Potential, n: usize) -> Result<SpectralField> {
    let mut low = u.clone();
    low.coeffs.resize(n, 0.0);
    let coeffs = match *g {
        GradientEvaluator::Analytic => pot
            .gradient(&low)
            .ok_or_else(|| Error::config("this potential has no closed-form gradient; use finite differences"))?,
        GradientEvaluator::FiniteDifference { h, active } => {
            if active > FD_MODE_LIMIT {
                return Err(Error::CostGuard {
                    requested: active,
                    limit: FD_MODE_LIMIT,
                });
            }
            if !(1e-7..=1e-3).contains(&h) {
                return Err(Error::config(format!("finite-difference step {h} outside [1e-7, 1e-3]")));
            }
            let mut out = vec![0.0; n];
            for (j, o) in out.iter_mut().enumerate().take(active.min(n)) {
                *o = pot.mode_difference(&low, j + 1, h)? / (2.0 * h);
            }
            out
        }
    };
    Ok(SpectralField::new(u.basis, coeffs))
}

/// `F^N(u) = −u − C^N DΦ(P^N u)` on all coefficients of `u`.
pub fn drift(u: &SpectralField, pot: &Potential, prior: &GaussianPrior, g: &GradientEvaluator, n: usize) -> Result<SpectralField> {
    let d = grad_potential(u, g, pot, n.min(u.len()))?;
    let coeffs = u
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, x)| -x - d.coeffs.get(i).map_or(0.0, |dj| prior.gamma(i + 1).powi(2) * dj))
        .collect();
    Ok(SpectralField::new(u.basis, coeffs))
}

/// Prior, potential and gradient rule of one Langevin system.
#[derive(Debug, Clone, Copy)]
pub struct SpdeProblem<'a> {
    pub prior: &'a GaussianPrior,
    pub potential: &'a Potential,
    pub gradient: GradientEvaluator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdeTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
    /// The noise that produced `states`; replaying it reproduces them exactly.
    pub noise: CWienerPath,
    /// Largest `‖C^N DΦ(P^N u)‖` seen along the path.
    pub max_drift_correction: f64,
}

impl SpdeTrajectory {
    pub fn last(&self) -> &SpectralField {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// Integrate from `u0` driven by `w` (which must use `cfg.dt`, cover the
/// horizon and carry at least `n_rep` modes).
pub fn integrate(problem: &SpdeProblem, cfg: &SpdeConfig, u0: &SpectralField, w: &CWienerPath) -> Result<SpdeTrajectory> {
    cfg.validate(problem.prior)?;
    let steps = cfg.steps();
    if (w.dt - cfg.dt).abs() > 1e-12 * cfg.dt || w.steps() != steps {
        return Err(Error::config(format!(
            "noise path has {} steps of {}, expected {steps} of {}",
            w.steps(),
            w.dt,
            cfg.dt
        )));
    }
    if w.modes() < cfg.n_rep {
        return Err(Error::config("noise path has fewer modes than n_rep"));
    }
    let gamma2: Vec<f64> = (1..=cfg.n_rep).map(|j| problem.prior.gamma(j).powi(2)).collect();
    let decay = (-cfg.dt).exp();
    let noise_scale = ((1.0 - decay * decay) / cfg.dt).sqrt();

    let mut u = u0.clone();
    u.coeffs.resize(cfg.n_rep, 0.0);
    let mut traj = SpdeTrajectory {
        times: vec![0.0],
        states: vec![u.clone()],
        noise: w.clone(),
        max_drift_correction: 0.0,
    };
    for k in 0..steps {
        let t = (k + 1) as f64 * cfg.dt;
        let d = grad_potential(&u, &problem.gradient, problem.potential, cfg.n)?;
        let mut corr_sq = 0.0;
        for (j, x) in u.coeffs.iter_mut().enumerate() {
            let c = d.coeffs.get(j).map_or(0.0, |dj| gamma2[j] * dj);
            corr_sq += c * c;
            *x = decay * *x - cfg.dt * c + noise_scale * w.increments[k][j];
        }
        traj.max_drift_correction = traj.max_drift_correction.max(corr_sq.sqrt());
        if !u.is_finite() || !corr_sq.is_finite() {
            traj.noise.increments.truncate(k + 1);
            return Err(Error::SpdeDivergence {
                time: t,
                prefix: Box::new(traj),
            });
        }
        if (k + 1) % cfg.record_every == 0 || k + 1 == steps {
            traj.times.push(t);
            traj.states.push(u.clone());
        }
    }
    Ok(traj)
}

/// A `C`-Wiener path with the prior's `γ` law matching `cfg`.
pub fn sample_noise<R: Rng + ?Sized>(prior: &GaussianPrior, cfg: &SpdeConfig, rng: &mut R) -> Result<CWienerPath> {
    CWienerPath::sample(&prior.gammas(cfg.n_rep), cfg.steps(), cfg.dt, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItoReport {
    /// `sup_t ‖u⁽¹⁾(t) − u⁽²⁾(t)‖_t`
    pub output_gap: f64,
    /// `‖u⁽¹⁾(0) − u⁽²⁾(0)‖_t + sup_t ‖W⁽¹⁾(t) − W⁽²⁾(t)‖_t`
    pub input_gap: f64,
    pub ratio: f64,
}

/// Lipschitz ratio of the Itô map `(u0, W) ↦ u` between two input pairs,
/// with suprema over the recorded times.
pub fn ito_map_continuity(
    problem: &SpdeProblem,
    cfg: &SpdeConfig,
    (u0a, wa): (&SpectralField, &CWienerPath),
    (u0b, wb): (&SpectralField, &CWienerPath),
) -> Result<ItoReport> {
    let a = integrate(problem, cfg, u0a, wa)?;
    let b = integrate(problem, cfg, u0b, wb)?;
    let t = cfg.t_index;
    let output_gap = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| gap_norm(&x.coeffs, &y.coeffs, t))
        .fold(0.0, f64::max);
    let basis = u0a.basis;
    let noise_gap = wa
        .values(basis)
        .iter()
        .zip(wb.values(basis).iter())
        .map(|(x, y)| gap_norm(&x.coeffs, &y.coeffs, t))
        .fold(0.0, f64::max);
    let mut x0 = u0a.coeffs.clone();
    let mut y0 = u0b.coeffs.clone();
    x0.resize(cfg.n_rep, 0.0);
    y0.resize(cfg.n_rep, 0.0);
    let input_gap = gap_norm(&x0, &y0, t) + noise_gap;
    if input_gap == 0.0 {
        return Err(Error::UndefinedRatio("identical inputs give no Lipschitz ratio".into()));
    }
    Ok(ItoReport {
        output_gap,
        input_gap,
        ratio: output_gap / input_gap,
    })
}

fn gap_norm(a: &[f64], b: &[f64], t: f64) -> f64 {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| {
            let d = a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0);
            crate::sequence_space::sobolev_weight(i + 1, t, 1) * d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Largest `‖F(u) − F(v)‖_t / ‖u − v‖_t` over random prior pairs.
pub fn drift_lipschitz_probe(problem: &SpdeProblem, n: usize, t: f64, pairs: usize, seed: SeedStream) -> Result<f64> {
    let mut rng = seed.rng();
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let u = problem.prior.sample(n, &mut rng);
        let v = problem.prior.sample(n, &mut rng);
        let fu = drift(&u, problem.potential, problem.prior, &problem.gradient, n)?;
        let fv = drift(&v, problem.potential, problem.prior, &problem.gradient, n)?;
        let den = gap_norm(&u.coeffs, &v.coeffs, t);
        if den > 0.0 {
            worst = worst.max(gap_norm(&fu.coeffs, &fv.coeffs, t) / den);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorReport {
    /// `max |Φ(v) − Φ(u) − ⟨DΦ(u), v − u⟩|`
    pub max_remainder: f64,
    /// `max |remainder| / ‖u − v‖_t²`, the empirical second-order constant.
    pub max_ratio: f64,
    /// Largest relative disagreement between the gradient and central
    /// differences at `h = 1e-5`.
    pub max_fd_rel_error: f64,
}

/// Second-order Taylor remainder and gradient-vs-finite-difference check.
pub fn taylor_remainder_check(
    pot: &Potential,
    g: &GradientEvaluator,
    pairs: &[(SpectralField, SpectralField)],
    t: f64,
) -> Result<TaylorReport> {
    let mut report = TaylorReport {
        max_remainder: 0.0,
        max_ratio: 0.0,
        max_fd_rel_error: 0.0,
    };
    for (u, v) in pairs {
        let n = u.len();
        let du = grad_potential(u, g, pot, n)?;
        let r = pot.value(v)?
            - pot.value(u)?
            - du.coeffs
                .iter()
                .zip(v.coeffs.iter().zip(&u.coeffs))
                .map(|(d, (a, b))| d * (a - b))
                .sum::<f64>();
        report.max_remainder = report.max_remainder.max(r.abs());
        let dist = gap_norm(&u.coeffs, &v.coeffs, t);
        if dist > 0.0 {
            report.max_ratio = report.max_ratio.max(r.abs() / (dist * dist));
        }
        if n <= FD_MODE_LIMIT {
            let fd = GradientEvaluator::FiniteDifference { h: 1e-5, active: n };
            let approx = grad_potential(u, &fd, pot, n)?;
            for (a, b) in du.coeffs.iter().zip(&approx.coeffs) {
                let scale = a.abs().max(b.abs());
                if scale > 0.0 {
                    report.max_fd_rel_error = report.max_fd_rel_error.max((a - b).abs() / scale);
                }
            }
        }
    }
    Ok(report)
}

/// `‖u^N(T) − u^{ref}(T)‖_t` for each `N`, all driven by the same `u0` and
/// noise; the reference uses `n_ref` drift modes.
pub fn galerkin_consistency(
    problem: &SpdeProblem,
    cfg: &SpdeConfig,
    u0: &SpectralField,
    w: &CWienerPath,
    n_list: &[usize],
    n_ref: usize,
) -> Result<Vec<(usize, f64)>> {
    let mut c = *cfg;
    c.n = n_ref;
    c.record_every = cfg.steps().max(1);
    let reference = integrate(problem, &c, u0, w)?;
    n_list
        .iter()
        .map(|&n| {
            c.n = n;
            let tr = integrate(problem, &c, u0, w)?;
            Ok((n, gap_norm(&tr.last().coeffs, &reference.last().coeffs, cfg.t_index)))
        })
        .collect()
}

/// Per-mode `(mean, variance)` of the posterior when it is an exact Gaussian
/// (constant, linear, quadratic or heat potential); prior laws beyond the
/// potential's reach and beyond `n`.
pub fn gaussian_posterior_modes(pot: &Potential, prior: &GaussianPrior, n: usize, n_rep: usize) -> Option<Vec<(f64, f64)>> {
    let limit = pot.truncation().unwrap_or(n).min(n);
    let mut core = pot;
    while let Potential::Shifted { inner, .. } | Potential::Truncated { inner, .. } = core {
        core = inner;
    }
    let prior_mode = |j: usize| (0.0, prior.gamma(j).powi(2));
    let active: Vec<(f64, f64)> = match core {
        Potential::Constant(_) => (1..=limit).map(prior_mode).collect(),
        Potential::Linear(l) => (1..=limit)
            .map(|j| {
                let g2 = prior.gamma(j).powi(2);
                (-g2 * l.coeffs.get(j - 1).copied().unwrap_or(0.0), g2)
            })
            .collect(),
        Potential::Quadratic(q) => (1..=limit)
            .map(|j| {
                let prec = prior.gamma(j).powi(-2) + q.curvature(j);
                (q.curvature(j) * q.c(j) / prec, 1.0 / prec)
            })
            .collect(),
        Potential::Heat(h) => {
            let c = HeatConjugate::new(prior, h, limit, None);
            (1..=limit).map(|j| (c.mean(j), c.variance(j))).collect()
        }
        Potential::Misfit(_) => return None,
        Potential::Shifted { .. } | Potential::Truncated { .. } => unreachable!(),
    };
    Some(active.into_iter().chain((limit + 1..=n_rep).map(prior_mode)).collect())
}

/// Draws from the posterior (first `n` modes) times the prior (modes up to
/// `n_rep`): exact when the posterior is Gaussian, otherwise a thinned pCN run.
pub fn posterior_ensemble(problem: &SpdeProblem, cfg: &SpdeConfig, replicas: usize, seed: SeedStream) -> Result<Vec<SpectralField>> {
    let basis = problem.prior.basis();
    if let Some(modes) = gaussian_posterior_modes(problem.potential, problem.prior, cfg.n, cfg.n_rep) {
        return Ok((0..replicas)
            .map(|r| {
                let mut rng = seed.fork(r as u64).rng();
                let coeffs = modes
                    .iter()
                    .map(|(m, v)| {
                        let z: f64 = rng.sample(StandardNormal);
                        m + v.sqrt() * z
                    })
                    .collect();
                SpectralField::new(basis, coeffs)
            })
            .collect());
    }
    let post = PosteriorSpec::new(Prior::Gaussian(*problem.prior), problem.potential.clone(), cfg.n)?;
    let thin = 20;
    let mut chain_cfg = ChainConfig::new(SamplerKind::Pcn, 0.5, 2000 + thin * replicas, seed.fork(u64::MAX));
    chain_cfg.burn_in = 2000;
    chain_cfg.thin = thin;
    chain_cfg.keep_samples = true;
    let out = crate::mcmc::run_chain(&post, &chain_cfg, None)?;
    let mut rng = seed.fork(u64::MAX - 1).rng();
    Ok(out
        .samples
        .unwrap_or_default()
        .into_iter()
        .take(replicas)
        .map(|mut c| {
            c.extend((cfg.n + 1..=cfg.n_rep).map(|j| {
                let z: f64 = rng.sample(StandardNormal);
                problem.prior.gamma(j) * z
            }));
            SpectralField::new(basis, c)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceRow {
    pub functional: String,
    pub t: f64,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub rows: Vec<InvarianceRow>,
    /// Per monitored mode: ensemble mean and variance at `T`.
    pub final_mean: Vec<Estimate>,
    pub final_variance: Vec<Estimate>,
    /// Per monitored mode: `Var(u_j(T)) − Var(u_j(0))`.
    pub variance_drift: Vec<Estimate>,
}

/// Mean and variance of a sample, each with its i.i.d. standard error.
pub fn moment_estimates(xs: &[f64]) -> (Estimate, Estimate) {
    let n = xs.len() as f64;
    let m = mean(xs);
    let c2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let c4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    (
        Estimate::new(m, (c2 / n).sqrt()),
        Estimate::new(c2 * n / (n - 1.0), ((c4 - c2 * c2).max(0.0) / n).sqrt()),
    )
}

/// Integrate `replicas` posterior draws to `T` and track `⟨u, φ_1⟩`,
/// `‖P²u‖²` and the first `monitor` coordinates at `checkpoints` equally
/// spaced times.
pub fn invariance_test(
    problem: &SpdeProblem,
    cfg: &SpdeConfig,
    replicas: usize,
    checkpoints: usize,
    monitor: usize,
    seed: SeedStream,
) -> Result<InvarianceReport> {
    cfg.validate(problem.prior)?;
    let steps = cfg.steps();
    if checkpoints < 2 || !steps.is_multiple_of(checkpoints - 1) {
        return Err(Error::config(format!(
            "{steps} steps cannot be split into {checkpoints} checkpoints"
        )));
    }
    let monitor = monitor.min(cfg.n_rep);
    let mut c = *cfg;
    c.record_every = steps / (checkpoints - 1);
    let init = posterior_ensemble(problem, cfg, replicas, seed.fork(0))?;
    let noise_seed = seed.fork(1);
    let states: Vec<Vec<SpectralField>> = init
        .par_iter()
        .enumerate()
        .map(|(r, u0)| {
            let w = sample_noise(problem.prior, &c, &mut noise_seed.fork(r as u64).rng())?;
            Ok(integrate(problem, &c, u0, &w)?.states)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for k in 0..checkpoints {
        let t = k as f64 * c.record_every as f64 * cfg.dt;
        let first: Vec<f64> = states.iter().map(|s| s[k].coeff(1)).collect();
        let p2: Vec<f64> = states.iter().map(|s| s[k].coeff(1).powi(2) + s[k].coeff(2).powi(2)).collect();
        rows.push(InvarianceRow {
            functional: "first-coefficient".into(),
            t,
            estimate: moment_estimates(&first).0,
        });
        rows.push(InvarianceRow {
            functional: "p2-norm-squared".into(),
            t,
            estimate: moment_estimates(&p2).0,
        });
    }
    let (mut final_mean, mut final_variance, mut variance_drift) = (Vec::new(), Vec::new(), Vec::new());
    for j in 1..=monitor {
        let x0: Vec<f64> = states.iter().map(|s| s[0].coeff(j)).collect();
        let xt: Vec<f64> = states.iter().map(|s| s[checkpoints - 1].coeff(j)).collect();
        let (m, v) = moment_estimates(&xt);
        let (_, v0) = moment_estimates(&x0);
        final_mean.push(m);
        final_variance.push(v);
        variance_drift.push(Estimate::new(v.value - v0.value, v.mc_error.hypot(v0.mc_error)));
    }
    Ok(InvarianceReport {
        rows,
        final_mean,
        final_variance,
        variance_drift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub dt: f64,
    pub mean: Estimate,
    pub variance: Estimate,
    /// `Var_dt − Var_{dt/2}` on coupled paths; estimates half the bias at `dt`.
    pub halving_difference: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasStudy {
    pub rows: Vec<BiasRow>,
    /// Slope of `log |Var_dt − Var_{dt/2}|` against `log dt`.
    pub slope: f64,
}

/// Time-step bias of the ensemble law of `⟨u(T), φ_1⟩`. Every replica uses
/// one Brownian path on the finest grid `min(dts)/2`, coarsened for each
/// `dt`, so the halving differences are free of most sampling noise.
pub fn dt_bias_study(problem: &SpdeProblem, cfg: &SpdeConfig, dts: &[f64], replicas: usize, seed: SeedStream) -> Result<BiasStudy> {
    let fine = dts.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0;
    let mut levels: Vec<f64> = dts.to_vec();
    levels.push(fine);
    let factors: Vec<usize> = levels
        .iter()
        .map(|dt| {
            let f = (dt / fine).round();
            if (f * fine - dt).abs() > 1e-9 * dt {
                Err(Error::config(format!("dt = {dt} is not a multiple of the finest step {fine}")))
            } else {
                Ok(f as usize)
            }
        })
        .collect::<Result<_>>()?;
    for dt in dts {
        if !levels.iter().any(|l| (l - dt / 2.0).abs() <= 1e-12 * dt) {
            return Err(Error::config(format!("dt = {dt} has no half step among the levels")));
        }
    }
    let mut fine_cfg = *cfg;
    fine_cfg.dt = fine;
    fine_cfg.record_every = fine_cfg.steps();
    fine_cfg.validate(problem.prior)?;
    let init = posterior_ensemble(problem, cfg, replicas, seed.fork(0))?;
    let noise_seed = seed.fork(1);
    // finals[r][level]
    let finals: Vec<Vec<f64>> = init
        .par_iter()
        .enumerate()
        .map(|(r, u0)| {
            let w = sample_noise(problem.prior, &fine_cfg, &mut noise_seed.fork(r as u64).rng())?;
            levels
                .iter()
                .zip(&factors)
                .map(|(&dt, &f)| {
                    let mut c = fine_cfg;
                    c.dt = dt;
                    c.record_every = c.steps();
                    Ok(integrate(problem, &c, u0, &w.coarsen(f)?)?.last().coeff(1))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let column = |l: usize| -> Vec<f64> { finals.iter().map(|r| r[l]).collect() };
    let mut rows = Vec::new();
    for (l, &dt) in dts.iter().enumerate() {
        let half = levels.iter().position(|x| (x - dt / 2.0).abs() <= 1e-12 * dt).unwrap();
        let (a, b) = (column(l), column(half));
        let (mean_a, var_a) = moment_estimates(&a);
        let mb = mean(&b);
        let paired: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - mean_a.value).powi(2) - (y - mb).powi(2))
            .collect();
        let (diff, _) = moment_estimates(&paired);
        let n = replicas as f64;
        rows.push(BiasRow {
            dt,
            mean: mean_a,
            variance: var_a,
            halving_difference: Estimate::new(diff.value * n / (n - 1.0), diff.mc_error),
        });
    }
    let lx: Vec<f64> = rows.iter().map(|r| r.dt.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.halving_difference.value.abs().ln()).collect();
    let slope = if rows.len() >= 2 { linear_fit(&lx, &ly).0 } else { f64::NAN };
    Ok(BiasStudy { rows, slope })
}

/// Stationary `(mean, variance)` of the discretized one-mode chain for a
/// quadratic potential `(λ/2)(u − c)²` and prior variance `γ²`. Used as an
/// independent check of the integrator's bias.
pub fn scheme_stationary_law(gamma2: f64, lambda: f64, center: f64, dt: f64) -> (f64, f64) {
    let a = (-dt).exp() - dt * gamma2 * lambda;
    let mean = dt * gamma2 * lambda * center / (1.0 - a);
    let var = (1.0 - (-2.0 * dt).exp()) * gamma2 / (1.0 - a * a);
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::{HeatPotential, QuadraticPotential};
    use crate::sequence_space::BasisSpec;

    fn prior(s: f64) -> GaussianPrior {
        GaussianPrior::new(BasisSpec::dirichlet_1d(), s, 1.0).unwrap()
    }

    fn heat(y: Vec<f64>) -> Potential {
        Potential::Heat(HeatPotential::new(BasisSpec::dirichlet_1d(), 0.0, y).unwrap())
    }

    fn seed(k: u64) -> SeedStream {
        SeedStream::new(4242, k)
    }

    #[test]
    fn heat_gradient_at_zero_and_quadratic_example() {
        let pot = heat(vec![1.0, -2.0]);
        let u = SpectralField::zeros(BasisSpec::dirichlet_1d(), 2);
        let d = grad_potential(&u, &GradientEvaluator::Analytic, &pot, 2).unwrap();
        for j in 1..=2 {
            let a = (j as f64 * std::f64::consts::PI).powi(2);
            let y = [1.0, -2.0][j - 1];
            assert_eq!(d.coeff(j), -(-a).exp() * y);
        }
        let q = Potential::Quadratic(QuadraticPotential::new(1.0, 0.5, vec![]).unwrap());
        let u = SpectralField::new(BasisSpec::dirichlet_1d(), vec![1.0, 2.0, 3.0]);
        let d = grad_potential(&u, &GradientEvaluator::Analytic, &q, 3).unwrap();
        assert_eq!(d.coeffs, vec![1.0, 4.0, 9.0]);
    }

    #[test]
    fn fd_cost_guard_and_step_range() {
        let u = SpectralField::zeros(BasisSpec::dirichlet_1d(), 80);
        let g = GradientEvaluator::FiniteDifference { h: 1e-5, active: 65 };
        assert!(matches!(grad_potential(&u, &g, &heat(vec![1.0]), 80), Err(Error::CostGuard { .. })));
        let g = GradientEvaluator::FiniteDifference { h: 1e-2, active: 4 };
        assert!(grad_potential(&u, &g, &heat(vec![1.0]), 80).is_err());
    }

    #[test]
    fn drift_examples() {
        let p = prior(2.0);
        let mut rng = seed(0).rng();
        let u = p.sample(5, &mut rng);
        let f = drift(&u, &Potential::zero(), &p, &GradientEvaluator::Analytic, 5).unwrap();
        assert_eq!(f.coeffs, u.scaled(-1.0).coeffs);

        let pot = heat(vec![0.0; 5]);
        let v = p.sample(5, &mut rng);
        let (a, b) = (0.7, -1.3);
        let comb = SpectralField::new(u.basis, u.coeffs.iter().zip(&v.coeffs).map(|(x, y)| a * x + b * y).collect());
        let fc = drift(&comb, &pot, &p, &GradientEvaluator::Analytic, 5).unwrap();
        let fu = drift(&u, &pot, &p, &GradientEvaluator::Analytic, 5).unwrap();
        let fv = drift(&v, &pot, &p, &GradientEvaluator::Analytic, 5).unwrap();
        for j in 0..5 {
            let lin = a * fu.coeffs[j] + b * fv.coeffs[j];
            assert!((fc.coeffs[j] - lin).abs() <= 1e-12 * (1.0 + lin.abs()));
        }
        let problem = SpdeProblem {
            prior: &p,
            potential: &heat(vec![1.0, 1.0]),
            gradient: GradientEvaluator::Analytic,
        };
        let l = drift_lipschitz_probe(&problem, 8, 0.5, 1000, seed(1)).unwrap();
        assert!(l.is_finite() && l >= 1.0 - 1e-12, "{l}");
    }

    #[test]
    fn exact_decay_without_noise() {
        let p = prior(2.0);
        let pot = Potential::zero();
        let problem = SpdeProblem {
            prior: &p,
            potential: &pot,
            gradient: GradientEvaluator::Analytic,
        };
        let cfg = SpdeConfig::new(1, 0.01, 2.0);
        let u0 = SpectralField::new(BasisSpec::dirichlet_1d(), vec![3.0]);
        let tr = integrate(&problem, &cfg, &u0, &CWienerPath::zero(1, cfg.steps(), cfg.dt)).unwrap();
        assert_eq!(tr.times.len(), tr.states.len());
        let got = tr.last().coeff(1);
        assert!((got / (3.0 * (-2.0f64).exp()) - 1.0).abs() < 1e-13, "{got}");
    }

    #[test]
    fn ou_transition_moments() {
        let p = prior(1.0);
        let pot = Potential::zero();
        let problem = SpdeProblem {
            prior: &p,
            potential: &pot,
            gradient: GradientEvaluator::Analytic,
        };
        let dt = 0.1;
        let cfg = SpdeConfig::new(2, dt, dt);
        let u0 = SpectralField::new(BasisSpec::dirichlet_1d(), vec![1.0, -2.0]);
        let mut rng = seed(2).rng();
        let out: Vec<Vec<f64>> = (0..100_000)
            .map(|_| {
                let w = sample_noise(&p, &cfg, &mut rng).unwrap();
                integrate(&problem, &cfg, &u0, &w).unwrap().last().coeffs.clone()
            })
            .collect();
        for j in 0..2 {
            let xs: Vec<f64> = out.iter().map(|r| r[j]).collect();
            let (m, v) = moment_estimates(&xs);
            assert!(m.agrees_with((-dt).exp() * u0.coeffs[j], 3.0, 0.0), "{m:?}");
            let target = (1.0 - (-2.0 * dt).exp()) * p.gamma(j + 1).powi(2);
            assert!(v.agrees_with(target, 3.0, 0.0), "{v:?} vs {target}");
        }
    }

    #[test]
    fn replay_is_deterministic_and_divergence_keeps_prefix() {
        let p = prior(2.0);
        let pot = heat(vec![0.5, 0.5]);
        let problem = SpdeProblem {
            prior: &p,
            potential: &pot,
            gradient: GradientEvaluator::Analytic,
        };
        let mut cfg = SpdeConfig::new(2, 0.05, 1.0);
        cfg.n_rep = 4;
        let w = sample_noise(&p, &cfg, &mut seed(3).rng()).unwrap();
        let u0 = SpectralField::zeros(BasisSpec::dirichlet_1d(), 4);
        let a = integrate(&problem, &cfg, &u0, &w).unwrap();
        let b = integrate(&problem, &cfg, &u0, &a.noise).unwrap();
        assert_eq!(a, b);

        let stiff = Potential::Quadratic(QuadraticPotential::new(1e6, 0.0, vec![]).unwrap());
        let problem = SpdeProblem {
            prior: &p,
            potential: &stiff,
            gradient: GradientEvaluator::Analytic,
        };
        let cfg = SpdeConfig::new(1, 0.1, 200.0);
        let w = CWienerPath::zero(1, cfg.steps(), cfg.dt);
        let u0 = SpectralField::new(BasisSpec::dirichlet_1d(), vec![1.0]);
        match integrate(&problem, &cfg, &u0, &w) {
            Err(Error::SpdeDivergence { time, prefix }) => {
                assert!(time > 0.0);
                assert!(prefix.states.len() >= 2);
                assert_eq!(prefix.times.len(), prefix.states.len());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn ito_map_examples() {
        let p = prior(2.0);
        let pot = Potential::zero();
        let problem = SpdeProblem {
            prior: &p,
            potential: &pot,
            gradient: GradientEvaluator::Analytic,
        };
        let cfg = SpdeConfig::new(3, 0.05, 1.0);
        let w = sample_noise(&p, &cfg, &mut seed(4).rng()).unwrap();
        let u0 = SpectralField::new(BasisSpec::dirichlet_1d(), vec![0.1, 0.2, 0.3]);
        assert!(matches!(
            ito_map_continuity(&problem, &cfg, (&u0, &w), (&u0, &w)),
            Err(Error::UndefinedRatio(_))
        ));
        let shifted = SpectralField::new(u0.basis, vec![0.6, 0.2, 0.3]);
        let r = ito_map_continuity(&problem, &cfg, (&u0, &w), (&shifted, &w)).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-12, "{r:?}");

        let pot = heat(vec![1.0, 1.0, 1.0]);
        let problem = SpdeProblem {
            prior: &p,
            potential: &pot,
            gradient: GradientEvaluator::Analytic,
        };
        let w2 = sample_noise(&p, &cfg, &mut seed(5).rng()).unwrap();
        let ratios: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|eps| {
                let mut wb = w.clone();
                for (a, b) in wb.increments.iter_mut().zip(&w2.increments) {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += eps * y;
                    }
                }
                let ub = SpectralField::new(u0.basis, u0.coeffs.iter().map(|x| x + eps).collect());
                ito_map_continuity(&problem, &cfg, (&u0, &w), (&ub, &wb)).unwrap().ratio
            })
            .collect();
        for r in &ratios[1..] {
            assert!((r / ratios[0] - 1.0).abs() < 0.1, "{ratios:?}");
        }
    }

    #[test]
    fn taylor_examples() {
        let p = prior(2.0);
        let mut rng = seed(6).rng();
        let pairs: Vec<_> = (0..50).map(|_| (p.sample(8, &mut rng), p.sample(8, &mut rng))).collect();
        let full = HeatPotential::new(BasisSpec::dirichlet_1d(), 0.0, vec![1.0; 8]).unwrap();
        let lin = Potential::Linear(full.linear_part());
        let r = taylor_remainder_check(&lin, &GradientEvaluator::Analytic, &pairs, 0.0).unwrap();
        assert!(r.max_remainder <= 1e-12, "{r:?}");
        let same: Vec<_> = pairs.iter().map(|(u, _)| (u.clone(), u.clone())).collect();
        let r = taylor_remainder_check(&Potential::Heat(full), &GradientEvaluator::Analytic, &same, 0.0).unwrap();
        assert_eq!(r.max_remainder, 0.0);

        // exact Hessian: remainder / ‖v−u‖² is scale-free for a quadratic
        let q = Potential::Quadratic(QuadraticPotential::new(2.0, 0.0, vec![0.3]).unwrap());
        let (u, v) = &pairs[0];
        let ratio_at = |s: f64| {
            let w = SpectralField::new(u.basis, u.coeffs.iter().zip(&v.coeffs).map(|(a, b)| a + s * (b - a)).collect());
            taylor_remainder_check(&q, &GradientEvaluator::Analytic, &[(u.clone(), w)], 0.0)
                .unwrap()
                .max_ratio
        };
        assert!((ratio_at(0.5) / ratio_at(1.0) - 1.0).abs() < 1e-10);
        assert!((ratio_at(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn galerkin_consistency_is_monotone() {
        let p = prior(2.0);
        let pot = Potential::Quadratic(QuadraticPotential::new(1.0, 0.5, vec![1.0; 32]).unwrap());
        let problem = SpdeProblem {
            prior: &p,
            potential: &pot,
            gradient: GradientEvaluator::Analytic,
        };
        let mut cfg = SpdeConfig::new(32, 0.01, 1.0);
        cfg.n_rep = 32;
        let w = sample_noise(&p, &cfg, &mut seed(7).rng()).unwrap();
        let u0 = p.sample(32, &mut seed(8).rng());
        let rows = galerkin_consistency(&problem, &cfg, &u0, &w, &[2, 4, 8, 16, 32], 32).unwrap();
        assert!(rows.windows(2).all(|w| w[1].1 <= w[0].1), "{rows:?}");
        assert_eq!(rows.last().unwrap().1, 0.0);
    }

    #[test]
    fn prior_is_invariant_exactly() {
        let p = prior(2.0);
        let pot = Potential::zero();
        let problem = SpdeProblem {
            prior: &p,
            potential: &pot,
            gradient: GradientEvaluator::Analytic,
        };
        let mut cfg = SpdeConfig::new(2, 0.5, 10.0);
        cfg.n_rep = 3;
        let r = invariance_test(&problem, &cfg, 4000, 5, 3, seed(9)).unwrap();
        for d in &r.variance_drift {
            assert!(d.agrees_with(0.0, 3.0, 0.0), "{d:?}");
        }
        for row in r.rows.iter().filter(|r| r.functional == "first-coefficient") {
            assert!(row.estimate.agrees_with(0.0, 3.0, 0.0), "{row:?}");
        }
    }

    #[test]
    fn quadratic_bias_matches_the_scheme_law() {
        let p = GaussianPrior::new(BasisSpec::dirichlet_1d(), 2.0, 1.0).unwrap();
        let pot = Potential::Quadratic(QuadraticPotential::new(4.0, 0.0, vec![1.0]).unwrap());
        let problem = SpdeProblem {
            prior: &p,
            potential: &pot,
            gradient: GradientEvaluator::Analytic,
        };
        let modes = gaussian_posterior_modes(&pot, &p, 1, 1).unwrap();
        assert!((modes[0].0 - 0.8).abs() < 1e-15 && (modes[0].1 - 0.2).abs() < 1e-15);
        let cfg = SpdeConfig::new(1, 0.05, 5.0);
        let study = dt_bias_study(&problem, &cfg, &[0.1, 0.05], 4000, seed(10)).unwrap();
        for row in &study.rows {
            let (m, v) = scheme_stationary_law(1.0, 4.0, 1.0, row.dt);
            assert!(row.mean.agrees_with(m, 3.0, 0.0), "{row:?} vs {m}");
            assert!(row.variance.agrees_with(v, 3.0, 0.0), "{row:?} vs {v}");
            let (_, vh) = scheme_stationary_law(1.0, 4.0, 1.0, row.dt / 2.0);
            assert!(row.halving_difference.agrees_with(v - vh, 3.0, 0.0), "{row:?} vs {}", v - vh);
        }
    }

    #[test]
    fn config_validation() {
        let p = prior(1.0);
        assert!(SpdeConfig::new(2, 0.0, 1.0).validate(&p).is_err());
        assert!(SpdeConfig::new(2, 2.0, 1.0).validate(&p).is_err());
        let mut c = SpdeConfig::new(2, 0.1, 1.0);
        c.t_index = 0.5;
        assert!(c.validate(&p).is_err());
        c.t_index = 0.4;
        assert!(c.validate(&p).is_ok());
    }
}
