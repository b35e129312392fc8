use anyhow::{bail, Context};
use bayesfn::forward::{EllipticForward1D, HeatForward, ObservationSet};
use bayesfn::langevin::{integrate, invariance_test, sample_noise, SpdeProblem};
use bayesfn::mcmc::{gap_scaling_experiment, run_chain, ChainConfig, SamplerKind};
use bayesfn::posterior::{
    approximation_experiment, map_prior_samples, synthetic_heat_data, wellposedness_experiment, ForwardMap, GaussianMisfit, HeatPotential,
    PosteriorSpec, Potential, QuadraticPotential,
};
use bayesfn::random_fields::{fernique_moment, kl_tail, GaussianPrior, Prior};
use bayesfn::rng::SeedStream;
use bayesfn::sequence_space::{sobolev_weight, synthesize, BasisSpec};
use bayesfn::stats::{log_log_slope, mean_estimate};
use rand::Rng;
use serde::Serialize;

use crate::config::*;
use crate::output::{num, opt, Artifacts};

/// Stream ids under the config seed.
pub const STREAM_MAIN: u64 = 0;
pub const STREAM_DATA: u64 = 1;
pub const STREAM_TRAJECTORY: u64 = 2;

pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<Artifacts> {
    let main = SeedStream::new(cfg.seed, STREAM_MAIN);
    let data = SeedStream::new(cfg.seed, STREAM_DATA);
    let mut out = Artifacts::default();
    // check_blocks guarantees the block matching `experiment` is present
    match cfg.experiment {
        ExperimentKind::SamplePrior => sample_prior(cfg.sample_prior.as_ref().unwrap(), main, &mut out)?,
        ExperimentKind::ForwardDemo => forward_demo(cfg.forward_demo.as_ref().unwrap(), main, &mut out)?,
        ExperimentKind::PosteriorSample => posterior_sample(cfg.posterior_sample.as_ref().unwrap(), main, data, &mut out)?,
        ExperimentKind::GapScaling => gap_scaling(cfg.gap_scaling.as_ref().unwrap(), main, data, &mut out)?,
        ExperimentKind::HellingerWellposedness => wellposedness(cfg.hellinger_wellposedness.as_ref().unwrap(), main, data, &mut out)?,
        ExperimentKind::PosteriorApproximation => approximation(cfg.posterior_approximation.as_ref().unwrap(), main, data, &mut out)?,
        ExperimentKind::SpdeInvariance => spde_invariance(cfg.spde_invariance.as_ref().unwrap(), cfg.seed, main, data, &mut out)?,
        ExperimentKind::KlConvergence => kl_convergence(cfg.kl_convergence.as_ref().unwrap(), main, &mut out)?,
        ExperimentKind::Fernique => fernique(cfg.fernique.as_ref().unwrap(), main, &mut out)?,
    }
    Ok(out)
}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    bayesfn::Error::Config(msg.into()).into()
}

fn gaussian(prior: &Prior) -> anyhow::Result<&GaussianPrior> {
    prior
        .as_gaussian()
        .ok_or_else(|| config_err("this experiment needs a gaussian prior"))
}

/// Truth and data behind a potential, recorded alongside the outputs.
#[derive(Debug, Serialize)]
struct DataRecord {
    truth: Option<Vec<f64>>,
    y: Vec<f64>,
}

fn build_potential(spec: &PotentialSpec, prior: &Prior, n: usize, seed: SeedStream) -> anyhow::Result<(Potential, Option<DataRecord>)> {
    Ok(match spec {
        PotentialSpec::Zero => (Potential::zero(), None),
        PotentialSpec::Quadratic { lambda, t, center } => {
            (Potential::Quadratic(QuadraticPotential::new(*lambda, *t, center.clone())?), None)
        }
        PotentialSpec::Heat { noise_beta, data } => {
            let (truth, y) = match data {
                DataSpec::Given { y } => (None, y.clone()),
                DataSpec::Synthetic { modes } => {
                    let (u, y) = synthetic_heat_data(prior, *noise_beta, *modes, seed)?;
                    (Some(u.coeffs), y)
                }
            };
            let pot = HeatPotential::new(prior.basis(), *noise_beta, y.clone())?;
            (Potential::Heat(pot), Some(DataRecord { truth, y }))
        }
        PotentialSpec::Elliptic {
            mesh_m,
            source,
            transform,
            obs_points,
            noise_variance,
            data,
        } => {
            let fwd = EllipticForward1D::new(*mesh_m, source, obs_points.clone(), *transform)?.with_basis_table(&prior.basis(), n)?;
            let (truth, y) = match data {
                DataSpec::Given { y } => (None, y.clone()),
                DataSpec::Synthetic { modes } => {
                    if *modes > n {
                        return Err(config_err(format!("synthetic truth on {modes} modes exceeds n = {n}")));
                    }
                    let mut rng = seed.rng();
                    let u = prior.sample(*modes, &mut rng);
                    let g = fwd.observe(&u)?;
                    let sd = noise_variance.sqrt();
                    let y = g
                        .iter()
                        .map(|v| v + sd * rng.sample::<f64, _>(rand_distr::StandardNormal))
                        .collect();
                    (Some(u.coeffs), y)
                }
            };
            let obs = ObservationSet::isotropic(y.clone(), *noise_variance)?;
            let pot = Potential::Misfit(GaussianMisfit {
                forward: ForwardMap::Elliptic(fwd),
                obs,
            });
            (pot, Some(DataRecord { truth, y }))
        }
    })
}

fn record_data(out: &mut Artifacts, data: Option<DataRecord>) -> anyhow::Result<()> {
    if let Some(d) = data {
        out.json("data.json", "data vector and, for synthetic data, the truth's coefficients", &d)?;
    }
    Ok(())
}

fn coeff_header(n: usize) -> Vec<String> {
    (1..=n).map(|j| format!("u_{j}")).collect()
}

fn sample_prior(p: &SamplePrior, main: SeedStream, out: &mut Artifacts) -> anyhow::Result<()> {
    let prior = p.prior.build()?;
    let samples = map_prior_samples(&prior, p.n, p.samples, main, |u| Ok(u.clone()))?;
    let header = coeff_header(p.n);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = samples.iter().map(|u| u.coeffs.clone()).collect();
    out.csv(
        "samples.csv",
        "prior draws, one row of coefficients per sample",
        &header,
        rows.iter().map(|r| r.iter().map(|x| num(*x)).collect()),
    )?;
    out.binary("samples.bin", "prior draws (binary)", p.n, &rows, None);
    if p.grid {
        let grid = prior.basis().default_grid();
        let values: Vec<Vec<f64>> = samples.iter().map(|u| synthesize(u, &grid)).collect::<Result<_, _>>()?;
        let mut header = vec!["x".to_string()];
        header.extend((1..=samples.len()).map(|k| format!("sample_{k}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        out.csv(
            "grid.csv",
            "synthesized fields u(x) on the basis grid, one column per sample",
            &header,
            grid.iter().enumerate().map(|(i, x)| {
                let mut row = vec![num(*x)];
                row.extend(values.iter().map(|v| num(v[i])));
                row
            }),
        )?;
    }
    Ok(())
}

fn forward_demo(p: &ForwardDemo, main: SeedStream, out: &mut Artifacts) -> anyhow::Result<()> {
    let prior = p.prior.build()?;
    let u = prior.sample(p.n, &mut main.rng());
    out.json("field.json", "the input field drawn from the prior", &u)?;
    match &p.model {
        ForwardModel::Heat => {
            let g = HeatForward::new(prior.basis()).apply(&u)?;
            out.csv(
                "forward.csv",
                "input coefficients and their image under the heat semigroup",
                &["j", "u_j", "g_j"],
                (1..=p.n).map(|j| vec![j.to_string(), num(u.coeff(j)), num(g.coeff(j))]),
            )?;
        }
        ForwardModel::Elliptic {
            mesh_m,
            source,
            transform,
            obs_points,
        } => {
            let fwd = EllipticForward1D::new(*mesh_m, source, obs_points.clone(), *transform)?.with_basis_table(&prior.basis(), p.n)?;
            let pr = fwd.pressure(&u)?;
            out.csv(
                "pressure.csv",
                "nodal pressure p(x) at the interior mesh nodes",
                &["x", "p"],
                fwd.nodes().iter().zip(&pr).map(|(x, v)| vec![num(*x), num(*v)]),
            )?;
            out.json("observations.json", "point observations of p", &fwd.observe_nodal(&pr))?;
        }
    }
    Ok(())
}

fn posterior_sample(p: &PosteriorSample, main: SeedStream, data: SeedStream, out: &mut Artifacts) -> anyhow::Result<()> {
    let prior = p.prior.build()?;
    let (pot, rec) = build_potential(&p.potential, &prior, p.n, data)?;
    let post = PosteriorSpec::new(prior, pot, p.n)?;
    let cfg = ChainConfig {
        sampler: p.sampler,
        step_beta: p.step_beta,
        iters: p.iters,
        burn_in: p.burn_in,
        thin: p.thin,
        seed: main,
        keep_samples: p.keep_samples,
        monitor: p.monitor.clone(),
    };
    let chain = run_chain(&post, &cfg, None)?;
    let mut header: Vec<String> = vec!["k".into()];
    header.extend(p.monitor.iter().map(|j| format!("u_{j}")));
    header.push("phi".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(
        "traces.csv",
        "retained states: monitored coordinates and the potential",
        &header,
        (0..chain.potential_trace.len()).map(|k| {
            let mut row = vec![k.to_string()];
            row.extend(chain.traces.iter().map(|t| num(t[k])));
            row.push(num(chain.potential_trace[k]));
            row
        }),
    )?;
    out.json(
        "diagnostics.json",
        "acceptance rate, forward failures, IACT, ESS, ergodic means",
        &chain.diagnostics,
    )?;
    if let Some(s) = &chain.samples {
        out.binary("samples.bin", "every retained state (binary)", p.n, s, None);
    }
    record_data(out, rec)
}

fn pad(y: &[f64], n: usize) -> Vec<f64> {
    let mut v = y.to_vec();
    v.resize(n, 0.0);
    v
}

fn gap_scaling(p: &GapScaling, main: SeedStream, data: SeedStream, out: &mut Artifacts) -> anyhow::Result<()> {
    let prior = p.prior.build()?;
    let n_max = p.n_list.iter().copied().max().unwrap_or(0);
    let (base, rec) = build_potential(&p.potential, &prior, n_max, data)?;
    let heat = base
        .as_heat()
        .ok_or_else(|| config_err("gap-scaling needs a heat potential"))?
        .clone();
    let family = |n: usize| {
        let pot = heat.with_data(pad(heat.data(), n))?;
        PosteriorSpec::new(prior.clone(), Potential::Heat(pot), n)
    };
    let mut cfg = ChainConfig::new(SamplerKind::Pcn, p.policy.beta(1).min(1.0), p.iters, main);
    cfg.burn_in = p.burn_in;
    let rows = gap_scaling_experiment(family, &p.n_list, &p.samplers, p.policy, &cfg)?;
    out.csv(
        "gap.csv",
        "acceptance rate and IACT of the first coefficient per N and sampler",
        &["n", "sampler", "beta", "acceptance_rate", "iact", "ess_per_1000"],
        rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.sampler.to_string(),
                num(r.beta),
                num(r.acceptance_rate),
                opt(r.iact),
                opt(r.ess_per_1000),
            ]
        }),
    )?;
    record_data(out, rec)
}

fn wellposedness(p: &HellingerWellposedness, main: SeedStream, data: SeedStream, out: &mut Artifacts) -> anyhow::Result<()> {
    let prior = p.prior.build()?;
    let (pot, rec) = build_potential(&p.potential, &prior, p.n, data)?;
    let post = PosteriorSpec::new(prior, pot, p.n)?;
    let t = wellposedness_experiment(&post, &p.perturbations, p.samples, main)?;
    out.csv(
        "wellposedness.csv",
        "Hellinger distance per data perturbation, with the closed-form value when known",
        &["size", "value", "mc_error", "oracle"],
        t.rows
            .iter()
            .map(|r| vec![num(r.size), num(r.hellinger.value), num(r.hellinger.mc_error), opt(r.oracle)]),
    )?;
    out.json(
        "summary.json",
        "fitted slope and spread of d/ε",
        &serde_json::json!({ "slope": t.slope, "ratio_spread": t.ratio_spread, "max_ratio": t.max_ratio }),
    )?;
    record_data(out, rec)
}

fn approximation(p: &PosteriorApproximation, main: SeedStream, data: SeedStream, out: &mut Artifacts) -> anyhow::Result<()> {
    let prior = p.prior.build()?;
    let (pot, rec) = build_potential(&p.potential, &prior, p.n_ref, data)?;
    let post = PosteriorSpec::new(prior, pot, p.n_ref)?;
    let t = approximation_experiment(&post, &p.n_list, p.samples, main)?;
    out.csv(
        "approximation.csv",
        "Hellinger distance between the reference posterior and its N-truncation",
        &["n", "value", "mc_error", "exact", "exact_log"],
        t.rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                num(r.hellinger.value),
                num(r.hellinger.mc_error),
                opt(r.exact.map(|e| e.value)),
                opt(r.exact.map(|e| e.log_value)),
            ]
        }),
    )?;
    out.json(
        "summary.json",
        "fitted slope of log d_Hell against log N",
        &serde_json::json!({ "slope": t.slope }),
    )?;
    record_data(out, rec)
}

fn spde_invariance(p: &SpdeInvariance, seed: u64, main: SeedStream, data: SeedStream, out: &mut Artifacts) -> anyhow::Result<()> {
    let prior = p.prior.build()?;
    let g = gaussian(&prior)?;
    let (pot, rec) = build_potential(&p.potential, &prior, p.spde.n, data)?;
    let problem = SpdeProblem {
        prior: g,
        potential: &pot,
        gradient: p.gradient,
    };
    let report = invariance_test(&problem, &p.spde, p.replicas, p.checkpoints, p.monitor, main)?;
    out.csv(
        "invariance.csv",
        "ensemble means of the tracked functionals at each checkpoint",
        &["functional", "t", "estimate", "mc_error"],
        report
            .rows
            .iter()
            .map(|r| vec![r.functional.clone(), num(r.t), num(r.estimate.value), num(r.estimate.mc_error)]),
    )?;
    out.json(
        "summary.json",
        "per monitored mode: final mean, final variance and variance drift",
        &serde_json::json!({
            "final_mean": report.final_mean,
            "final_variance": report.final_variance,
            "variance_drift": report.variance_drift,
        }),
    )?;
    if p.trajectory {
        let ts = SeedStream::new(seed, STREAM_TRAJECTORY);
        let u0 = g.sample(p.spde.n_rep, &mut ts.fork(0).rng());
        let w = sample_noise(g, &p.spde, &mut ts.fork(1).rng())?;
        let traj = integrate(&problem, &p.spde, &u0, &w).context("integrating the dumped trajectory")?;
        let rows: Vec<Vec<f64>> = traj.states.iter().map(|s| s.coeffs.clone()).collect();
        out.binary(
            "trajectory.bin",
            "one trajectory from a prior draw (binary, with times)",
            p.spde.n_rep,
            &rows,
            Some(&traj.times),
        );
    }
    record_data(out, rec)
}

fn kl_convergence(p: &KlConvergence, main: SeedStream, out: &mut Artifacts) -> anyhow::Result<()> {
    if p.n_list.is_empty() || p.n_list.windows(2).any(|w| w[0] >= w[1]) || *p.n_list.last().unwrap() >= p.n_big {
        bail!(config_err("n_list must be increasing and below n_big"));
    }
    let prior = GaussianPrior::new(BasisSpec::dirichlet_1d(), p.s, 1.0)?;
    let ns = &p.n_list;
    let t = p.t;
    let tails = map_prior_samples(&Prior::Gaussian(prior), p.n_big, p.samples, main, |u| {
        let mut acc = 0.0;
        let mut res = vec![0.0; ns.len()];
        let mut next = ns.len();
        for j in (1..=u.len()).rev() {
            while next > 0 && j == ns[next - 1] {
                res[next - 1] = acc;
                next -= 1;
            }
            acc += sobolev_weight(j, t, 1) * u.coeff(j).powi(2);
        }
        Ok(res)
    })?;
    let mut rows = Vec::new();
    let mut est = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let e = mean_estimate(&tails.iter().map(|r| r[i]).collect::<Vec<_>>());
        let exact = kl_tail(p.s, t, 1, n)?;
        est.push(e.value);
        rows.push(vec![n.to_string(), "monte-carlo".into(), num(e.value), num(e.mc_error)]);
        rows.push(vec![n.to_string(), "kl-tail".into(), num(exact), num(0.0)]);
    }
    out.csv(
        "kl.csv",
        "E‖u − u^N‖²_{H^t}: Monte-Carlo estimate (series cut at n_big) and exact tail sum",
        &["N", "statistic", "value", "mc_error"],
        rows,
    )?;
    let slope = log_log_slope(&ns.iter().map(|n| *n as f64).collect::<Vec<_>>(), &est);
    let predicted = 1.0 - 2.0 * (p.s - t);
    out.json(
        "summary.json",
        "fitted and predicted log-log slope",
        &serde_json::json!({ "slope": slope, "predicted": predicted }),
    )
}

fn fernique(p: &Fernique, main: SeedStream, out: &mut Artifacts) -> anyhow::Result<()> {
    let mut rows = Vec::new();
    for (k, c) in p.cases.iter().enumerate() {
        let e = fernique_moment(c.q, c.alpha, p.draws, &mut main.fork(k as u64).rng())?;
        let exact = (1.0 - 2.0 * c.alpha).powf(-1.0 / c.q);
        rows.push(vec![num(c.q), num(c.alpha), num(e.value), num(e.mc_error), num(exact)]);
    }
    out.csv(
        "fernique.csv",
        "E exp(α|ξ|^q) for generalized-Gaussian ξ against (1 − 2α)^(−1/q)",
        &["q", "alpha", "value", "mc_error", "exact"],
        rows,
    )
}
