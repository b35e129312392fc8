use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_chain, Chain, ChainConfig, SamplerKind};
use crate::error::{Error, Result};
use crate::posterior::{quadrature_moments, Functional, HeatConjugate, PosteriorSpec, QuadratureOracle};
use crate::rng::SeedStream;
use crate::stats::{linear_fit, median};

/// How the proposal size depends on the truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum BetaPolicy {
    Fixed {
        beta: f64,
    },
    /// `β = N^{−a}`
    Power {
        a: f64,
    },
}

impl BetaPolicy {
    pub fn beta(&self, n: usize) -> f64 {
        match *self {
            BetaPolicy::Fixed { beta } => beta,
            BetaPolicy::Power { a } => (n as f64).powf(-a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub n: usize,
    pub sampler: SamplerKind,
    pub beta: f64,
    pub acceptance_rate: f64,
    /// IACT of `⟨u, φ_1⟩`; `None` if the trace never moved.
    pub iact: Option<f64>,
    pub ess_per_1000: Option<f64>,
}

/// Acceptance rate and IACT of `⟨u, φ_1⟩` for each `N` and sampler. Cells run
/// in parallel on forks of `cfg.seed`; `cfg.sampler` and `cfg.step_beta` are
/// overridden per cell.
pub fn gap_scaling_experiment<F>(
    family: F,
    n_list: &[usize],
    samplers: &[SamplerKind],
    policy: BetaPolicy,
    cfg: &ChainConfig,
) -> Result<Vec<GapRow>>
where
    F: Fn(usize) -> Result<PosteriorSpec> + Sync,
{
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("N list must be increasing"));
    }
    let cells: Vec<(usize, usize, SamplerKind)> = n_list
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| samplers.iter().map(move |&s| (i, n, s)))
        .collect();
    cells
        .par_iter()
        .enumerate()
        .map(|(c, &(_, n, sampler))| {
            let post = family(n)?;
            let beta = policy.beta(n);
            let mut cell = cfg.clone();
            cell.sampler = sampler;
            cell.step_beta = beta;
            cell.monitor = vec![1];
            cell.keep_samples = false;
            cell.seed = cfg.seed.fork(c as u64);
            let out = run_chain(&post, &cell, None)?;
            let d = &out.diagnostics;
            Ok(GapRow {
                n,
                sampler,
                beta,
                acceptance_rate: d.acceptance_rate,
                iact: d.iact[0],
                ess_per_1000: d.ess[0].map(|e| 1000.0 * e / d.retained as f64),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IDivergenceRow {
    pub n: usize,
    /// Median over draws of `I(P^N u) = Φ(P^N u) + ½‖C^{−1/2}P^N u‖²`.
    pub median_i: f64,
    pub median_phi: f64,
}

/// Medians of `I(P^N u)` and `Φ(P^N u)` over `draws` prior samples taken at
/// the largest `N` and truncated.
pub fn i_divergence_check(post: &PosteriorSpec, n_list: &[usize], draws: usize, seed: SeedStream) -> Result<Vec<IDivergenceRow>> {
    let g = post
        .prior
        .as_gaussian()
        .ok_or_else(|| Error::config("I is only defined for a Gaussian prior"))?;
    let n_max = *n_list.iter().max().ok_or_else(|| Error::config("empty N list"))?;
    let samples: Vec<_> = (0..draws)
        .map(|k| post.prior.sample(n_max, &mut seed.fork(k as u64).rng()))
        .collect();
    n_list
        .iter()
        .map(|&n| {
            let pairs: Vec<(f64, f64)> = samples
                .par_iter()
                .map(|u| {
                    let mut low = u.clone();
                    low.coeffs.truncate(n);
                    let phi = post.potential.value(&low)?;
                    Ok((phi + 0.5 * g.cameron_martin_sq(&low.coeffs), phi))
                })
                .collect::<Result<_>>()?;
            Ok(IDivergenceRow {
                n,
                median_i: median(&pairs.iter().map(|p| p.0).collect::<Vec<_>>()),
                median_phi: median(&pairs.iter().map(|p| p.1).collect::<Vec<_>>()),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CltRow {
    pub k: usize,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltTable {
    pub rows: Vec<CltRow>,
    pub target: f64,
    /// Slope of `log MSE` against `log K`.
    pub slope: f64,
}

/// Mean squared error of the ergodic mean of `f(u)` after `K` post-burn-in
/// steps, over `replicas` independent chains started from the prior. The
/// reference mean comes from the closed-form heat posterior or quadrature.
pub fn clt_check(post: &PosteriorSpec, cfg: &ChainConfig, k_list: &[usize], replicas: usize, f: Functional) -> Result<CltTable> {
    if k_list.is_empty() || k_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("K list must be increasing"));
    }
    let k_max = *k_list.last().unwrap();
    let target = reference_mean(post, f)?;
    let sums: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut chain = Chain::new(post, cfg.sampler, cfg.step_beta, cfg.seed.fork(r as u64), None)?;
            for _ in 0..cfg.burn_in {
                chain.step()?;
            }
            let mut out = Vec::with_capacity(k_list.len());
            let mut acc = 0.0;
            let mut next = 0;
            for k in 1..=k_max {
                chain.step()?;
                acc += f.eval(chain.state());
                if k == k_list[next] {
                    out.push(acc / k as f64);
                    next += 1;
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<CltRow> = k_list
        .iter()
        .enumerate()
        .map(|(i, &k)| CltRow {
            k,
            mse: sums.iter().map(|s| (s[i] - target).powi(2)).sum::<f64>() / replicas as f64,
        })
        .collect();
    let slope = if rows.iter().all(|r| r.mse > 0.0) && rows.len() >= 2 {
        let lx: Vec<f64> = rows.iter().map(|r| (r.k as f64).ln()).collect();
        let ly: Vec<f64> = rows.iter().map(|r| r.mse.ln()).collect();
        linear_fit(&lx, &ly).0
    } else {
        f64::NAN
    };
    Ok(CltTable { rows, target, slope })
}

fn reference_mean(post: &PosteriorSpec, f: Functional) -> Result<f64> {
    match f {
        Functional::Constant => Ok(f.eval(&post.prior.mean_field(post.n))),
        Functional::FirstCoefficient | Functional::NormSquared => {
            let (mean, var): (Vec<f64>, Vec<f64>) = if let Some(h) = HeatConjugate::from_posterior(post) {
                (1..=post.n).map(|j| (h.mean(j), h.variance(j))).unzip()
            } else if post.n <= 3 {
                let q = quadrature_moments(post, &QuadratureOracle::new(post.n))?;
                (0..post.n).map(|j| (q.mean[j], q.cov[(j, j)])).unzip()
            } else {
                return Err(Error::config("no reference mean: need a heat posterior or at most 3 modes"));
            };
            Ok(match f {
                Functional::FirstCoefficient => mean[0],
                _ => mean.iter().zip(&var).map(|(m, v)| m * m + v).sum(),
            })
        }
        Functional::ClippedExpNorm => Err(Error::config("no reference mean for the clipped exponential functional")),
    }
}
