//! Experiment configuration files.
//!
//! A config names one experiment and carries exactly one parameter block,
//! under a table of the same name. Unknown keys anywhere are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use bayesfn::forward::{KappaTransform, Source};
use bayesfn::langevin::{GradientEvaluator, SpdeConfig};
use bayesfn::mcmc::{BetaPolicy, SamplerKind};
use bayesfn::random_fields::PriorSpec;
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "BAYESFN_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SamplePrior,
    ForwardDemo,
    PosteriorSample,
    GapScaling,
    HellingerWellposedness,
    PosteriorApproximation,
    SpdeInvariance,
    KlConvergence,
    Fernique,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::SamplePrior => "sample-prior",
            ExperimentKind::ForwardDemo => "forward-demo",
            ExperimentKind::PosteriorSample => "posterior-sample",
            ExperimentKind::GapScaling => "gap-scaling",
            ExperimentKind::HellingerWellposedness => "hellinger-wellposedness",
            ExperimentKind::PosteriorApproximation => "posterior-approximation",
            ExperimentKind::SpdeInvariance => "spde-invariance",
            ExperimentKind::KlConvergence => "kl-convergence",
            ExperimentKind::Fernique => "fernique",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_prior: Option<SamplePrior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward_demo: Option<ForwardDemo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posterior_sample: Option<PosteriorSample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_scaling: Option<GapScaling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hellinger_wellposedness: Option<HellingerWellposedness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posterior_approximation: Option<PosteriorApproximation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spde_invariance: Option<SpdeInvariance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_convergence: Option<KlConvergence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fernique: Option<Fernique>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePrior {
    pub prior: PriorSpec,
    pub n: usize,
    pub samples: usize,
    /// Also write the synthesized fields on the basis grid.
    #[serde(default)]
    pub grid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardDemo {
    pub prior: PriorSpec,
    pub n: usize,
    pub model: ForwardModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForwardModel {
    Heat,
    Elliptic {
        mesh_m: usize,
        source: Source,
        #[serde(default)]
        transform: KappaTransform,
        obs_points: Vec<f64>,
    },
}

/// Where the data vector comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    /// `y = G(u†) + η` with `u†` drawn from the prior on `modes` modes.
    Synthetic {
        modes: usize,
    },
    Given {
        y: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    Heat {
        #[serde(default)]
        noise_beta: f64,
        data: DataSpec,
    },
    Quadratic {
        lambda: f64,
        #[serde(default)]
        t: f64,
        center: Vec<f64>,
    },
    Elliptic {
        mesh_m: usize,
        source: Source,
        #[serde(default)]
        transform: KappaTransform,
        obs_points: Vec<f64>,
        noise_variance: f64,
        data: DataSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorSample {
    pub prior: PriorSpec,
    pub n: usize,
    pub potential: PotentialSpec,
    pub sampler: SamplerKind,
    pub step_beta: f64,
    pub iters: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "one")]
    pub thin: usize,
    #[serde(default)]
    pub keep_samples: bool,
    #[serde(default = "default_monitor")]
    pub monitor: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapScaling {
    pub prior: PriorSpec,
    /// Must be a heat potential; the data are padded or cut to each `N`.
    pub potential: PotentialSpec,
    pub n_list: Vec<usize>,
    pub samplers: Vec<SamplerKind>,
    pub policy: BetaPolicy,
    pub iters: usize,
    #[serde(default)]
    pub burn_in: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HellingerWellposedness {
    pub prior: PriorSpec,
    pub n: usize,
    pub potential: PotentialSpec,
    /// Data offsets `y′ − y`, one per row.
    pub perturbations: Vec<Vec<f64>>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorApproximation {
    pub prior: PriorSpec,
    pub n_ref: usize,
    pub potential: PotentialSpec,
    pub n_list: Vec<usize>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpdeInvariance {
    pub prior: PriorSpec,
    pub potential: PotentialSpec,
    pub spde: SpdeConfig,
    #[serde(default = "analytic")]
    pub gradient: GradientEvaluator,
    pub replicas: usize,
    #[serde(default = "five")]
    pub checkpoints: usize,
    #[serde(default = "two")]
    pub monitor: usize,
    /// Also dump one full trajectory.
    #[serde(default)]
    pub trajectory: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlConvergence {
    pub s: f64,
    #[serde(default)]
    pub t: f64,
    pub n_list: Vec<usize>,
    /// Truncation standing in for the infinite series.
    pub n_big: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fernique {
    pub cases: Vec<FerniqueCase>,
    pub draws: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FerniqueCase {
    pub q: f64,
    pub alpha: f64,
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

fn five() -> usize {
    5
}

fn default_monitor() -> Vec<usize> {
    vec![1, 2]
}

fn analytic() -> GradientEvaluator {
    GradientEvaluator::Analytic
}

impl ExperimentConfig {
    /// Reads a TOML config, or the `config` member of a run manifest.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: ExperimentConfig = if path.extension().is_some_and(|e| e == "json") {
            let mut v: serde_json::Value = serde_json::from_str(&text).map_err(config_error)?;
            serde_json::from_value(v["config"].take()).map_err(config_error)?
        } else {
            toml::from_str(&text).map_err(config_error)?
        };
        cfg.check_blocks()?;
        Ok(cfg)
    }

    fn check_blocks(&self) -> anyhow::Result<()> {
        let present = [
            (ExperimentKind::SamplePrior, self.sample_prior.is_some()),
            (ExperimentKind::ForwardDemo, self.forward_demo.is_some()),
            (ExperimentKind::PosteriorSample, self.posterior_sample.is_some()),
            (ExperimentKind::GapScaling, self.gap_scaling.is_some()),
            (ExperimentKind::HellingerWellposedness, self.hellinger_wellposedness.is_some()),
            (ExperimentKind::PosteriorApproximation, self.posterior_approximation.is_some()),
            (ExperimentKind::SpdeInvariance, self.spde_invariance.is_some()),
            (ExperimentKind::KlConvergence, self.kl_convergence.is_some()),
            (ExperimentKind::Fernique, self.fernique.is_some()),
        ];
        for (kind, here) in present {
            if here && kind != self.experiment {
                bail!(bayesfn::Error::Config(format!(
                    "block [{}] given but experiment is {:?}",
                    kind.name(),
                    self.experiment.name()
                )));
            }
            if !here && kind == self.experiment {
                bail!(bayesfn::Error::Config(format!("missing block [{}]", kind.name())));
            }
        }
        Ok(())
    }

    /// Explicit `output_dir`, else the environment default, else `./bayesfn-out`.
    pub fn resolve_output_dir(&mut self, env_default: Option<PathBuf>) {
        if self.output_dir.is_none() {
            self.output_dir = Some(env_default.unwrap_or_else(|| PathBuf::from("bayesfn-out")));
        }
    }
}

fn config_error(e: impl std::fmt::Display) -> anyhow::Error {
    bayesfn::Error::Config(e.to_string()).into()
}
