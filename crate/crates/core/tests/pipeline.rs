//! End-to-end paths through several modules.

use bayesfn::langevin::{integrate, sample_noise, GradientEvaluator, SpdeConfig, SpdeProblem};
use bayesfn::mcmc::{chain_mean, run_chain, ChainConfig, SamplerKind};
use bayesfn::posterior::{
    importance_moments, quadrature_moments, HeatConjugate, HeatPotential, PosteriorSpec, Potential, QuadratureOracle,
};
use bayesfn::random_fields::{GaussianPrior, Prior};
use bayesfn::rng::SeedStream;
use bayesfn::sequence_space::BasisSpec;
use bayesfn::verify::{informative_heat_data, model_heat_data, run_criterion, Suite, VerifyOptions};

fn prior() -> GaussianPrior {
    GaussianPrior::new(BasisSpec::dirichlet_1d(), 2.0, 1.0).unwrap()
}

fn post(y: Vec<f64>, n: usize) -> PosteriorSpec {
    let pot = Potential::Heat(HeatPotential::new(BasisSpec::dirichlet_1d(), 0.0, y).unwrap());
    PosteriorSpec::new(Prior::Gaussian(prior()), pot, n).unwrap()
}

#[test]
fn three_oracles_agree_on_a_heat_posterior() {
    let p = post(informative_heat_data(2), 2);
    let exact = HeatConjugate::from_posterior(&p).unwrap();
    let quad = quadrature_moments(&p, &QuadratureOracle::new(2)).unwrap();
    let (means, vars) = importance_moments(&p, 2, 200_000, SeedStream::new(5, 0)).unwrap();
    for j in 1..=2 {
        approx::assert_relative_eq!(quad.mean[j - 1], exact.mean(j), max_relative = 1e-8);
        approx::assert_relative_eq!(quad.cov[(j - 1, j - 1)], exact.variance(j), max_relative = 1e-8);
        assert!(
            means[j - 1].agrees_with(exact.mean(j), 3.0, 0.0),
            "{:?} vs {}",
            means[j - 1],
            exact.mean(j)
        );
        assert!(vars[j - 1].agrees_with(exact.variance(j), 3.0, 0.0));
    }
}

#[test]
fn pcn_recovers_the_conjugate_mean_from_model_data() {
    let y = model_heat_data(&prior(), 8, SeedStream::new(7, 0));
    let p = post(y, 8);
    let exact = HeatConjugate::from_posterior(&p).unwrap();
    let mut cfg = ChainConfig::new(SamplerKind::Pcn, 0.6, 40_000, SeedStream::new(7, 1));
    cfg.burn_in = 1000;
    let out = run_chain(&p, &cfg, None).unwrap();
    let m = chain_mean(&out.traces[0]).unwrap();
    assert!(m.agrees_with(exact.mean(1), 3.0, 0.0), "{m:?} vs {}", exact.mean(1));
    assert!(out.diagnostics.forward_failures == 0);
}

#[test]
fn langevin_replay_is_bit_identical() {
    let pr = prior();
    let pot = Potential::Heat(HeatPotential::new(BasisSpec::dirichlet_1d(), 0.0, vec![0.3, -0.1, 0.2]).unwrap());
    let problem = SpdeProblem {
        prior: &pr,
        potential: &pot,
        gradient: GradientEvaluator::Analytic,
    };
    let cfg = SpdeConfig::new(3, 0.02, 1.0);
    let w = sample_noise(&pr, &cfg, &mut SeedStream::new(9, 0).rng()).unwrap();
    let u0 = pr.sample(3, &mut SeedStream::new(9, 1).rng());
    let a = integrate(&problem, &cfg, &u0, &w).unwrap();
    let b = integrate(&problem, &cfg, &u0, &w).unwrap();
    assert_eq!(a.times, b.times);
    assert_eq!(a.states, b.states);
    assert_eq!(a.states.len(), a.times.len());
}

#[test]
fn suites_cover_every_criterion_once() {
    let mut ids: Vec<u32> = Suite::ALL.iter().flat_map(|s| s.criteria().iter().copied()).collect();
    ids.sort();
    assert_eq!(ids, (1..=12).collect::<Vec<_>>());
    assert_eq!("spde".parse::<Suite>().unwrap(), Suite::Spde);
    assert!("nonsense".parse::<Suite>().is_err());
    assert!(run_criterion(13, &VerifyOptions::default()).is_err());
}

#[test]
fn short_chains_fail_the_sampler_checks_with_detail() {
    let report = run_criterion(9, &VerifyOptions { iters: Some(50) }).unwrap();
    assert!(!report.passed);
    assert!(report.measured.contains("IACT"), "{}", report.measured);
}
