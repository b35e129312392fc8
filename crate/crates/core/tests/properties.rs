use bayesfn::forward::{dual_norm, elliptic_solve, lipschitz_ratio, v_norm, HeatForward};
use bayesfn::mcmc::{ess, iact, pcn_log_transition, Chain, SamplerKind};
use bayesfn::posterior::{hellinger_from_potentials, HeatPotential, PosteriorSpec, Potential};
use bayesfn::random_fields::{GammaLaw, GaussianPrior, Prior, UniformPrior};
use bayesfn::rng::SeedStream;
use bayesfn::sequence_space::{synthesize, BasisFamily, BasisSpec, Offset, SpectralField};
use proptest::prelude::*;
use rand::Rng;

fn sine() -> BasisSpec {
    BasisSpec::dirichlet_1d()
}

fn heat_post(y: Vec<f64>, n: usize) -> PosteriorSpec {
    let prior = Prior::Gaussian(GaussianPrior::new(sine(), 2.0, 1.0).unwrap());
    let pot = Potential::Heat(HeatPotential::new(sine(), 0.0, y).unwrap());
    PosteriorSpec::new(prior, pot, n).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn same_seed_same_draws(seed in any::<u64>(), stream in 0u64..1000, n in 1usize..64) {
        let prior = GaussianPrior::new(sine(), 1.5, 1.0).unwrap();
        let a = prior.sample(n, &mut SeedStream::new(seed, stream).rng());
        let b = prior.sample(n, &mut SeedStream::new(seed, stream).rng());
        prop_assert_eq!(a.coeffs, b.coeffs);
    }

    #[test]
    fn uniform_samples_respect_the_almost_sure_bound(seed in any::<u64>(), delta in 0.1f64..2.0, p in 1.5f64..4.0) {
        let prior = UniformPrior::new(BasisFamily::DirichletSine, Offset::Constant(1.0), delta, GammaLaw::PSeries { exponent: p }).unwrap();
        let (lo, hi) = prior.bounds();
        let u = prior.sample(32, &mut SeedStream::new(seed, 0).rng());
        let tail = prior.tail(32);
        for v in synthesize(&u, &prior.basis().default_grid()).unwrap() {
            prop_assert!(v >= lo - tail - 1e-12 && v <= hi + tail + 1e-12);
        }
    }

    #[test]
    fn heat_forward_contracts(coeffs in proptest::collection::vec(-100f64..100.0, 1..20)) {
        let u = SpectralField::new(sine(), coeffs);
        let v = HeatForward::new(sine()).apply(&u).unwrap();
        let first = (-std::f64::consts::PI.powi(2)).exp();
        prop_assert!(v.sobolev_norm(0.0) <= first * u.sobolev_norm(0.0) * (1.0 + 1e-12));
    }

    #[test]
    fn elliptic_energy_bound(kappa in proptest::collection::vec(0.5f64..3.0, 16), f in proptest::collection::vec(-5f64..5.0, 15)) {
        let p = elliptic_solve(&kappa, &f).unwrap();
        let kmin = kappa.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(v_norm(&p) <= dual_norm(&f).unwrap() / kmin * (1.0 + 1e-10));
    }

    #[test]
    fn lipschitz_ratio_is_symmetric(k1 in proptest::collection::vec(0.5f64..3.0, 16), k2 in proptest::collection::vec(0.5f64..3.0, 16)) {
        let f = vec![1.0; 15];
        let a = lipschitz_ratio(&k1, &k2, &f).unwrap();
        let b = lipschitz_ratio(&k2, &k1, &f).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
    }

    #[test]
    fn hellinger_axioms(phi1 in proptest::collection::vec(-5f64..5.0, 10..200), shift in -50f64..50.0) {
        let phi2: Vec<f64> = phi1.iter().rev().cloned().collect();
        let d12 = hellinger_from_potentials(&phi1, &phi2).unwrap();
        let d21 = hellinger_from_potentials(&phi2, &phi1).unwrap();
        prop_assert_eq!(d12.to_bits(), d21.to_bits());
        prop_assert!((0.0..=1.0).contains(&d12));
        prop_assert_eq!(hellinger_from_potentials(&phi1, &phi1).unwrap(), 0.0);
        // φ + c is only constant-shifted up to rounding of each sum
        let shifted: Vec<f64> = phi1.iter().map(|p| p + shift).collect();
        prop_assert!(hellinger_from_potentials(&phi1, &shifted).unwrap() <= 1e-12);
    }

    #[test]
    fn iact_floor_and_ess_cap(rho in -0.9f64..0.95, seed in any::<u64>()) {
        let mut rng = SeedStream::new(seed, 1).rng();
        let mut x = 0.0;
        let series: Vec<f64> = (0..2000)
            .map(|_| {
                x = rho * x + rng.sample::<f64, _>(rand_distr::StandardNormal);
                x
            })
            .collect();
        let tau = iact(&series).unwrap();
        prop_assert!(tau >= 0.5);
        prop_assert!(ess(series.len(), tau) <= series.len() as f64);
    }

    #[test]
    fn pcn_detailed_balance(seed in any::<u64>(), beta in 0.05f64..1.0) {
        let prior = Prior::Gaussian(GaussianPrior::new(sine(), 2.0, 1.0).unwrap());
        let post = heat_post(vec![1.0e4, -3.0e17], 2);
        let mut rng = SeedStream::new(seed, 2).rng();
        let u = prior.sample(2, &mut rng);
        let v = prior.sample(2, &mut rng);
        let phi = |w: &SpectralField| post.potential_at(w).unwrap();
        let g = prior.as_gaussian().unwrap();
        let log_pi = |w: &SpectralField| -phi(w) - 0.5 * g.cameron_martin_sq(&w.coeffs);
        let fwd = log_pi(&u) + pcn_log_transition(&prior, beta, &u.coeffs, &v.coeffs) + (phi(&u) - phi(&v)).min(0.0);
        let bwd = log_pi(&v) + pcn_log_transition(&prior, beta, &v.coeffs, &u.coeffs) + (phi(&v) - phi(&u)).min(0.0);
        prop_assert!(((fwd - bwd).exp() - 1.0).abs() <= 1e-10, "{} vs {}", fwd, bwd);
    }

    #[test]
    fn shifted_potential_makes_identical_decisions(seed in any::<u64>(), shift in -1e3f64..1e3) {
        let post = heat_post(vec![2.0e4, 1.0e17], 4);
        let shifted = post.with_potential(post.potential.clone().shifted(shift));
        let mut a = Chain::new(&post, SamplerKind::Pcn, 0.3, SeedStream::new(seed, 3), None).unwrap();
        let mut b = Chain::new(&shifted, SamplerKind::Pcn, 0.3, SeedStream::new(seed, 3), None).unwrap();
        for _ in 0..50 {
            prop_assert_eq!(a.step().unwrap().accepted, b.step().unwrap().accepted);
        }
        prop_assert_eq!(&a.state().coeffs, &b.state().coeffs);
    }
}
