//! Bayesian inverse problems on function space.
//!
//! Unknown functions live as coefficient sequences in an eigenbasis
//! ([`sequence_space`]). Priors are random series ([`random_fields`]), data
//! come from a forward map ([`forward`]), and the posterior is the prior
//! reweighted by `exp(−Φ)` ([`posterior`]). Posteriors are sampled with
//! dimension-robust Metropolis chains ([`mcmc`]) or preconditioned Langevin
//! dynamics ([`langevin`]). [`verify`] bundles the numerical checks that tie
//! these pieces to their closed-form oracles.
//!
//! ```
//! use bayesfn::posterior::{estimate_z, HeatPotential, PosteriorSpec, Potential};
//! use bayesfn::random_fields::{GaussianPrior, Prior};
//! use bayesfn::rng::SeedStream;
//! use bayesfn::sequence_space::BasisSpec;
//!
//! let basis = BasisSpec::dirichlet_1d();
//! let prior = Prior::Gaussian(GaussianPrior::new(basis, 2.0, 1.0)?);
//! let phi = Potential::Heat(HeatPotential::new(basis, 0.0, vec![0.5, -0.2])?);
//! let post = PosteriorSpec::new(prior, phi, 16)?;
//! let z = estimate_z(&post, 10_000, SeedStream::new(1, 0))?;
//! assert!(z.value > 0.0);
//! # Ok::<(), bayesfn::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod forward;
pub mod langevin;
pub mod mcmc;
pub mod posterior;
pub mod quadrature;
pub mod random_fields;
pub mod rng;
pub mod sequence_space;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};

/// The guide's chapters, compiled so their snippets run as doctests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/fields.md")]
    pub mod fields {}
    #[doc = include_str!("../../../book/src/priors.md")]
    pub mod priors {}
    #[doc = include_str!("../../../book/src/forward.md")]
    pub mod forward {}
    #[doc = include_str!("../../../book/src/posteriors.md")]
    pub mod posteriors {}
    #[doc = include_str!("../../../book/src/mcmc.md")]
    pub mod mcmc {}
    #[doc = include_str!("../../../book/src/langevin.md")]
    pub mod langevin {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
    #[doc = include_str!("../../../book/src/verification.md")]
    pub mod verification {}
}
