//! Bayesian inversion for the log-permeability of a periodic Darcy flow model.
//!
//! The crate is organised bottom-up:
//!
//! * [`field`]: periodic grid fields on `[0, 2π)^d`, discrete Fourier transforms,
//!   norms and the binary field file format.
//! * [`prior`]: the Gaussian prior `N(0, (-Δ)^{-s})` on mean-zero fields, sampled
//!   through its Fourier (Karhunen-Loève) expansion, and the truncation projector.
//! * [`elliptic`]: the conservative finite-difference discretisation of
//!   `-∇·(e^u ∇p) = f + ∇·g` and its preconditioned conjugate gradient solver.
//! * [`observation`]: linear observation functionals, Gaussian noise, the misfit
//!   potential and synthetic data.
//! * [`posterior`]: pCN MCMC, self-normalised importance sampling, posterior
//!   pressure moments, weak-error studies and Hellinger distance estimates.
//! * [`truncation`]: Dirichlet kernel identities and Fourier truncation rates.

pub mod elliptic;
pub mod error;
pub mod field;
pub mod observation;
pub mod posterior;
pub mod prior;
pub mod quadrature;
pub mod rng;
pub mod truncation;

pub use error::{CoreError, Result};
pub use field::{Dft, Field, GridSpec, SpectralField};
pub use prior::{KLSample, PriorSpec};
