//! Random-weight particle filtering for partially observed scalar diffusions.
//!
//! The latent process solves `dX = α(X) dt + dB`. Its transition density factors
//! into a Gaussian kernel tilted by `exp{A(x_b) - A(x_a)}` and the Brownian-bridge
//! expectation of `ψ(W) = exp{-∫ φ(W_t) dt}` with `φ = (α² + α')/2`. The filter
//! replaces that expectation by an unbiased Poisson-product estimate, optionally
//! averaging the inner expectation over a randomized low-discrepancy point set.
//!
//! Module map:
//! - [`lowdisc`]: Sobol-type base-2 digital sequences and their randomizations.
//! - [`models`]: drift models with `α`, `α'`, `A` and global bounds on `φ`.
//! - [`bridge`]: lazily refined Brownian-bridge skeletons.
//! - [`psi`]: Monte Carlo and RQMC estimators of `ψ(W)`.
//! - [`proposal`]: particle propagation (Gaussian or tilted kernel).
//! - [`smc`]: the particle filter itself.
//! - [`oracles`]: brute-force and deterministic reference computations.
//! - [`cli`]: configuration, data generation and experiment drivers.

pub mod bridge;
pub mod cli;
pub mod error;
pub mod lowdisc;
pub mod models;
pub mod normal;
pub mod oracles;
pub mod proposal;
pub mod psi;
pub mod rng;
pub mod smc;

pub use error::{Error, Result};
