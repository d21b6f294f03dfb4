//! Simulation and verification toolkit for principal-eigenstate estimation
//! with symmetric joint measurements.
//!
//! The crate is organized bottom-up:
//! - [`linalg`]: dense complex tensor algebra (Kronecker products, permutation
//!   operators, symmetric-subspace projectors, partial traces, Haar sampling);
//! - [`states`]: planted problem instances `rho = (1-eta) phi + eta sigma` and
//!   random observables;
//! - [`typedist`]: type-vector combinatorics, the success-conditioned type
//!   distribution and its geometric product approximation;
//! - [`measurement`]: the symmetric joint measurement, its exact moments,
//!   outcome sampling and the shadow estimator;
//! - [`pipeline`]: the purify / measure / average compound estimator, the
//!   deviation estimator and the sample-budget planner;
//! - [`verify`]: named self-check suites used by the CLI.

pub mod error;
pub mod linalg;
pub mod measurement;
pub mod pipeline;
pub mod rng;
pub mod states;
pub mod typedist;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector};

/// Version string embedded in every CSV/JSON output.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
