//! Random walks in doubly stochastic random environments on periodic tori.
//!
//! The crate builds divergence-free environments from conductances and
//! stream tensors ([`env`]), simulates the continuous-time walk exactly
//! ([`walker`]), evaluates its martingale decompositions and diffusive
//! bounds ([`mart`]), solves for harmonic coordinates by two independent
//! routes ([`corrector`]) and reconstructs stream tensors from flows
//! ([`helmholtz`]).

pub mod corrector;
pub mod env;
pub mod helmholtz;
pub mod krylov;
pub mod lattice;
pub mod mart;
pub mod rng;
pub mod sparse;
pub mod stats;
pub mod walker;

pub use env::{Environment, EnvError, EnvSpec, ValidationReport};
pub use lattice::{Dir, Torus};

/// Crate version, recorded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
