//! Gravitational decoherence of bosonic matter in a thermal graviton bath.
//!
//! The crate provides a generic finite-dimensional master-equation engine
//! with vacuum and thermal dissipators and a non-Markovian memory transform,
//! the specialized one-photon kernel for incoherently polarized light, a
//! fixed-step integrator with conservation monitoring, and closed-form
//! dissipation-rate bounds.

pub mod bath;
pub mod cli;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod evolution;
pub mod exec;
pub mod grid;
pub mod photon;
pub mod quadrature;
pub mod tensor;
pub mod units;

pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::{build_grid, GridNode, MomentumGrid};
pub use units::{dimensionless_coupling, PhysicalConstants, UnitSystem};
