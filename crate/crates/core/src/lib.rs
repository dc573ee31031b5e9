//! Fair allocation under normalized p-mean welfare.
//!
//! Instances of goods or chores, the p-mean objectives and their convex
//! surrogates, fairness and efficiency audits, Fisher market equilibria,
//! a projected-gradient solver with KKT certificates, rounding of equilibria
//! to integral allocations, and exhaustive oracles for small instances.

pub mod error;
pub mod exact;
pub mod exec;
pub mod fairness;
pub mod instance;
pub mod lp;
pub mod market;
pub mod rounding;
pub mod sample;
pub mod solver;
pub mod welfare;

pub use error::{Error, Result};
pub use exec::Execution;
pub use instance::{FractionalAllocation, Instance, IntegralAllocation, Kind, NormalizedInstance};
pub use welfare::PMean;
