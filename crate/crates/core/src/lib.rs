//! Simulation and verification engine for state-based contextual bandits.
//!
//! Each arm has a global utility `mu_i`; every state instantiates a local
//! mean `m_{i,s}` drawn around it, and the environment walks an exogenous,
//! known state sequence. The crate provides:
//!
//! - [`divergence`]: the `psi` moment bounds and their convex conjugates.
//! - [`env`]: environment instantiation, reward sampling and hardness gaps.
//! - [`strategies`]: SB-UCB, uniform allocation, empiric-best recommendation
//!   and successive rejects.
//! - [`bounds`]: closed-form evaluators for the regret and error bounds.
//! - [`montecarlo`]: deterministic, parallel experiment drivers.
//! - [`oracle`]: slow, independent reference implementations used to check
//!   the fast paths.

pub mod bounds;
pub mod divergence;
pub mod env;
mod error;
pub mod grid;
pub mod montecarlo;
pub mod oracle;
pub mod rng;
pub mod strategies;

pub use error::{Error, Result};
