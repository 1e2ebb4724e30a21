//! Tiered, budgeted screening.
//!
//! A population of individuals with latent ordinal risk passes through three
//! evaluation stages of increasing cost and reliability: an automated
//! classifier, non-expert reviewers and experts. Each stage spends its budget
//! on evaluations of the current survivors, updates a weighted empirical risk
//! `u_hat`, and keeps the `k_i` highest-risk individuals for the next stage.
//!
//! Baseline screening procedures and population/cohort metrics are provided
//! for comparison.

pub mod baselines;
mod error;
pub mod label;
pub mod metrics;
pub mod pipeline;
pub mod population;
pub mod study;

pub use error::{Error, Result};
pub use label::{Encoding, RiskLabel};
