//! Reversibility-aware reinforcement learning on small MDPs.
//!
//! The crate learns which states cannot be recovered from, spends as few
//! supervisor queries as it can to label them, and steers the agent away
//! from them with a penalized Bellman backup.

pub mod agent;
pub mod cli;
pub mod env;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod labeling;
pub mod mdp;
pub mod penalized;
pub mod rng;

pub use error::{Error, Result};
