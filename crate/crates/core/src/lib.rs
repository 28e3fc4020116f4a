//! Soft constraint handling for deep Q-learning with a dynamically growing
//! penalty factor.
//!
//! Constraint residuals are folded into one value with
//! [`constraints::ks_aggregate`]; [`penalty::PenaltyKind`] turns that value
//! into a reward penalty; [`penalty::PenaltySchedule`] raises the penalty
//! factor as the network's training loss settles. [`harness`] runs the
//! regression and vehicle studies end to end.

pub mod agent;
pub mod constraints;
pub mod envs;
pub mod error;
pub mod harness;
pub mod mlp;
pub mod penalty;
pub mod replay;

pub use error::{Error, Result};

/// RNG used everywhere a seed must reproduce a run bit for bit.
pub type SeededRng = rand_chacha::ChaCha8Rng;
