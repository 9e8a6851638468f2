//! Regeneration-block bootstrap for stationary chains on a finite alphabet,
//! covering both chains of infinite order and their order-k Markov
//! approximations.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod chain_model;
pub mod error;
pub mod harness;
pub mod markov_approx;
pub mod regeneration;
pub mod schedule;
pub mod simulator;

pub use chain_model::{Alphabet, Kernel, Observable, Symbol};
pub use error::{Error, Result};
pub use simulator::{SeedSpec, Trajectory};
