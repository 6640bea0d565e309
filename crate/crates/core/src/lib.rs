//! Symmetric Bayesian equilibrium of a two-player stochastic exit game with
//! private exit values, and Monte-Carlo checks of its defining properties.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod best_response;
pub mod diffusion;
pub mod equilibrium;
pub mod error;
pub mod numerics;
pub mod payoffs;
pub mod primitives;
pub mod single_player;
pub mod special_cases;
pub mod stats;

pub use error::{Error, Result};
