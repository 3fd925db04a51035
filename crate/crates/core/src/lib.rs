//! Fluid model of the many-server queue with abandonment under a time-varying
//! arrival rate.
//!
//! The total fluid content `X(t)` solves a one-dimensional convolution
//! equation ([`solver`]); every other state descriptor (queue, waiting time,
//! residual-time and elapsed-time measures, flow counts) is reconstructed from
//! it ([`processes`], [`elapsed`]). A discrete-event simulator of the
//! `n`-server stochastic system ([`sim`]) serves as an empirical reference.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dist;
pub mod elapsed;
pub mod error;
pub mod kernel;
pub mod processes;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
