//! Geometric interacting-jump particle approximations of Feynman-Kac flows on
//! finite state spaces, with matrix-exact oracles for every flow they target.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ctsim;
pub mod error;
pub mod measures;
pub mod oracle;
pub mod parallel;
pub mod particle;
pub mod rng;
pub mod selection;
pub mod stats;

pub use error::{FkError, Result};
pub mod verify;
pub mod zoo;
