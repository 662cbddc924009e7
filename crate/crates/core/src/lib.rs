//! Metastability of dynamical systems driven by small heavy-tailed Lévy noise.

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod jumpmaps;
pub mod markov;
pub mod noise;
pub mod rates;
pub mod rng;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
