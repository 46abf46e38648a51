//! Discrete-event simulator and analytical toolkit for LTE-V2X sidelink
//! Mode 4 with sensing-based semi-persistent scheduling.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod channel;
pub mod config;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod mobility;
pub mod mode4;
pub mod phy;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
