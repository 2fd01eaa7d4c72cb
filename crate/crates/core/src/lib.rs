//! Sequential multiuser scheduling and power allocation (SMSPA) for the
//! downlink of cell-free and clustered cell-free massive MIMO networks.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: AP/UE layouts, tile clustering, path loss with shadowing and
//!   imperfect-CSI channel draws.
//! - [`precoding`]: ZF and MMSE weights, equal power loading, composite precoders.
//! - [`rate`]: analytic sum-rates for cooperating groups and clusters.
//! - [`scheduling`]: greedy, enhanced subset greedy and exhaustive scheduling.
//! - [`power`]: gradient-ascent and equal power loading.
//! - [`pipeline`]: the per-trial scheme, Monte Carlo sweeps and cost accounting.
//! - [`config`]: run configuration files and overrides.

pub mod config;
pub mod error;
pub mod flops;
pub mod geometry;
pub mod linalg;
pub mod par;
pub mod pipeline;
pub mod power;
pub mod precoding;
pub mod rate;
pub mod scheduling;

pub use error::{Error, ErrorKind, Result};
