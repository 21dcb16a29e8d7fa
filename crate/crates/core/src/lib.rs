//! Stationary symmetric infinitely divisible processes driven by conservative
//! flows, and the statistics of their sample autocovariances.
//!
//! The crate is organised bottom-up:
//!
//! - [`levy`]: the local Lévy measure, described through its upper tail.
//! - [`samplers`]: seeded random streams and every variate the experiments
//!   need (Poisson arrivals, signs, symmetric stable, positive stable,
//!   Mittag-Leffler).
//! - [`markov`]: the lazy random walk shift as a null-recurrent flow, with
//!   its return-time quantities computed exactly and path samplers for the
//!   restricted measure.
//! - [`boole`]: Boole's transformation and orbit diagnostics.
//! - [`series`]: truncated series simulation of the process over the walk.
//! - [`stats`]: autocovariances, the normalising sequence `c_n`, index
//!   regression and the two-sample Kolmogorov-Smirnov distance.
//! - [`harness`] and [`config`]: reproducible multi-replicate experiments
//!   with CSV/JSON output.

pub mod boole;
pub mod config;
pub mod error;
pub mod harness;
pub mod levy;
pub mod markov;
pub mod samplers;
pub mod series;
pub mod stats;

pub use error::{Error, Result};
