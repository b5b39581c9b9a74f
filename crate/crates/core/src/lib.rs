//! Resource-rational memory encoding and dependency-locality corpus analysis.
//!
//! The crate has two halves that share a vocabulary of surprisal:
//!
//! * [`memory_model`] and [`allocation`] implement a Gaussian noisy-channel
//!   memory. An input `w` is stored as `r = w + N(0, 1/tau_w)` and recovered
//!   as the posterior mean under a Gaussian prior. The expected retrieval
//!   error is available in closed form, and [`allocation`] distributes a fixed
//!   precision budget across items so as to minimise total error. Surprising
//!   items end up with the larger share.
//! * [`conllu`], [`pipeline`] and [`stats`] turn UD treebanks with word-level
//!   surprisal into dependency records (orthographic and surprisal-weighted
//!   lengths plus controls), reading-time tables, and fixed-effects
//!   regressions.
//!
//! Surprisal is carried in nats inside the memory model and in bits on the
//! corpus side, which is how the input tables are published.

pub mod allocation;
pub mod conllu;
mod error;
pub mod format;
pub mod io;
pub mod memory_model;
pub mod optimize;
pub mod pipeline;
pub mod stats;

pub use error::{Error, Result};
