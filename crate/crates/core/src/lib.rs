//! Compute-and-forward relaying for multi-source, multi-relay multicast
//! networks.
//!
//! * [`model`]: channel data, computation/broadcast rate and power relations.
//! * [`rank`]: exact integer matrix rank.
//! * [`select`]: integer coefficient-vector selection (naive, local, global).
//! * [`alloc_ds`]: per-realization time allocation (delay-stringent).
//! * [`alloc_dt`]: average-power time/power allocation (delay-tolerant).
//! * [`simulate`]: seeded channel draws and Monte-Carlo experiments.
//! * [`cli`]: the `cpf` command-line front end.

// Comparisons are written `!(x > 0.0)` so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloc_ds;
pub mod alloc_dt;
pub mod cli;
pub mod error;
pub mod model;
pub mod rank;
pub mod select;
pub mod simulate;

pub use error::{Error, Result};
