//! Deep embedding clustering of tabular data.
//!
//! The crate is `no_std` + `alloc`. It carries every algorithm needed by the
//! benchmark: dense numerics and hand-derived backprop ([`numkit`]),
//! classical baselines ([`cluster`]), autoencoders ([`autoenc`]), the
//! embedding-clustering trainers ([`embed`]), Hungarian-matched accuracy,
//! the five-fold protocol and rank aggregation ([`eval`]), and in-memory
//! dataset handling ([`data`]). File formats, the CLI and parallel fan-out
//! live in the `tabcluster` companion crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autoenc;
pub mod cluster;
pub mod data;
pub mod embed;
mod error;
mod train;
pub mod eval;
pub mod numkit;

pub use train::MAX_LR_HALVINGS;

pub use error::{Error, Result};
