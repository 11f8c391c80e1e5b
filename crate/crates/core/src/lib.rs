//! Top-k recommendation with multi-sample contrastive losses.
//!
//! The pipeline is `dataset` → `graph` → `encoder` → `losses` → `trainer`,
//! evaluated with `metrics`. Everything is double precision and, on the
//! default single-threaded path, bit-for-bit reproducible from a seed.

pub mod cli;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod losses;
pub mod metrics;
pub mod table;
pub mod trainer;

pub use error::{Entity, Error, Result};
