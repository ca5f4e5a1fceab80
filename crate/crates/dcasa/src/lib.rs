//! File formats, dataset synthesis, training orchestration and evaluation
//! for the deep CASA separation pipeline. The numeric core lives in
//! `dcasa-core`; this crate adds everything that touches the file system or
//! spawns threads.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod gradcheck;
pub mod manifest;
pub mod pipeline;
pub mod plot;
pub mod train;
pub mod wav;

pub use error::{Error, Result};
