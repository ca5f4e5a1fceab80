//! Core numerics for a two-stage (simultaneous + sequential grouping)
//! talker-independent speaker separation pipeline.
//!
//! Everything in this crate is pure computation over heap-allocated arrays:
//! a minimal reverse-mode autodiff engine, STFT analysis/synthesis, the
//! Dense-UNet and TCN models, permutation-invariant objectives, K-means
//! clustering, the Adam optimizer and evaluation metrics. File formats,
//! threading and the CLI live in the companion `dcasa` crate.
//!
//! The crate is `no_std` with `alloc`; float math comes from `libm` via
//! `num-traits`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod cluster;
pub mod dense_unet;
pub mod dsp;
pub mod error;
pub mod fft;
pub mod graph;
pub mod init;
pub mod metrics;
pub mod objectives;
pub mod optim;
pub mod params;
pub mod rng;
pub mod seq;
pub mod synth;
pub mod tcn;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{Graph, NodeId};
pub use tensor::{Scalar, Tensor};
