//! Video synthesis as latent trajectory discovery.
//!
//! An LSTM motion generator walks the latent space of a fixed image
//! generator along PCA basis directions; a 3D-patch video discriminator and
//! a contrastive image discriminator supply the training signal. Everything
//! runs on a small built-in tensor engine with reverse-mode differentiation,
//! so the whole pipeline is testable on CPU without external models.

pub mod adversaries;
pub mod augment;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod generator;
pub mod export;
pub mod infer;
pub mod latent;
pub mod losses;
pub mod metrics;
pub mod motion;
pub mod nn;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
