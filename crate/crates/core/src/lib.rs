//! Item cold-start warm-up for embedding-based CTR models.
//!
//! This crate is the allocation-only (`no_std` + `alloc`) half of the
//! project. It carries:
//!
//! * [`ndcore`]: dense 2-D tensors, a reverse-mode autodiff tape and Adam.
//! * [`features`]: the feature schema, interaction examples and the
//!   old/new plus warm-a/b/c/test split protocol.
//! * [`backbones`]: FM, DeepFM and IPNN scorers over per-field embeddings.
//! * [`avaew`]: the conditional VAE warm-up generator, the discriminator and
//!   every term of the warm-up objective.
//! * [`metrics`] and [`pca`]: AUC and a power-iteration projection used by
//!   the embedding export.
//!
//! File formats, dataset parsers, the training driver and the CLI live in
//! the std companion crate `avaew`.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod avaew;
pub mod backbones;
mod error;
pub mod features;
pub mod metrics;
pub mod ndcore;
pub mod pca;

pub use error::{Error, Result};
