//! Cold-start item embedding warm-up for CTR models: dataset loaders, the
//! training pipeline, checkpoints and the `avaew` command-line tool.

pub mod cache;
pub mod checkpoint;
pub mod config;
pub mod data;
mod error;
pub mod export;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
