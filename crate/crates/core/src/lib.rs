//! Three-stage brain-tumour analysis: image enhancement, region detection
//! with ROI extraction, and a multiscale cascaded multitask encoder-decoder
//! that segments and classifies the cropped tumour region.

pub mod datapipe;
pub mod diffcore;
pub mod error;
pub mod exec;
pub mod harness;
pub mod imgops;
pub mod lossmetrics;
pub mod nets;

pub use error::{Error, Result};
