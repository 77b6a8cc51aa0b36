//! Longitudinal biological-age pipeline: synthetic cohorts, slope
//! features, boosted-tree aging clocks, SHAP attribution, and temporal
//! evaluation. The numeric kernels live in `bioclock-core`; this crate
//! adds file formats, the protocol orchestration, and the CLI.

pub mod cli;
pub mod cohort;
pub mod error;
pub mod eval;
pub mod features;
pub mod persist;
pub mod synthgen;

pub use error::{PipelineError, Result};
