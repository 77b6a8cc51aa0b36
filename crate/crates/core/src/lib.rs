//! Algorithmic core for a longitudinal biological-age pipeline.
//!
//! Everything in this crate is pure computation over in-memory data:
//! histogram gradient-boosted trees with optional gradient-based one-side
//! sampling, exact TreeSHAP attribution with a brute-force Shapley oracle,
//! random-forest and elastic-net baselines, annualized-slope arithmetic,
//! and the evaluation metrics. File formats, cohort handling, and the CLI
//! live in the companion `bioclock` crate.
//!
//! The crate is `no_std` + `alloc` so the numeric kernels carry no
//! platform dependencies; determinism comes from the counter-based
//! [`rng`] module rather than any OS entropy source.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod binning;
pub mod error;
pub mod forest;
pub mod gbm;
pub mod linear;
pub mod matrix;
pub mod metrics;
pub mod rng;
pub mod shap;
pub mod slope;

pub use error::CoreError;
pub use matrix::{FeatureKind, FeatureMatrix, FeatureMeta, SystemTag};
