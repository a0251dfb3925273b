//! Responsible-AI toolkit for small tabular datasets.
//!
//! The crate bundles five mechanisms that share one data model
//! ([`dataset::Dataset`]) and one family of small classifiers
//! ([`model::Network`]):
//!
//! - [`frtrain`]: classifier trained against a fairness discriminator and a
//!   robustness discriminator, with clean-probability example reweighting.
//! - [`slicetuner`]: per-slice power-law learning curves and budgeted,
//!   fairness-aware data acquisition.
//! - [`mlclean`]: joint sanitization and entity resolution followed by
//!   reweighing for demographic parity.
//! - [`fairbatch`]: a batch sampler that adapts per-(group, label)
//!   proportions from the intermediate model's fairness.
//! - [`slicefinder`]: lattice and decision-tree search for interpretable
//!   slices where a model underperforms.

pub mod dataset;
pub mod error;
pub mod fairbatch;
pub mod frtrain;
pub mod metrics;
pub mod mlclean;
pub mod model;
pub mod plotdata;
pub mod rng;
pub mod slicefinder;
pub mod slicetuner;

pub use error::{Error, Result};
