//! Drift-robust malware classification on tabular feature vectors.
//!
//! The crate covers the whole pipeline: dataset I/O and temporal bucketing,
//! a residual MLP trained with AdamW under a cost-sensitive regularised
//! binary cross-entropy, permutation feature importance for feature
//! selection, per-month evaluation with a persistence-based drift detector,
//! and a generator of synthetic streams with controlled drift.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod pfi;
pub mod synthdrift;
pub mod training;

#[cfg(feature = "cli")]
pub mod cli;

pub use data::{Dataset, FeatureMask, MonthBucket, Provenance, Sample, YearMonth};
pub use error::{Error, Result};
pub use evaluation::{DriftVerdict, Metrics, MetricsReport};
pub use losses::{LossConfig, LossVariant};
pub use model::{Model, ModelConfig, ModelParams};
pub use pfi::{PfiConfig, PfiReport};
pub use synthdrift::{DriftShape, DriftSpec};
pub use training::{TrainConfig, TrainHistory};
