//! Data minimization for machine-learning models.
//!
//! Given tabular data and a black-box model, find how coarsely each input
//! feature can be collected (ranges, category groups, or not at all) while
//! the model's predictions on the coarsened data stay within a relative
//! accuracy target.
//!
//! The pieces, bottom up:
//!
//! - [`data`]: schemas, records, CSV ingestion, cleaning and splitting.
//! - [`oracle`]: the model as a label source.
//! - [`tree`]: the generalizer tree fit to the oracle's labels.
//! - [`generalization`]: ranges, groups, clusters and representatives.
//! - [`metrics`]: NCP, GCP, relative accuracy, ILAG and disclosure risk.
//! - [`minimizer`]: the prune / remove loop.
//! - [`document`]: the JSON result document.
//! - [`session`]: answering one feature at a time, with offers that narrow.

pub mod data;
pub mod document;
pub mod error;
pub mod generalization;
pub mod metrics;
pub mod minimizer;
pub mod oracle;
pub mod session;
pub mod tree;

pub use data::{Cell, Dataset, Feature, FeatureKind, Record, Schema, SplitSpec};
pub use error::{Error, OracleError, Result};
pub use generalization::{FeatureGeneralization, FeatureStatus, Generalization, GeneralizationModel, Interval};
pub use metrics::{AccuracyReport, NcpReport};
pub use minimizer::{minimize, MinimizationConfig, MinimizationResult};
pub use oracle::PredictionOracle;

/// The guide's code listings, compiled and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/generalizer.md")]
    mod generalizer {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/minimizer.md")]
    mod minimizer {}
    #[doc = include_str!("../../../book/src/result-document.md")]
    mod result_document {}
    #[doc = include_str!("../../../book/src/sessions.md")]
    mod sessions {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
