//! Extraction of complement and substitute relations between products from
//! sales-transaction data.
//!
//! The pipeline builds a bipartite transaction–product network from raw
//! records, flags product pairs whose co-purchase counts are significantly
//! high or low under a configurable null model, scores the surviving pairs
//! with random-walk similarity measures, and groups products into roles with
//! information-theoretic community detection. A seeded world simulator and a
//! set of external-data validation statistics close the loop.
//!
//! Modules follow the pipeline order:
//!
//! * [`bipartite`] — records, filtering, network construction, co-purchase counts
//! * [`pb_stats`] — Poisson-binomial utilities: exact PMF, Poisson CDF,
//!   approximation error bounds, tail bounds
//! * [`null_models`] — significance tests and relation matrices
//! * [`measures`] — complementarity/substitutability scores and thresholding
//! * [`community`] — map-equation roles, partition comparison, calibration
//! * [`simulator`] — seeded ground-truth world generator
//! * [`validation`] — external-data checks (flavour overlap, rank tests,
//!   correlations, split robustness)

#![forbid(unsafe_code)]

pub mod bipartite;
pub mod community;
pub mod error;
pub mod matrix;
pub mod measures;
pub mod null_models;
pub mod pb_stats;
pub mod simulator;
pub mod validation;

pub use error::{Error, Result};
