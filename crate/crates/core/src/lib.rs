//! Sequential detection of signals across independent data streams when all
//! signals share one unknown parameter and all noises share another.
//!
//! The crate is organised bottom-up:
//!
//! - [`models`]: observation families, parameter regions, sufficient
//!   statistics and region-restricted maximum likelihood.
//! - [`geometry`]: Kullback-Leibler distances to regions, the information
//!   constants of the constrained and unconstrained problems, and the
//!   universal lower bound on the expected sample size.
//! - [`engine`]: the sequential test itself (adaptive plug-in likelihood,
//!   signal-set estimate, error-set suprema and the stopping rule).
//! - [`montecarlo`]: batches of seeded, parallel trials summarised into
//!   expected sample size and familywise error estimates.
//! - [`oracle`]: slow brute-force references used to cross-check the
//!   closed forms and the statistical guarantees.
//! - [`validation`]: the oracle cross-checks packaged as pass/fail reports.

pub mod engine;
pub mod error;
pub mod geometry;
pub mod models;
pub mod montecarlo;
pub mod oracle;
pub mod validation;

mod streamset;

pub use error::{Error, Result};
pub use streamset::StreamSet;
