//! Bayesian nonparametric estimation of coverage probabilities, frequency
//! counts and distinct-symbol counts from a single-hash count sketch.
//!
//! A token stream is hashed into `J` buckets by a strongly universal hash;
//! the resulting bucket counts are the only input to the estimators. Under a
//! Dirichlet-process prior the estimators are closed-form ([`dp`]); under a
//! Pitman–Yor prior they are evaluated exactly through a latent block-count
//! convolution or approximated by Monte Carlo ([`pyp`]).

pub mod dp;
pub mod error;
pub mod experiment;
pub mod genmodel;
pub mod numkit;
pub mod oracle;
pub mod pyp;
pub mod report;
pub mod rng;
pub mod sketch;

pub use error::{Error, ParseError, Result};
pub use genmodel::PriorParams;
pub use report::EstimateReport;
pub use sketch::{HashSpec, Sketch};
