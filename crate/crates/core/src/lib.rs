//! Causal effect estimation for binary text features, and classifier
//! training that steers a feature's learned effect toward a target.
//!
//! Modules follow the pipeline: [`corpus`] generates and stores documents,
//! [`features`] featurizes and edits them, [`models`] trains outcome,
//! multiplier and propensity models, [`estimators`] turns those into effect
//! estimates, [`augment`] builds counterfactual training data and trains
//! classifiers, and [`evalx`] reports group accuracies and bias scans.

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod estimators;
pub mod evalx;
pub mod features;
pub mod models;
mod rng;

pub use error::{Error, Result};
