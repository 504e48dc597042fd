//! Conditional variance estimation by model-selection (MS) and convex (C)
//! aggregation of residual-based candidates, and regression with a reject
//! option driven by the estimated variance.
//!
//! The crate is organised bottom-up:
//!
//! - [`simdata`]: synthetic heteroscedastic models and sampling,
//! - [`regressors`]: kNN, CART, random forest, ridge, lasso, elastic net, and
//!   the 12-machine dictionary,
//! - [`aggregate`]: model selection and simplex-constrained least squares,
//! - [`varpipe`]: the two-stage variance pipeline and its evaluation,
//! - [`reject`]: empirical-CDF calibration and reject-option predictors,
//! - [`harness`]: seeded Monte-Carlo experiments with CSV output.

pub mod aggregate;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod regressors;
pub mod reject;
pub mod rng;
pub mod simdata;
pub mod varpipe;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use rng::Rng;
