//! Multivariate covariance generalized linear models: estimating-function
//! fitting and Wald-based hypothesis testing.

pub mod chisq;
pub mod covariance;
pub mod data;
pub mod design;
pub mod error;
pub mod estimator;
pub mod formula;
pub mod linalg;
pub mod model;
pub mod multcomp;
pub mod persist;
pub mod report;
pub mod suites;
pub mod wald;

pub use data::Dataset;
pub use error::{Error, Result};
pub use estimator::{fit, FitOptions, FittedModel};
pub use model::ModelSpec;
pub use suites::{AnovaType, TestTable};
pub use wald::{Hypothesis, TestResult};
