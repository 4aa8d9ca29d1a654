//! Distribution-level bias measurement for scoring models.
//!
//! Model bias is the `W_1` distance between the score distributions of two
//! protected classes, split into the part that disadvantages the protected
//! class (positive) and the part that favours it (negative). Predictor-level
//! explanations apply the same transport split to explainer values, and the
//! bias games turn it into additive Shapley attributions.
//!
//! The transport kernels in [`ot`] and the generic parts of [`metrics`] and
//! [`shapley`] work for any [`Scalar`] (`f32` or `f64`); models, explainers
//! and the pipeline use `f64`.

pub mod bias_explain;
pub mod data;
pub mod error;
pub mod explain;
pub mod metrics;
pub mod models;
pub mod ot;
pub mod pipeline;
pub mod scalar;
pub mod shapley;
pub mod shapley_bias;

pub use data::FeatureMatrix;
pub use error::{Error, Result};
pub use metrics::FavorableSign;
pub use scalar::Scalar;

/// Empirical distribution in double precision.
pub type Distribution = ot::EmpiricalDistribution<f64>;
/// Empirical distribution in single precision.
pub type Distribution32 = ot::EmpiricalDistribution<f32>;
/// Transport decomposition in double precision.
pub type Efforts = ot::TransportDecomposition<f64>;
/// Bias report in double precision.
pub type Report = metrics::BiasReport<f64>;
/// Bias report in single precision.
pub type Report32 = metrics::BiasReport<f32>;
/// Bias curve in double precision.
pub type Curve = metrics::BiasCurve<f64>;
