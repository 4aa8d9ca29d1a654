//! Exact optimal transport on the real line.
//!
//! Everything here works on [`EmpiricalDistribution`]s: sorted atoms with
//! normalized weights. Transport quantities are computed by merging the
//! cumulative-weight breakpoints of two distributions, which turns the
//! quantile-function integral into a finite sum that is exact for weighted
//! empirical measures.

mod distribution;
mod ipm;
mod transport;

pub use distribution::EmpiricalDistribution;
pub use ipm::{lipschitz_lower_bound, TestFunctionBound};
pub use transport::{
    cdf_distance_integral, d_rc_bounded, merged_segments, monotone_coupling, signed_efforts,
    wasserstein, wasserstein_1, CouplingSegment, MergedSegments, MonotoneCoupling,
    TransportDecomposition,
};
