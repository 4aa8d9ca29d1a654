use serde::{Deserialize, Serialize};

use super::EmpiricalDistribution;
use crate::error::{Error, Result};
use crate::scalar::{CompensatedSum, Scalar};

/// Iterator over the pieces of `(0, 1]` on which both quantile functions are
/// constant.
///
/// Yields `(p_lo, p_hi, source, target)` where `source = F0^{-1}(p)` and
/// `target = F1^{-1}(p)` for every `p` in `(p_lo, p_hi]`. Zero-length pieces
/// (which only arise from rounding in the cumulative weights) are skipped.
pub struct MergedSegments<'a, T> {
    d0: &'a EmpiricalDistribution<T>,
    d1: &'a EmpiricalDistribution<T>,
    i: usize,
    j: usize,
    prev: T,
}

impl<T: Scalar> Iterator for MergedSegments<'_, T> {
    type Item = (T, T, T, T);

    fn next(&mut self) -> Option<Self::Item> {
        let c0 = self.d0.cumulative();
        let c1 = self.d1.cumulative();
        while self.i < c0.len() && self.j < c1.len() {
            let (a, b) = (c0[self.i], c1[self.j]);
            let hi = a.min(b);
            let item = (
                self.prev,
                hi,
                self.d0.values()[self.i],
                self.d1.values()[self.j],
            );
            if a <= hi {
                self.i += 1;
            }
            if b <= hi {
                self.j += 1;
            }
            if hi > self.prev {
                self.prev = hi;
                return Some(item);
            }
        }
        None
    }
}

/// Merges the cumulative-weight breakpoints of `d0` and `d1`.
pub fn merged_segments<'a, T: Scalar>(
    d0: &'a EmpiricalDistribution<T>,
    d1: &'a EmpiricalDistribution<T>,
) -> MergedSegments<'a, T> {
    MergedSegments {
        d0,
        d1,
        i: 0,
        j: 0,
        prev: T::zero(),
    }
}

#[inline]
fn cost<T: Scalar>(gap: T, q: u32) -> T {
    match q {
        1 => gap.abs(),
        2 => gap * gap,
        _ => gap.abs().powi(q as i32),
    }
}

/// Split of the `q`-th power transport cost under the monotone plan.
///
/// `right_effort` integrates over the quantile levels where the target lies
/// to the right of the source (`F1^{-1} > F0^{-1}`), `left_effort` where it
/// lies to the left. Levels with equal quantiles contribute to neither.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TransportDecomposition<T> {
    /// `left_effort + right_effort`, i.e. `W_q^q`.
    pub total: T,
    pub left_effort: T,
    pub right_effort: T,
    pub order: u32,
}

impl<T: Scalar> TransportDecomposition<T> {
    /// `W_q` itself (the `q`-th root of `total`).
    pub fn distance(&self) -> T {
        match self.order {
            1 => self.total,
            2 => self.total.sqrt(),
            q => self.total.powf(T::one() / T::lit(q as f64)),
        }
    }
}

/// Left/right transport efforts of moving `d0` onto `d1` with cost `|x-y|^q`.
///
/// # Panics
/// If `q == 0`.
pub fn signed_efforts<T: Scalar>(
    d0: &EmpiricalDistribution<T>,
    d1: &EmpiricalDistribution<T>,
    q: u32,
) -> TransportDecomposition<T> {
    assert!(q >= 1, "transport order must be at least 1");
    let mut left = CompensatedSum::new();
    let mut right = CompensatedSum::new();
    for (lo, hi, x0, x1) in merged_segments(d0, d1) {
        let len = hi - lo;
        if x1 > x0 {
            right.add(cost(x1 - x0, q) * len);
        } else if x1 < x0 {
            left.add(cost(x0 - x1, q) * len);
        }
    }
    let (left_effort, right_effort) = (left.value(), right.value());
    TransportDecomposition {
        total: left_effort + right_effort,
        left_effort,
        right_effort,
        order: q,
    }
}

/// Exact `W_q` between two empirical distributions.
///
/// # Panics
/// If `q == 0`.
pub fn wasserstein<T: Scalar>(
    d0: &EmpiricalDistribution<T>,
    d1: &EmpiricalDistribution<T>,
    q: u32,
) -> T {
    signed_efforts(d0, d1, q).distance()
}

/// Earth mover distance `W_1`.
pub fn wasserstein_1<T: Scalar>(d0: &EmpiricalDistribution<T>, d1: &EmpiricalDistribution<T>) -> T {
    wasserstein(d0, d1, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CouplingSegment<T> {
    pub p_lo: T,
    pub p_hi: T,
    pub source: T,
    pub target: T,
}

/// The order-preserving transport plan, as mass moved along quantile levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MonotoneCoupling<T> {
    pub segments: Vec<CouplingSegment<T>>,
}

impl<T: Scalar> MonotoneCoupling<T> {
    /// `sum |source - target|^q * (p_hi - p_lo)`.
    pub fn cost(&self, q: u32) -> T {
        assert!(q >= 1, "transport order must be at least 1");
        self.segments
            .iter()
            .map(|s| cost(s.source - s.target, q) * (s.p_hi - s.p_lo))
            .collect::<CompensatedSum<T>>()
            .value()
    }

    /// Mass carried from `source` to `target` summed per atom pair, in plan order.
    pub fn atom_flows(&self) -> Vec<(T, T, T)> {
        let mut out: Vec<(T, T, T)> = Vec::new();
        for s in &self.segments {
            let mass = s.p_hi - s.p_lo;
            match out.last_mut() {
                Some(last) if last.0 == s.source && last.1 == s.target => last.2 = last.2 + mass,
                _ => out.push((s.source, s.target, mass)),
            }
        }
        out
    }
}

pub fn monotone_coupling<T: Scalar>(
    d0: &EmpiricalDistribution<T>,
    d1: &EmpiricalDistribution<T>,
) -> MonotoneCoupling<T> {
    MonotoneCoupling {
        segments: merged_segments(d0, d1)
            .map(|(p_lo, p_hi, source, target)| CouplingSegment {
                p_lo,
                p_hi,
                source,
                target,
            })
            .collect(),
    }
}

/// `∫ |F0(t) - F1(t)| dt`, integrated exactly over the merged support.
///
/// This walks the CDFs rather than the quantile functions, so it is an
/// independent route to `W_1`.
pub fn cdf_distance_integral<T: Scalar>(
    d0: &EmpiricalDistribution<T>,
    d1: &EmpiricalDistribution<T>,
) -> T {
    let (v0, c0) = (d0.values(), d0.cumulative());
    let (v1, c1) = (d1.values(), d1.cumulative());
    let (mut i, mut j) = (0usize, 0usize);
    let (mut f0, mut f1) = (T::zero(), T::zero());
    let mut acc = CompensatedSum::new();
    let mut last: Option<T> = None;
    while i < v0.len() || j < v1.len() {
        let t = match (v0.get(i), v1.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        if let Some(prev) = last {
            acc.add((f0 - f1).abs() * (t - prev));
        }
        while i < v0.len() && v0[i] <= t {
            f0 = c0[i];
            i += 1;
        }
        while j < v1.len() && v1[j] <= t {
            f1 = c1[j];
            j += 1;
        }
        last = Some(t);
    }
    acc.value()
}

/// `W_1(d0, d1) / L` for supports that fit in an interval of length `L`.
///
/// This equals the randomized-classifier distance with the metric scaled by
/// `1/L`; see [`super::lipschitz_lower_bound`] for a direct check.
pub fn d_rc_bounded<T: Scalar>(
    d0: &EmpiricalDistribution<T>,
    d1: &EmpiricalDistribution<T>,
    bound: T,
) -> Result<T> {
    if !(bound > T::zero()) || !bound.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "support bound must be positive, got {bound}"
        )));
    }
    let width = d0.max().max(d1.max()) - d0.min().min(d1.min());
    if width > bound {
        return Err(Error::SupportTooWide {
            width: width.to_f64().unwrap_or(f64::NAN),
            bound: bound.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(wasserstein_1(d0, d1) / bound)
}
