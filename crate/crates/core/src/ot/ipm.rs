use rand::Rng;

use super::EmpiricalDistribution;
use crate::error::{Error, Result};
use crate::scalar::{CompensatedSum, Scalar};

/// Best test function found by [`lipschitz_lower_bound`].
#[derive(Debug, Clone)]
pub struct TestFunctionBound<T> {
    /// `∫ φ dμ - ∫ φ dν` for the best witness; a lower bound on `W_1 / L`.
    pub value: T,
    /// Breakpoints of the piecewise-linear witness.
    pub knots: Vec<T>,
    /// Witness values at the knots, all in `[0, 1]`.
    pub heights: Vec<T>,
}

/// Lower-bounds `W_1(μ, ν) / L` by searching `[0, 1]`-valued test functions
/// with Lipschitz constant `1/L`.
///
/// Candidates are piecewise linear on the union of both supports. Each trial
/// starts from random slopes in `[-1/L, 1/L]` and improves them one piece at a
/// time; the objective is evaluated directly as a difference of weighted
/// averages over the atoms, never through CDFs or quantiles.
pub fn lipschitz_lower_bound<T: Scalar, R: Rng + ?Sized>(
    mu: &EmpiricalDistribution<T>,
    nu: &EmpiricalDistribution<T>,
    bound: T,
    trials: usize,
    rng: &mut R,
) -> Result<TestFunctionBound<T>> {
    if !(bound > T::zero()) {
        return Err(Error::InvalidArgument("bound must be positive".into()));
    }
    let width = mu.max().max(nu.max()) - mu.min().min(nu.min());
    if width > bound {
        return Err(Error::SupportTooWide {
            width: width.to_f64().unwrap_or(f64::NAN),
            bound: bound.to_f64().unwrap_or(f64::NAN),
        });
    }
    let mut knots: Vec<T> = mu.values().iter().chain(nu.values()).copied().collect();
    knots.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    knots.dedup();
    let pieces = knots.len().saturating_sub(1);
    let slope_max = T::one() / bound;

    // Atom -> knot index, resolved once.
    let locate = |v: T| knots.partition_point(|k| *k < v);
    let mu_idx: Vec<usize> = mu.values().iter().map(|&v| locate(v)).collect();
    let nu_idx: Vec<usize> = nu.values().iter().map(|&v| locate(v)).collect();

    let heights_of = |slopes: &[T]| -> Vec<T> {
        let mut h = Vec::with_capacity(knots.len());
        h.push(T::zero());
        for k in 0..pieces {
            let next = h[k] + slopes[k] * (knots[k + 1] - knots[k]);
            h.push(next);
        }
        let lo = h.iter().copied().fold(T::infinity(), T::min);
        h.iter_mut().for_each(|x| *x = *x - lo);
        h
    };
    let objective = |h: &[T]| -> T {
        let mut acc = CompensatedSum::new();
        for (&i, &w) in mu_idx.iter().zip(mu.weights()) {
            acc.add(w * h[i]);
        }
        for (&i, &w) in nu_idx.iter().zip(nu.weights()) {
            acc.add(-(w * h[i]));
        }
        acc.value()
    };

    let mut best = TestFunctionBound {
        value: T::zero(),
        heights: vec![T::zero(); knots.len()],
        knots: knots.clone(),
    };
    if pieces == 0 {
        return Ok(best);
    }
    for _ in 0..trials.max(1) {
        let mut slopes: Vec<T> = (0..pieces)
            .map(|_| T::lit(rng.gen_range(-1.0..=1.0)) * slope_max)
            .collect();
        let mut current = objective(&heights_of(&slopes));
        for _sweep in 0..4 {
            let mut improved = false;
            for k in 0..pieces {
                let mut keep = slopes[k];
                for candidate in [slope_max, -slope_max] {
                    slopes[k] = candidate;
                    let v = objective(&heights_of(&slopes));
                    if v > current {
                        current = v;
                        keep = candidate;
                        improved = true;
                    } else {
                        slopes[k] = keep;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        if current > best.value {
            best.value = current;
            best.heights = heights_of(&slopes);
        }
    }
    // A witness must stay inside [0, 1]; its range is at most width / L <= 1.
    debug_assert!(best.heights.iter().all(|h| *h <= T::one() + T::lit(1e-9)));
    Ok(best)
}
