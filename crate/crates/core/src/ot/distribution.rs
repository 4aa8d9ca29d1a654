use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{CompensatedSum, Scalar};

/// Weighted empirical measure on the real line.
///
/// Atoms are stored in ascending order (ties allowed; a repeated value is a
/// heavier atom) together with normalized weights and their running sums.
/// The last cumulative weight is exactly one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EmpiricalDistribution<T> {
    values: Vec<T>,
    weights: Vec<T>,
    cumulative: Vec<T>,
}

impl<T: Scalar> EmpiricalDistribution<T> {
    /// Builds a distribution from raw samples.
    ///
    /// With `weights == None` every sample gets mass `1/N`. Explicit weights
    /// must be positive and finite; they are normalized to sum to one, and any
    /// normalized weight below `1e-15` is rejected instead of being dropped.
    pub fn from_samples(values: &[T], weights: Option<&[T]>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("distribution needs at least one sample"));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        match weights {
            None => Ok(Self::uniform_unchecked(values)),
            Some(w) => Self::weighted(values, w),
        }
    }

    /// Uniform distribution over `values`.
    pub fn uniform(values: &[T]) -> Result<Self> {
        Self::from_samples(values, None)
    }

    /// Dirac mass at `x`.
    pub fn point_mass(x: T) -> Result<Self> {
        Self::from_samples(&[x], None)
    }

    fn uniform_unchecked(values: &[T]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        let n = sorted.len();
        let n_t = T::from_usize_lossy(n);
        let w = T::one() / n_t;
        // (k+1)/N is correctly rounded, unlike a running sum of 1/N.
        let mut cumulative: Vec<T> = (1..=n).map(|k| T::from_usize_lossy(k) / n_t).collect();
        cumulative[n - 1] = T::one();
        Self {
            values: sorted,
            weights: vec![w; n],
            cumulative,
        }
    }

    fn weighted(values: &[T], weights: &[T]) -> Result<Self> {
        if weights.len() != values.len() {
            return Err(Error::LengthMismatch {
                expected: values.len(),
                actual: weights.len(),
            });
        }
        for (index, w) in weights.iter().enumerate() {
            if !w.is_finite() || *w <= T::zero() {
                return Err(Error::NonPositiveWeight {
                    index,
                    value: w.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        let total = weights
            .iter()
            .copied()
            .collect::<CompensatedSum<T>>()
            .value();
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));

        let mut sorted = Vec::with_capacity(order.len());
        let mut normalized = Vec::with_capacity(order.len());
        for &i in &order {
            let w = weights[i] / total;
            if w < T::min_weight() {
                return Err(Error::NonPositiveWeight {
                    index: i,
                    value: w.to_f64().unwrap_or(0.0),
                });
            }
            sorted.push(values[i]);
            normalized.push(w);
        }

        let mut acc = CompensatedSum::new();
        let mut cumulative = Vec::with_capacity(normalized.len());
        let mut prev = T::zero();
        for &w in &normalized {
            acc.add(w);
            let c = acc.value().min(T::one()).max(prev);
            cumulative.push(c);
            prev = c;
        }
        *cumulative.last_mut().expect("non-empty") = T::one();
        Ok(Self {
            values: sorted,
            weights: normalized,
            cumulative,
        })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Running sums of the weights; the last entry is exactly one.
    pub fn cumulative(&self) -> &[T] {
        &self.cumulative
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> T {
        self.values[0]
    }

    pub fn max(&self) -> T {
        self.values[self.values.len() - 1]
    }

    /// Right-continuous CDF: total weight of atoms `<= t`.
    pub fn cdf(&self, t: T) -> T {
        let idx = self.values.partition_point(|v| *v <= t);
        if idx == 0 {
            T::zero()
        } else {
            self.cumulative[idx - 1]
        }
    }

    /// Left-continuous generalized inverse `inf { x : p <= F(x) }`.
    pub fn quantile(&self, p: T) -> Result<T> {
        if !(p > T::zero() && p <= T::one()) {
            return Err(Error::ProbabilityOutOfRange(p.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(self.quantile_unchecked(p))
    }

    pub(crate) fn quantile_unchecked(&self, p: T) -> T {
        let idx = self.cumulative.partition_point(|c| *c < p);
        self.values[idx.min(self.values.len() - 1)]
    }

    /// Weighted mean, compensated.
    pub fn mean(&self) -> T {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(&v, &w)| v * w)
            .collect::<CompensatedSum<T>>()
            .value()
    }

    /// Push-forward under `x -> scale * x + shift`; `scale` must be positive.
    pub fn affine(&self, scale: T, shift: T) -> Result<Self> {
        if !(scale > T::zero()) || !scale.is_finite() || !shift.is_finite() {
            return Err(Error::InvalidArgument(
                "affine push-forward needs a positive finite scale".into(),
            ));
        }
        Ok(Self {
            values: self.values.iter().map(|&v| scale * v + shift).collect(),
            weights: self.weights.clone(),
            cumulative: self.cumulative.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorts_and_assigns_uniform_weights() {
        let d = EmpiricalDistribution::from_samples(&[3.0f64, 1.0, 2.0], None).unwrap();
        assert_eq!(d.values(), &[1.0, 2.0, 3.0]);
        for w in d.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_weighted_sample_normalizes_to_one() {
        let d = EmpiricalDistribution::from_samples(&[5.0], Some(&[2.0])).unwrap();
        assert_eq!(d.values(), &[5.0]);
        assert_eq!(d.weights(), &[1.0]);
    }

    #[test]
    fn ties_keep_their_own_weights() {
        let d = EmpiricalDistribution::from_samples(&[1.0, 1.0, 2.0], Some(&[1.0, 1.0, 2.0]))
            .unwrap();
        assert_eq!(d.values(), &[1.0, 1.0, 2.0]);
        assert_eq!(d.weights(), &[0.25, 0.25, 0.5]);
        assert_eq!(d.cumulative(), &[0.25, 0.5, 1.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            EmpiricalDistribution::<f64>::from_samples(&[], None),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            EmpiricalDistribution::from_samples(&[1.0, f64::NAN], None),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(matches!(
            EmpiricalDistribution::from_samples(&[1.0, 2.0], Some(&[1.0, 0.0])),
            Err(Error::NonPositiveWeight { index: 1, .. })
        ));
        assert!(matches!(
            EmpiricalDistribution::from_samples(&[1.0, 2.0], Some(&[1.0, -1.0])),
            Err(Error::NonPositiveWeight { .. })
        ));
        assert!(matches!(
            EmpiricalDistribution::from_samples(&[1.0, 2.0], Some(&[1.0])),
            Err(Error::LengthMismatch { .. })
        ));
        // Mass that vanishes after normalization is an error, not silently dropped.
        assert!(matches!(
            EmpiricalDistribution::from_samples(&[1.0, 2.0], Some(&[1.0, 1e-20])),
            Err(Error::NonPositiveWeight { index: 1, .. })
        ));
    }

    #[test]
    fn cdf_is_right_continuous() {
        let d = EmpiricalDistribution::uniform(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.cdf(2.0), 2.0 / 3.0);
        assert_eq!(d.cdf(2.0 - 1e-9), 1.0 / 3.0);
        let delta = EmpiricalDistribution::point_mass(0.0).unwrap();
        assert_eq!(delta.cdf(-1.0), 0.0);
        assert_eq!(delta.cdf(0.0), 1.0);
    }

    #[test]
    fn quantile_is_generalized_inverse() {
        let d = EmpiricalDistribution::uniform(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.quantile(0.5).unwrap(), 2.0);
        assert_eq!(d.quantile(1.0 / 3.0).unwrap(), 1.0);
        assert_eq!(d.quantile(1.0).unwrap(), 3.0);
        let delta = EmpiricalDistribution::point_mass(5.0).unwrap();
        for p in [1e-12, 0.3, 1.0] {
            assert_eq!(delta.quantile(p).unwrap(), 5.0);
        }
        assert!(matches!(d.quantile(0.0), Err(Error::ProbabilityOutOfRange(_))));
        assert!(matches!(d.quantile(1.5), Err(Error::ProbabilityOutOfRange(_))));
    }

    #[test]
    fn works_in_single_precision() {
        let d = EmpiricalDistribution::<f32>::uniform(&[0.5, -1.0]).unwrap();
        assert_eq!(d.values(), &[-1.0, 0.5]);
        assert_eq!(d.cdf(0.0), 0.5);
        assert_eq!(d.mean(), -0.25);
    }
}
