//! Distribution-level model bias: `W_1` bias with its positive, negative and
//! net parts, classifier and quantile bias curves, group-based parity, and
//! renormalization.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ot::{merged_segments, signed_efforts, EmpiricalDistribution, TransportDecomposition};
use crate::scalar::{CompensatedSum, Scalar};

/// Direction in which larger model outputs benefit the scored individual.
///
/// Serialized as `+1` / `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FavorableSign {
    /// Larger outputs are favorable.
    Up,
    /// Smaller outputs are favorable (e.g. a default probability).
    Down,
}

impl FavorableSign {
    pub fn as_i8(self) -> i8 {
        match self {
            FavorableSign::Up => 1,
            FavorableSign::Down => -1,
        }
    }

    pub fn value<T: Scalar>(self) -> T {
        match self {
            FavorableSign::Up => T::one(),
            FavorableSign::Down => -T::one(),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            FavorableSign::Up => FavorableSign::Down,
            FavorableSign::Down => FavorableSign::Up,
        }
    }

    pub fn from_i64(v: i64) -> Result<Self> {
        match v {
            1 => Ok(FavorableSign::Up),
            -1 => Ok(FavorableSign::Down),
            other => Err(Error::InvalidArgument(format!(
                "favorable sign must be +1 or -1, got {other}"
            ))),
        }
    }
}

impl Serialize for FavorableSign {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.as_i8())
    }
}

impl<'de> Deserialize<'de> for FavorableSign {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        FavorableSign::from_i64(v).map_err(serde::de::Error::custom)
    }
}

/// `W_1` model bias split into the parts that disadvantage (positive) and
/// advantage (negative) the protected class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BiasReport<T> {
    pub total: T,
    pub positive: T,
    pub negative: T,
    pub net: T,
    pub favorable_sign: FavorableSign,
    pub metric: String,
}

impl<T: Scalar> BiasReport<T> {
    /// Reads positive/negative parts off the transport efforts of moving the
    /// class-0 distribution onto the class-1 distribution.
    ///
    /// With an upward favorable direction, the positive part is the mass where
    /// the protected quantile lies below the non-protected one (left effort).
    pub fn from_efforts(
        efforts: &TransportDecomposition<T>,
        sign: FavorableSign,
        metric: impl Into<String>,
    ) -> Self {
        let (positive, negative) = match sign {
            FavorableSign::Up => (efforts.left_effort, efforts.right_effort),
            FavorableSign::Down => (efforts.right_effort, efforts.left_effort),
        };
        Self {
            total: efforts.total,
            positive,
            negative,
            net: positive - negative,
            favorable_sign: sign,
            metric: metric.into(),
        }
    }

    pub fn zero(sign: FavorableSign, metric: impl Into<String>) -> Self {
        Self {
            total: T::zero(),
            positive: T::zero(),
            negative: T::zero(),
            net: T::zero(),
            favorable_sign: sign,
            metric: metric.into(),
        }
    }
}

/// Splits `values` by a binary protected attribute.
pub fn split_by_class<T: Copy>(values: &[T], protected: &[usize]) -> Result<(Vec<T>, Vec<T>)> {
    if values.len() != protected.len() {
        return Err(Error::LengthMismatch {
            expected: values.len(),
            actual: protected.len(),
        });
    }
    if values.is_empty() {
        return Err(Error::EmptyInput("scores"));
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (&v, &g) in values.iter().zip(protected) {
        match g {
            0 => a.push(v),
            1 => b.push(v),
            other => return Err(Error::InvalidLabel(other)),
        }
    }
    if a.is_empty() {
        return Err(Error::MissingClass(0));
    }
    if b.is_empty() {
        return Err(Error::MissingClass(1));
    }
    Ok((a, b))
}

fn check_finite<T: Scalar>(values: &[T]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Bias between two explicit subpopulation samples.
pub fn bias_between<T: Scalar>(
    class0: &[T],
    class1: &[T],
    sign: FavorableSign,
    metric: &str,
) -> Result<BiasReport<T>> {
    let d0 = EmpiricalDistribution::uniform(class0)?;
    let d1 = EmpiricalDistribution::uniform(class1)?;
    Ok(BiasReport::from_efforts(&signed_efforts(&d0, &d1, 1), sign, metric))
}

/// `W_1` model bias of `scores` between the classes `G = 0` and `G = 1`.
pub fn model_bias<T: Scalar>(
    scores: &[T],
    protected: &[usize],
    sign: FavorableSign,
) -> Result<BiasReport<T>> {
    check_finite(scores)?;
    let (a, b) = split_by_class(scores, protected)?;
    bias_between(&a, &b, sign, "wasserstein_1")
}

/// Which bias curve a [`BiasCurve`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Classifier,
    Quantile,
}

/// Signed bias evaluated on a grid, together with the subpopulation curves
/// and quadrature weights that integrate it.
///
/// For classifier curves `first`/`second` are `F0(t)`/`F1(t)`; for quantile
/// curves they are `F0^{-1}(p)`/`F1^{-1}(p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BiasCurve<T> {
    pub kind: CurveKind,
    pub grid: Vec<T>,
    pub first: Vec<T>,
    pub second: Vec<T>,
    pub signed_values: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> BiasCurve<T> {
    /// `∫ |curve|` under the stored quadrature.
    pub fn integral_abs(&self) -> T {
        self.weighted(|v| v.abs())
    }

    /// `∫ max(curve, 0)`.
    pub fn integral_positive(&self) -> T {
        self.weighted(|v| v.max(T::zero()))
    }

    /// `∫ max(-curve, 0)`.
    pub fn integral_negative(&self) -> T {
        self.weighted(|v| (-v).max(T::zero()))
    }

    fn weighted(&self, f: impl Fn(T) -> T) -> T {
        self.signed_values
            .iter()
            .zip(&self.weights)
            .map(|(&v, &w)| f(v) * w)
            .collect::<CompensatedSum<T>>()
            .value()
    }

    pub fn csv_header(&self) -> [&'static str; 4] {
        match self.kind {
            CurveKind::Classifier => ["t", "F0", "F1", "signed_classifier_bias"],
            CurveKind::Quantile => ["p", "q0", "q1", "signed_quantile_bias"],
        }
    }

    /// Writes the curve as CSV with the columns of [`BiasCurve::csv_header`].
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.csv_header())?;
        for k in 0..self.grid.len() {
            out.write_record([
                fmt_num(self.grid[k]),
                fmt_num(self.first[k]),
                fmt_num(self.second[k]),
                fmt_num(self.signed_values[k]),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<curve>", e))?;
        Ok(())
    }
}

/// Shortest round-trip decimal form.
pub(crate) fn fmt_num<T: Scalar>(v: T) -> String {
    format!("{v:?}")
}

fn class_distributions<T: Scalar>(
    scores: &[T],
    protected: &[usize],
) -> Result<(EmpiricalDistribution<T>, EmpiricalDistribution<T>)> {
    check_finite(scores)?;
    let (a, b) = split_by_class(scores, protected)?;
    Ok((
        EmpiricalDistribution::uniform(&a)?,
        EmpiricalDistribution::uniform(&b)?,
    ))
}

/// Signed statistical-parity bias `(F1(t) - F0(t)) · ς` on a threshold grid.
///
/// Without a grid, uses every distinct score plus the midpoints between
/// consecutive ones; the left-endpoint weights then integrate the step
/// functions exactly.
pub fn classifier_bias_curve<T: Scalar>(
    scores: &[T],
    protected: &[usize],
    sign: FavorableSign,
    grid: Option<&[T]>,
) -> Result<BiasCurve<T>> {
    let (d0, d1) = class_distributions(scores, protected)?;
    let grid: Vec<T> = match grid {
        Some(g) => {
            if g.windows(2).any(|w| !(w[0] <= w[1])) {
                return Err(Error::InvalidArgument("threshold grid must be sorted".into()));
            }
            g.to_vec()
        }
        None => default_threshold_grid(&d0, &d1),
    };
    let s = sign.value::<T>();
    let first: Vec<T> = grid.iter().map(|&t| d0.cdf(t)).collect();
    let second: Vec<T> = grid.iter().map(|&t| d1.cdf(t)).collect();
    let signed_values = first.iter().zip(&second).map(|(&a, &b)| (b - a) * s).collect();
    let mut weights: Vec<T> = grid.windows(2).map(|w| w[1] - w[0]).collect();
    if !grid.is_empty() {
        weights.push(T::zero());
    }
    Ok(BiasCurve {
        kind: CurveKind::Classifier,
        grid,
        first,
        second,
        signed_values,
        weights,
    })
}

fn default_threshold_grid<T: Scalar>(
    d0: &EmpiricalDistribution<T>,
    d1: &EmpiricalDistribution<T>,
) -> Vec<T> {
    let mut pts: Vec<T> = d0.values().iter().chain(d1.values()).copied().collect();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    pts.dedup();
    let half = T::lit(0.5);
    let mut grid = Vec::with_capacity(2 * pts.len());
    for (k, &v) in pts.iter().enumerate() {
        grid.push(v);
        if let Some(&next) = pts.get(k + 1) {
            let mid = v + (next - v) * half;
            if mid > v && mid < next {
                grid.push(mid);
            }
        }
    }
    grid
}

/// Signed quantile bias `(F0^{-1}(p) - F1^{-1}(p)) · ς` on a probability grid.
///
/// Without a grid, uses the midpoint of every merged-breakpoint segment
/// weighted by its length, so the stored quadrature is exact. A user grid gets
/// nearest-point cells clipped to `(0, 1)`.
pub fn quantile_bias_curve<T: Scalar>(
    scores: &[T],
    protected: &[usize],
    sign: FavorableSign,
    p_grid: Option<&[T]>,
) -> Result<BiasCurve<T>> {
    let (d0, d1) = class_distributions(scores, protected)?;
    let s = sign.value::<T>();
    let half = T::lit(0.5);
    let (grid, weights) = match p_grid {
        None => merged_segments(&d0, &d1)
            .map(|(lo, hi, _, _)| (lo + (hi - lo) * half, hi - lo))
            .unzip(),
        Some(g) => {
            if g.iter().any(|&p| !(p > T::zero() && p < T::one())) {
                return Err(Error::InvalidArgument("quantile grid must lie in (0, 1)".into()));
            }
            if g.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidArgument("quantile grid must be increasing".into()));
            }
            let mut weights = Vec::with_capacity(g.len());
            for k in 0..g.len() {
                let lo = if k == 0 { T::zero() } else { (g[k - 1] + g[k]) * half };
                let hi = if k + 1 == g.len() { T::one() } else { (g[k] + g[k + 1]) * half };
                weights.push(hi - lo);
            }
            (g.to_vec(), weights)
        }
    };
    let first: Vec<T> = grid.iter().map(|&p| d0.quantile_unchecked(p)).collect();
    let second: Vec<T> = grid.iter().map(|&p| d1.quantile_unchecked(p)).collect();
    let signed_values = first.iter().zip(&second).map(|(&a, &b)| (a - b) * s).collect();
    Ok(BiasCurve {
        kind: CurveKind::Quantile,
        grid,
        first,
        second,
        signed_values,
        weights,
    })
}

/// Where a parity check is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParityPoint<T> {
    /// Probability level `p` in `(0, 1]`.
    Quantile(T),
    /// Threshold `t`, mapped to `p = F0(t)`.
    Threshold(T),
}

/// Quantile (geometric) parity: `|F0^{-1}(p) - F1^{-1}(p)| <= tol`.
pub fn geometric_parity_check<T: Scalar>(
    scores: &[T],
    protected: &[usize],
    at: ParityPoint<T>,
    tol: T,
) -> Result<bool> {
    let (d0, d1) = class_distributions(scores, protected)?;
    let p = match at {
        ParityPoint::Quantile(p) => p,
        ParityPoint::Threshold(t) => d0.cdf(t),
    };
    let gap = d0.quantile(p)? - d1.quantile(p)?;
    Ok(gap.abs() <= tol)
}

/// Statistical parity at threshold `t`: `|F1(t) - F0(t)| <= tol`.
pub fn statistical_parity_check<T: Scalar>(
    scores: &[T],
    protected: &[usize],
    t: T,
    tol: T,
) -> Result<bool> {
    let (d0, d1) = class_distributions(scores, protected)?;
    Ok((d1.cdf(t) - d0.cdf(t)).abs() <= tol)
}

/// Parity defined through events `A_m` and per-cell weights `w_km`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupParitySpec {
    /// Number of protected classes `K >= 2`; labels run over `0..K`.
    pub n_classes: usize,
    /// Event masks over the samples, pairwise disjoint.
    pub events: Vec<Vec<bool>>,
    /// `weights[k - 1][m]` for `k = 1..K`. Defaults to uniform over the
    /// non-empty cells.
    pub weights: Option<Vec<Vec<f64>>>,
}

impl GroupParitySpec {
    /// Classic two-class parity: one event covering every sample.
    pub fn binary(n: usize) -> Self {
        Self {
            n_classes: 2,
            events: vec![vec![true; n]],
            weights: Some(vec![vec![1.0]]),
        }
    }

    /// Equalized-odds style events `{Y = 0}` and `{Y = 1}`.
    pub fn from_labels(n_classes: usize, labels: &[bool]) -> Self {
        Self {
            n_classes,
            events: vec![
                labels.iter().map(|&y| !y).collect(),
                labels.to_vec(),
            ],
            weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityCell {
    pub class: usize,
    pub event: usize,
    pub weight: f64,
    /// `None` when the cell is empty (and therefore has weight 0).
    pub report: Option<BiasReport<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupParityResult {
    pub cells: Vec<ParityCell>,
    pub aggregate: BiasReport<f64>,
}

/// Weighted `W_1` bias over the cells `(A_0m, A_km)`.
pub fn group_parity_bias(
    scores: &[f64],
    protected: &[usize],
    spec: &GroupParitySpec,
    sign: FavorableSign,
) -> Result<GroupParityResult> {
    let n = scores.len();
    if protected.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: protected.len(),
        });
    }
    check_finite(scores)?;
    let k_classes = spec.n_classes;
    if k_classes < 2 {
        return Err(Error::InvalidParity("need at least two classes".into()));
    }
    if let Some(&g) = protected.iter().find(|&&g| g >= k_classes) {
        return Err(Error::InvalidLabel(g));
    }
    let m_events = spec.events.len();
    if m_events == 0 {
        return Err(Error::InvalidParity("need at least one event".into()));
    }
    if let Some(e) = spec.events.iter().find(|e| e.len() != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: e.len(),
        });
    }
    for i in 0..n {
        if spec.events.iter().filter(|e| e[i]).count() > 1 {
            return Err(Error::InvalidParity(format!("events overlap at sample {i}")));
        }
    }

    // members[k][m] = scores of class k inside event m
    let mut members = vec![vec![Vec::new(); m_events]; k_classes];
    for i in 0..n {
        if let Some(m) = spec.events.iter().position(|e| e[i]) {
            members[protected[i]][m].push(scores[i]);
        }
    }
    let non_empty =
        |k: usize, m: usize| !members[0][m].is_empty() && !members[k][m].is_empty();

    let weights: Vec<Vec<f64>> = match &spec.weights {
        Some(w) => {
            if w.len() != k_classes - 1 || w.iter().any(|r| r.len() != m_events) {
                return Err(Error::InvalidParity(format!(
                    "weights must be a {} x {} table",
                    k_classes - 1,
                    m_events
                )));
            }
            if w.iter().flatten().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidParity("weights must be non-negative".into()));
            }
            let sum: f64 = w.iter().flatten().copied().collect::<CompensatedSum<f64>>().value();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParity(format!("weights sum to {sum}, not 1")));
            }
            w.clone()
        }
        None => {
            let count = (1..k_classes)
                .flat_map(|k| (0..m_events).map(move |m| (k, m)))
                .filter(|&(k, m)| non_empty(k, m))
                .count();
            if count == 0 {
                return Err(Error::InvalidParity("every cell is empty".into()));
            }
            let w = 1.0 / count as f64;
            (1..k_classes)
                .map(|k| {
                    (0..m_events)
                        .map(|m| if non_empty(k, m) { w } else { 0.0 })
                        .collect()
                })
                .collect()
        }
    };

    let mut cells = Vec::new();
    let (mut total, mut pos, mut neg, mut net) = (
        CompensatedSum::<f64>::new(),
        CompensatedSum::<f64>::new(),
        CompensatedSum::<f64>::new(),
        CompensatedSum::<f64>::new(),
    );
    for k in 1..k_classes {
        for m in 0..m_events {
            let weight = weights[k - 1][m];
            let report = if non_empty(k, m) {
                Some(bias_between(&members[0][m], &members[k][m], sign, "wasserstein_1")?)
            } else if weight > 0.0 {
                return Err(Error::InvalidParity(format!(
                    "cell (class {k}, event {m}) is empty but has weight {weight}"
                )));
            } else {
                None
            };
            if let Some(r) = &report {
                total.add(weight * r.total);
                pos.add(weight * r.positive);
                neg.add(weight * r.negative);
                net.add(weight * r.net);
            }
            cells.push(ParityCell {
                class: k,
                event: m,
                weight,
                report,
            });
        }
    }
    Ok(GroupParityResult {
        cells,
        aggregate: BiasReport {
            total: total.value(),
            positive: pos.value(),
            negative: neg.value(),
            net: net.value(),
            favorable_sign: sign,
            metric: "group_parity_wasserstein_1".into(),
        },
    })
}

/// Increasing map of `[0, ∞)` onto `[0, 1)` that is the identity on `[0, 0.5]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkFunction {
    /// `1 - 0.5 exp(-2 (x - 0.5))` beyond 0.5.
    #[default]
    Exponential,
    /// `1 - 0.25 / x` beyond 0.5.
    Reciprocal,
}

impl LinkFunction {
    pub fn apply(self, x: f64) -> f64 {
        if x <= 0.5 {
            return x;
        }
        match self {
            LinkFunction::Exponential => 1.0 - 0.5 * (-2.0 * (x - 0.5)).exp(),
            LinkFunction::Reciprocal => 1.0 - 0.25 / x,
        }
    }
}

/// `g(total / L)` for scores whose natural scale is `L`.
pub fn renormalized_bias(report: &BiasReport<f64>, bound: f64, link: LinkFunction) -> Result<f64> {
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(Error::InvalidArgument(format!("scale L must be positive, got {bound}")));
    }
    Ok(link.apply(report.total / bound))
}
