//! Closed-form scoring models and seeded generators for the synthetic
//! experiments.

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::metrics::FavorableSign;
use crate::ot::{wasserstein_1, EmpiricalDistribution};

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Piecewise-linear function of one variable, constant beyond its end knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(Error::InvalidParams(
                "piecewise-linear table needs matching, non-empty knots and values".into(),
            ));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParams("table knots must be strictly increasing".into()));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("table entries must be finite".into()));
        }
        Ok(Self { knots, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        let n = k.len();
        if x <= k[0] {
            return self.values[0];
        }
        if x >= k[n - 1] {
            return self.values[n - 1];
        }
        let hi = k.partition_point(|&t| t <= x);
        let lo = hi - 1;
        let w = (x - k[lo]) / (k[hi] - k[lo]);
        self.values[lo] + w * (self.values[hi] - self.values[lo])
    }
}

/// Functional form of a scoring model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// `c · x + b`.
    Linear { coefficients: Vec<f64>, intercept: f64 },
    /// `1 / (1 + exp(-(c · x + b)))`.
    LogisticLinear { coefficients: Vec<f64>, intercept: f64 },
    /// `b + Σ_i table_i(x_i)`.
    AdditiveTabular { tables: Vec<PiecewiseLinear>, intercept: f64 },
    /// Scores computed elsewhere; cannot be evaluated at new inputs.
    ExternalScores { arity: usize },
}

impl ModelKind {
    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Linear { .. } => "linear",
            ModelKind::LogisticLinear { .. } => "logistic_linear",
            ModelKind::AdditiveTabular { .. } => "additive_tabular",
            ModelKind::ExternalScores { .. } => "external_scores",
        }
    }
}

/// A scoring function together with its favorable direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ModelKind,
    pub favorable_sign: FavorableSign,
}

impl ModelSpec {
    pub fn linear(coefficients: Vec<f64>, intercept: f64, sign: FavorableSign) -> Self {
        Self {
            name: "linear".into(),
            kind: ModelKind::Linear { coefficients, intercept },
            favorable_sign: sign,
        }
    }

    pub fn logistic_linear(coefficients: Vec<f64>, intercept: f64, sign: FavorableSign) -> Self {
        Self {
            name: "logistic_linear".into(),
            kind: ModelKind::LogisticLinear { coefficients, intercept },
            favorable_sign: sign,
        }
    }

    pub fn additive(tables: Vec<PiecewiseLinear>, intercept: f64, sign: FavorableSign) -> Self {
        Self {
            name: "additive_tabular".into(),
            kind: ModelKind::AdditiveTabular { tables, intercept },
            favorable_sign: sign,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn arity(&self) -> usize {
        match &self.kind {
            ModelKind::Linear { coefficients, .. } | ModelKind::LogisticLinear { coefficients, .. } => {
                coefficients.len()
            }
            ModelKind::AdditiveTabular { tables, .. } => tables.len(),
            ModelKind::ExternalScores { arity } => *arity,
        }
    }

    pub fn is_evaluable(&self) -> bool {
        !matches!(self.kind, ModelKind::ExternalScores { .. })
    }

    /// True when `f(x) = b + Σ f_i(x_i)`.
    pub fn is_additive(&self) -> bool {
        matches!(
            self.kind,
            ModelKind::Linear { .. } | ModelKind::AdditiveTabular { .. }
        )
    }

    /// Checked evaluation.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if !self.is_evaluable() {
            return Err(Error::NotEvaluable(self.kind.label()));
        }
        if x.len() != self.arity() {
            return Err(Error::ArityMismatch {
                expected: self.arity(),
                actual: x.len(),
            });
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(self.score_unchecked(x))
    }

    /// Evaluation without arity or finiteness checks.
    ///
    /// # Panics
    /// For external-score models.
    #[inline]
    pub fn score_unchecked(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ModelKind::Linear { coefficients, intercept } => {
                intercept + dot(coefficients, x)
            }
            ModelKind::LogisticLinear { coefficients, intercept } => {
                logistic(intercept + dot(coefficients, x))
            }
            ModelKind::AdditiveTabular { tables, intercept } => {
                intercept + tables.iter().zip(x).map(|(t, &v)| t.eval(v)).sum::<f64>()
            }
            ModelKind::ExternalScores { .. } => {
                panic!("external-score models cannot be evaluated")
            }
        }
    }

    /// Scores every row of `features`.
    pub fn score_all(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        features.rows().map(|r| self.score(r)).collect()
    }

    /// Intercept and per-feature component `f_i(x_i)` for additive models.
    pub(crate) fn additive_component(&self, i: usize, x: f64) -> f64 {
        match &self.kind {
            ModelKind::Linear { coefficients, .. } => coefficients[i] * x,
            ModelKind::AdditiveTabular { tables, .. } => tables[i].eval(x),
            _ => unreachable!("not an additive model"),
        }
    }

    pub(crate) fn intercept(&self) -> f64 {
        match &self.kind {
            ModelKind::Linear { intercept, .. }
            | ModelKind::LogisticLinear { intercept, .. }
            | ModelKind::AdditiveTabular { intercept, .. } => *intercept,
            ModelKind::ExternalScores { .. } => 0.0,
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(Bias_W1(f | X, G), [f]_Lip · Σ_i W_1(X_i | G=0, X_i | G=1))` for a linear model.
///
/// The Lipschitz constant is taken with respect to `d(x, y) = Σ |x_i - y_i|`,
/// so it is `max_i |c_i|`. The coordinatewise sum equals the joint `W_1` when
/// predictors are independent within each class; otherwise it is only a
/// surrogate.
pub fn lipschitz_bound_check(
    model: &ModelSpec,
    features: &FeatureMatrix,
    protected: &[usize],
) -> Result<(f64, f64)> {
    let coefficients = match &model.kind {
        ModelKind::Linear { coefficients, .. } => coefficients,
        other => return Err(Error::NotLinear(other.label())),
    };
    if features.n_cols() != coefficients.len() {
        return Err(Error::ArityMismatch {
            expected: coefficients.len(),
            actual: features.n_cols(),
        });
    }
    let scores = model.score_all(features)?;
    let lhs = crate::metrics::model_bias(&scores, protected, model.favorable_sign)?.total;
    let lip = coefficients.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut coordinatewise = 0.0;
    for j in 0..features.n_cols() {
        let (a, b) = crate::metrics::split_by_class(&features.column(j), protected)?;
        coordinatewise += wasserstein_1(
            &EmpiricalDistribution::uniform(&a)?,
            &EmpiricalDistribution::uniform(&b)?,
        );
    }
    Ok((lhs, lip * coordinatewise))
}

/// Identifier of a synthetic data-generating model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelId {
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
    #[serde(rename = "EPS_TAU")]
    EpsTau,
    #[serde(rename = "ZERO_BIAS")]
    ZeroBias,
}

impl ModelId {
    pub const ALL: [ModelId; 8] = [
        ModelId::M1,
        ModelId::M2,
        ModelId::M3,
        ModelId::M4,
        ModelId::M5,
        ModelId::M6,
        ModelId::EpsTau,
        ModelId::ZeroBias,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelId::M1 => "M1",
            ModelId::M2 => "M2",
            ModelId::M3 => "M3",
            ModelId::M4 => "M4",
            ModelId::M5 => "M5",
            ModelId::M6 => "M6",
            ModelId::EpsTau => "EPS_TAU",
            ModelId::ZeroBias => "ZERO_BIAS",
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            ModelId::M1 | ModelId::M2 => 1,
            ModelId::M6 => 5,
            _ => 2,
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase().replace('-', "_");
        ModelId::ALL
            .into_iter()
            .find(|m| m.as_str() == up)
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

/// Parameters of the synthetic generators. Each model reads only the fields
/// it needs; [`SynthParams::default`] holds the reference values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub mu: f64,
    /// Group shift of M1.
    pub a: f64,
    pub tau: f64,
    pub sigma: f64,
    pub epsilon: f64,
    /// Per-feature group shifts of M6.
    pub shifts: Vec<f64>,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            mu: 5.0,
            a: 1.0,
            tau: 1.0,
            sigma: 1.0,
            epsilon: 0.1,
            shifts: [10.0, -4.0, 16.0, 1.0, -3.0].iter().map(|v| v / 20.0).collect(),
        }
    }
}

impl SynthParams {
    /// Sets a scalar field from `key=value` style input.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "mu" => self.mu = value,
            "a" => self.a = value,
            "tau" => self.tau = value,
            "sigma" => self.sigma = value,
            "epsilon" | "eps" => self.epsilon = value,
            other => return Err(Error::InvalidParams(format!("unknown parameter `{other}`"))),
        }
        Ok(())
    }

    fn validate(&self, id: ModelId) -> Result<()> {
        let all = [self.mu, self.a, self.tau, self.sigma, self.epsilon];
        if all.iter().chain(&self.shifts).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("parameters must be finite".into()));
        }
        match id {
            ModelId::M1 | ModelId::M2 if self.mu <= 0.0 => {
                Err(Error::InvalidParams("mu must be positive (std is sqrt(mu))".into()))
            }
            ModelId::EpsTau | ModelId::ZeroBias if self.sigma <= 0.0 => {
                Err(Error::InvalidParams("sigma must be positive".into()))
            }
            ModelId::EpsTau if self.tau <= 0.0 => {
                Err(Error::InvalidParams("tau must be positive".into()))
            }
            ModelId::M6 if self.shifts.len() != 5 => {
                Err(Error::InvalidParams("M6 needs exactly five shifts".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Samples drawn from one of the synthetic models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub feature_names: Vec<String>,
    pub features: FeatureMatrix,
    pub protected: Vec<usize>,
    /// Bernoulli labels for the classification models, `f(X)` for EPS_TAU.
    pub response: Option<Vec<f64>>,
    pub seed: u64,
}

/// Counter-mode uniform stream with inverse-CDF normals.
pub struct SeededStream {
    rng: ChaCha20Rng,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * inverse_normal_cdf(self.uniform())
    }
}

/// Acklam's rational approximation of the standard normal quantile
/// (relative error below 1.2e-9 on (0, 1)).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// The true scoring model of a synthetic experiment.
pub fn true_model(id: ModelId, params: &SynthParams) -> Result<ModelSpec> {
    params.validate(id)?;
    let p = params;
    let down = FavorableSign::Down;
    let spec = match id {
        ModelId::M1 | ModelId::M2 => ModelSpec::logistic_linear(vec![-1.0], p.mu, down),
        // Favorable direction is up here; see the M3 note in the README.
        ModelId::M3 => ModelSpec::logistic_linear(vec![-1.0, -1.0], 2.0 * p.mu, FavorableSign::Up),
        ModelId::M4 | ModelId::M5 => ModelSpec::logistic_linear(vec![-1.0, -1.0], 2.0 * p.mu, down),
        ModelId::M6 => ModelSpec::logistic_linear(vec![1.0; 5], -24.5, down),
        ModelId::EpsTau => ModelSpec::linear(vec![p.epsilon / p.tau, 1.0], 0.0, down),
        ModelId::ZeroBias => ModelSpec::linear(vec![1.0, 1.0], 0.0, down),
    };
    Ok(spec.with_name(id.as_str()))
}

/// Draws `n` samples from model `id`, deterministically in `seed`.
///
/// Each row consumes the stream in a fixed order: the class `G` (uniform on
/// {0, 1}), then one normal per feature, then the label when the model has one.
pub fn generate(
    id: ModelId,
    params: &SynthParams,
    n: usize,
    seed: u64,
) -> Result<(SyntheticDataset, ModelSpec)> {
    if n == 0 {
        return Err(Error::InvalidParams("sample size must be at least 1".into()));
    }
    let model = true_model(id, params)?;
    let p = params;
    let k = id.n_features();
    let mut stream = SeededStream::new(seed);
    let mut data = Vec::with_capacity(n * k);
    let mut protected = Vec::with_capacity(n);
    let labelled = !matches!(id, ModelId::ZeroBias);
    let mut response = Vec::with_capacity(if labelled { n } else { 0 });
    let mut row = vec![0.0; k];

    for _ in 0..n {
        let g = usize::from(stream.uniform() >= 0.5);
        let gf = g as f64;
        match id {
            ModelId::M1 => row[0] = stream.normal(p.mu - p.a * gf, p.mu.sqrt()),
            ModelId::M2 => row[0] = stream.normal(p.mu, (1.0 + gf) * p.mu.sqrt()),
            ModelId::M3 => {
                row[0] = stream.normal(p.mu + gf, 1.0);
                row[1] = stream.normal(p.mu - gf, 1.0);
            }
            ModelId::M4 => {
                row[0] = stream.normal(p.mu, 1.0 + gf);
                row[1] = stream.normal(p.mu, 1.0 + gf);
            }
            ModelId::M5 => {
                row[0] = stream.normal(p.mu, 2.0 - gf);
                row[1] = stream.normal(p.mu, 1.0 + gf);
            }
            ModelId::M6 => {
                let stds = [0.5 + gf, 1.0, 1.0, 1.0 - 0.5 * gf, 1.0 - 0.75 * gf];
                for i in 0..5 {
                    row[i] = stream.normal(p.mu - p.shifts[i] * (1.0 - gf), stds[i]);
                }
            }
            ModelId::EpsTau => {
                row[0] = stream.normal(p.tau * gf, p.sigma);
                row[1] = stream.normal(0.0, p.sigma);
            }
            ModelId::ZeroBias => {
                row[0] = stream.normal(p.mu + p.tau * gf, p.sigma);
                row[1] = stream.normal(p.mu - p.tau * gf, p.sigma);
            }
        }
        if labelled {
            let f = model.score_unchecked(&row);
            let y = if id == ModelId::EpsTau {
                f
            } else {
                f64::from(u8::from(stream.uniform() < f))
            };
            response.push(y);
        }
        protected.push(g);
        data.extend_from_slice(&row);
    }

    let dataset = SyntheticDataset {
        feature_names: (1..=k).map(|i| format!("x{i}")).collect(),
        features: FeatureMatrix::new(n, k, data)?,
        protected,
        response: labelled.then_some(response),
        seed,
    };
    Ok((dataset, model))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_closed_form_models() {
        let m1 = true_model(ModelId::M1, &SynthParams::default()).unwrap();
        assert_eq!(m1.score(&[5.0]).unwrap(), 0.5);
        let lin = ModelSpec::linear(vec![1.0, 1.0], 0.0, FavorableSign::Up);
        assert_eq!(lin.score(&[2.0, 3.0]).unwrap(), 5.0);
        let sat = ModelSpec::logistic_linear(vec![-1.0], 0.0, FavorableSign::Up);
        assert!(sat.score(&[50.0]).unwrap() < 1e-9);
        assert!(sat.score(&[-800.0]).unwrap() <= 1.0);
    }

    #[test]
    fn score_errors() {
        let lin = ModelSpec::linear(vec![1.0, 1.0], 0.0, FavorableSign::Up);
        assert!(matches!(lin.score(&[1.0]), Err(Error::ArityMismatch { .. })));
        assert!(matches!(lin.score(&[1.0, f64::INFINITY]), Err(Error::NonFinite { index: 1 })));
        let ext = ModelSpec {
            name: "ext".into(),
            kind: ModelKind::ExternalScores { arity: 2 },
            favorable_sign: FavorableSign::Up,
        };
        assert!(matches!(ext.score(&[1.0, 2.0]), Err(Error::NotEvaluable(_))));
    }

    #[test]
    fn piecewise_table_interpolates_and_clamps() {
        let t = PiecewiseLinear::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 0.0]).unwrap();
        assert_eq!(t.eval(-1.0), 0.0);
        assert_eq!(t.eval(0.5), 1.0);
        assert_eq!(t.eval(2.0), 1.0);
        assert_eq!(t.eval(9.0), 0.0);
        assert!(PiecewiseLinear::new(vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn model_spec_json_round_trip() {
        let m = true_model(ModelId::M6, &SynthParams::default()).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"kind\":\"logistic_linear\""));
        assert!(s.contains("\"favorable_sign\":-1"));
        let back: ModelSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn model_ids_parse() {
        assert_eq!("eps_tau".parse::<ModelId>().unwrap(), ModelId::EpsTau);
        assert_eq!("ZERO-BIAS".parse::<ModelId>().unwrap(), ModelId::ZeroBias);
        assert!(matches!("M7".parse::<ModelId>(), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn inverse_normal_cdf_reference_points() {
        assert!(inverse_normal_cdf(0.5).abs() < 1e-12);
        assert!((inverse_normal_cdf(0.975) - 1.959963984540054).abs() < 1e-8);
        assert!((inverse_normal_cdf(0.001) + 3.090232306167813).abs() < 1e-8);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = SynthParams::default();
        p.sigma = 0.0;
        assert!(generate(ModelId::ZeroBias, &p, 10, 1).is_err());
        assert!(generate(ModelId::M3, &SynthParams::default(), 0, 1).is_err());
        let mut p = SynthParams::default();
        p.shifts.pop();
        assert!(generate(ModelId::M6, &p, 10, 1).is_err());
        assert!(SynthParams::default().set("nope", 1.0).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let p = SynthParams::default();
        let (a, _) = generate(ModelId::M6, &p, 500, 11).unwrap();
        let (b, _) = generate(ModelId::M6, &p, 500, 11).unwrap();
        let (c, _) = generate(ModelId::M6, &p, 500, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.features, c.features);
        assert!(a.protected.contains(&0));
    }
}
