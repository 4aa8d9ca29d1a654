//! Per-predictor bias explanations, explainer-level classifier bias, and
//! greedy neutralization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::explain::{attribute_dataset, AttributionMatrix, Background, ExplainerKind, GameSpec};
use crate::metrics::{model_bias, split_by_class, BiasReport, FavorableSign};
use crate::models::ModelSpec;
use crate::ot::EmpiricalDistribution;
use crate::scalar::CompensatedSum;

/// Transport bias of one explainer column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasExplanationRow {
    pub feature: String,
    pub beta: f64,
    pub beta_pos: f64,
    pub beta_neg: f64,
    pub beta_net: f64,
}

impl BiasExplanationRow {
    fn from_report(feature: String, r: &BiasReport<f64>) -> Self {
        Self {
            feature,
            beta: r.total,
            beta_pos: r.positive,
            beta_neg: r.negative,
            beta_net: r.net,
        }
    }
}

/// Key for ordering bias explanation plots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BepSortKey {
    #[default]
    Beta,
    BetaPos,
    BetaNet,
}

/// Rows sorted by `key`, largest first; ties keep feature order.
pub fn sort_rows(rows: &[BiasExplanationRow], key: BepSortKey) -> Vec<BiasExplanationRow> {
    let mut out = rows.to_vec();
    let k = |r: &BiasExplanationRow| match key {
        BepSortKey::Beta => r.beta,
        BepSortKey::BetaPos => r.beta_pos,
        BepSortKey::BetaNet => r.beta_net,
    };
    out.sort_by(|a, b| k(b).total_cmp(&k(a)));
    out
}

pub fn write_bep_csv<W: std::io::Write>(rows: &[BiasExplanationRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["feature", "beta", "beta_pos", "beta_neg", "beta_net"])?;
    for r in rows {
        out.write_record([
            r.feature.clone(),
            format!("{:?}", r.beta),
            format!("{:?}", r.beta_pos),
            format!("{:?}", r.beta_neg),
            format!("{:?}", r.beta_net),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<bep>", e))?;
    Ok(())
}

/// `β_i`, `β_i^±` and `β_i^net` for every explainer column. The explainers
/// share the model's favorable direction.
pub fn bias_explanations(
    attr: &AttributionMatrix,
    protected: &[usize],
    sign: FavorableSign,
) -> Result<Vec<BiasExplanationRow>> {
    if attr.values.n_rows() != protected.len() {
        return Err(Error::LengthMismatch {
            expected: attr.values.n_rows(),
            actual: protected.len(),
        });
    }
    (0..attr.n_features())
        .into_par_iter()
        .map(|j| {
            let r = model_bias(&attr.column(j), protected, sign)?;
            Ok(BiasExplanationRow::from_report(attr.feature_names[j].clone(), &r))
        })
        .collect()
}

/// `(F_{E|G=1}(t) - F_{E|G=0}(t)) · ς` for one explainer column.
pub fn explainer_classifier_bias(
    column: &[f64],
    protected: &[usize],
    sign: FavorableSign,
    t: f64,
) -> Result<f64> {
    let (a, b) = split_by_class(column, protected)?;
    let d0 = EmpiricalDistribution::uniform(&a)?;
    let d1 = EmpiricalDistribution::uniform(&b)?;
    Ok((d1.cdf(t) - d0.cdf(t)) * sign.value::<f64>())
}

/// `(Bias^net(f), Σ_i β_i^net)` for an additive model and a marginal explainer.
pub fn additive_model_net_identity(
    model: &ModelSpec,
    data: &FeatureMatrix,
    protected: &[usize],
    explainer: ExplainerKind,
    background: &Background,
) -> Result<(f64, f64)> {
    if !model.is_additive() {
        return Err(Error::NotAdditive(model.kind.label()));
    }
    if explainer == ExplainerKind::ConditionalShapley {
        return Err(Error::InvalidArgument(
            "the additive identity holds for marginal explainers only".into(),
        ));
    }
    let scores = model.score_all(data)?;
    let lhs = model_bias(&scores, protected, model.favorable_sign)?.net;
    let attr = attribute_dataset(model, data, explainer, &GameSpec::marginal(), background, None)?;
    let rows = bias_explanations(&attr, protected, model.favorable_sign)?;
    let rhs = rows.iter().map(|r| r.beta_net).collect::<CompensatedSum<f64>>().value();
    Ok((lhs, rhs))
}

/// Scores of `f(x*_S, x_{-S})`.
pub fn neutralize(
    model: &ModelSpec,
    data: &FeatureMatrix,
    features: &[usize],
    reference: &[f64],
) -> Result<Vec<f64>> {
    let n = model.arity();
    if reference.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: reference.len(),
        });
    }
    if let Some(index) = reference.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    if let Some(&index) = features.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index, n });
    }
    let mut buf = vec![0.0; n];
    data.rows()
        .map(|row| {
            buf.copy_from_slice(row);
            for &i in features {
                buf[i] = reference[i];
            }
            model.score(&buf)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MitigationOptions {
    /// A step that would push the net bias below `-z · se` is not taken,
    /// where `se` is the standard error of the class mean difference; the
    /// loop only starts when the net bias exceeds `z · se`. `z = 0` gives
    /// the plain sign rule.
    pub z: f64,
}

impl Default for MitigationOptions {
    fn default() -> Self {
        Self { z: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationStep {
    pub feature: String,
    pub feature_index: usize,
    pub beta_net: f64,
    /// Model bias after neutralizing this and every earlier feature.
    pub report: BiasReport<f64>,
    /// `false` for the final step that was evaluated but not taken.
    pub applied: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    NotPositivelyBiased,
    NoPositiveExplanations,
    WouldCross,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationTrace {
    pub initial: BiasReport<f64>,
    pub steps: Vec<MitigationStep>,
    pub reference_values: Vec<f64>,
    pub stopped: StopReason,
    pub z: f64,
}

impl MitigationTrace {
    pub fn applied_steps(&self) -> impl Iterator<Item = &MitigationStep> {
        self.steps.iter().filter(|s| s.applied)
    }

    /// Report of the last applied step, or the initial one.
    pub fn final_report(&self) -> &BiasReport<f64> {
        self.applied_steps().last().map_or(&self.initial, |s| &s.report)
    }
}

fn mean_difference_se(scores: &[f64], protected: &[usize]) -> Result<f64> {
    let (a, b) = split_by_class(scores, protected)?;
    let var_over_n = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n * (n - 1.0).max(1.0))
    };
    Ok((var_over_n(&a) + var_over_n(&b)).sqrt())
}

/// Neutralizes positively net-biased features one at a time, largest
/// `β^net` first, until the next step would flip the model into net
/// negative bias.
///
/// Explanations are computed once on the original model. `reference`
/// defaults to the background means.
#[allow(clippy::too_many_arguments)]
pub fn greedy_mitigation(
    model: &ModelSpec,
    data: &FeatureMatrix,
    protected: &[usize],
    explainer: ExplainerKind,
    spec: &GameSpec,
    background: &Background,
    reference: Option<&[f64]>,
    options: MitigationOptions,
    names: Option<&[String]>,
) -> Result<MitigationTrace> {
    let sign = model.favorable_sign;
    let reference = reference.unwrap_or(background.means()).to_vec();
    let scores = model.score_all(data)?;
    let initial = model_bias(&scores, protected, sign)?;
    let z = options.z;
    let mut trace = MitigationTrace {
        initial: initial.clone(),
        steps: Vec::new(),
        reference_values: reference.clone(),
        stopped: StopReason::NotPositivelyBiased,
        z,
    };
    if initial.net <= z * mean_difference_se(&scores, protected)? {
        return Ok(trace);
    }

    let attr = attribute_dataset(model, data, explainer, spec, background, names)?;
    let rows = bias_explanations(&attr, protected, sign)?;
    let mut order: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].beta_net > 0.0).collect();
    order.sort_by(|&a, &b| rows[b].beta_net.total_cmp(&rows[a].beta_net));
    if order.is_empty() {
        trace.stopped = StopReason::NoPositiveExplanations;
        return Ok(trace);
    }

    let mut neutralized = Vec::new();
    trace.stopped = StopReason::Exhausted;
    for i in order {
        neutralized.push(i);
        let after = neutralize(model, data, &neutralized, &reference)?;
        let report = model_bias(&after, protected, sign)?;
        let crosses = report.net < -z * mean_difference_se(&after, protected)?;
        trace.steps.push(MitigationStep {
            feature: rows[i].feature.clone(),
            feature_index: i,
            beta_net: rows[i].beta_net,
            report,
            applied: !crosses,
        });
        if crosses {
            trace.stopped = StopReason::WouldCross;
            break;
        }
    }
    Ok(trace)
}
