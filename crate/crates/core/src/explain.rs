//! Single-feature and group explainers: partial dependence, marginal and
//! conditional coalition games, and their exact Shapley values.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::models::{logistic, ModelKind, ModelSpec};
use crate::scalar::CompensatedSum;
use crate::shapley::{check_player_count, coalition_weights, mask_of};

/// Above this many cached partial sums the logistic fast path is skipped.
const LOGISTIC_TABLE_LIMIT: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameKind {
    /// `E[f(x_S, X_{-S})]` with `X_{-S}` drawn from the background.
    Marginal,
    /// `E[f(X) | X_S = x_S]`, estimated by nearest neighbours.
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainerKind {
    /// `E_i(x) = v^ME({i}; x)`, the one-feature partial dependence.
    PdpSingle,
    MarginalShapley,
    ConditionalShapley,
}

impl ExplainerKind {
    pub fn game(self) -> GameKind {
        match self {
            ExplainerKind::PdpSingle | ExplainerKind::MarginalShapley => GameKind::Marginal,
            ExplainerKind::ConditionalShapley => GameKind::Conditional,
        }
    }

    pub fn is_shapley(self) -> bool {
        !matches!(self, ExplainerKind::PdpSingle)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExplainerKind::PdpSingle => "pdp_single",
            ExplainerKind::MarginalShapley => "marginal_shapley",
            ExplainerKind::ConditionalShapley => "conditional_shapley",
        }
    }
}

/// Base game and estimator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub game: GameKind,
    /// Neighbour count of the conditional estimator; `ceil(sqrt(B))` if unset.
    pub knn_k: Option<usize>,
    /// Scale each coordinate by its background standard deviation before
    /// measuring neighbour distances.
    pub standardize: bool,
}

impl GameSpec {
    pub fn marginal() -> Self {
        Self {
            game: GameKind::Marginal,
            knn_k: None,
            standardize: true,
        }
    }

    pub fn conditional(knn_k: Option<usize>) -> Self {
        Self {
            game: GameKind::Conditional,
            knn_k,
            standardize: true,
        }
    }

    pub fn with_game(mut self, game: GameKind) -> Self {
        self.game = game;
        self
    }
}

impl Default for GameSpec {
    fn default() -> Self {
        Self::marginal()
    }
}

/// Reference sample the games average over.
#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    features: FeatureMatrix,
    means: Vec<f64>,
    scales: Vec<f64>,
}

impl Background {
    pub fn new(features: FeatureMatrix) -> Result<Self> {
        if features.n_rows() == 0 {
            return Err(Error::EmptyInput("background"));
        }
        if let Some(index) = features.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let b = features.n_rows() as f64;
        let mut means = Vec::with_capacity(features.n_cols());
        let mut scales = Vec::with_capacity(features.n_cols());
        for j in 0..features.n_cols() {
            let col = features.column(j);
            let mean = col.iter().copied().collect::<CompensatedSum<f64>>().value() / b;
            let var = col
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .collect::<CompensatedSum<f64>>()
                .value()
                / b;
            let sd = var.sqrt();
            means.push(mean);
            scales.push(if sd > 0.0 && sd.is_finite() { sd } else { 1.0 });
        }
        Ok(Self {
            features,
            means,
            scales,
        })
    }

    /// Uses at most `cap` rows of `features`, chosen without replacement by a
    /// seeded draw and kept in their original order.
    pub fn capped(features: &FeatureMatrix, cap: usize, seed: u64) -> Result<Self> {
        if cap == 0 {
            return Err(Error::InvalidArgument("background cap must be positive".into()));
        }
        if features.n_rows() <= cap {
            return Self::new(features.clone());
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, features.n_rows(), cap).into_vec();
        idx.sort_unstable();
        Self::new(features.select_rows(&idx))
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn default_k(&self) -> usize {
        ((self.len() as f64).sqrt().ceil() as usize).clamp(1, self.len())
    }
}

enum FastPath {
    /// `v(S) = b + Σ_{i∈S} f_i(x_i) + Σ_{i∉S} mean f_i`.
    Additive { component_means: Vec<f64> },
    /// Cached `Σ_{i∉S} c_i X_i^{(j)}` for every coalition and background row.
    Logistic { partial: Vec<f64> },
    General,
}

/// Evaluates `v(S; x)` for one model, background and base game.
pub struct GameEvaluator<'a> {
    model: &'a ModelSpec,
    background: &'a Background,
    game: GameKind,
    k: usize,
    standardize: bool,
    n: usize,
    background_scores: Vec<f64>,
    empty_value: f64,
    fast: FastPath,
}

impl<'a> GameEvaluator<'a> {
    pub fn new(model: &'a ModelSpec, background: &'a Background, spec: &GameSpec) -> Result<Self> {
        if !model.is_evaluable() {
            return Err(Error::NotEvaluable(model.kind.label()));
        }
        let n = model.arity();
        if background.n_features() != n {
            return Err(Error::ArityMismatch {
                expected: n,
                actual: background.n_features(),
            });
        }
        check_player_count(n)?;
        let k = spec.knn_k.unwrap_or_else(|| background.default_k());
        if spec.game == GameKind::Conditional && (k == 0 || k > background.len()) {
            return Err(Error::InvalidArgument(format!(
                "knn_k = {k} must lie in 1..={}",
                background.len()
            )));
        }
        let bg = background.features();
        let background_scores: Vec<f64> =
            bg.rows().map(|r| model.score_unchecked(r)).collect();
        let b = bg.n_rows();

        let fast = match (&model.kind, spec.game) {
            (_, GameKind::Conditional) => FastPath::General,
            (ModelKind::Linear { .. } | ModelKind::AdditiveTabular { .. }, _) => {
                let component_means = (0..n)
                    .map(|i| {
                        bg.rows()
                            .map(|r| model.additive_component(i, r[i]))
                            .collect::<CompensatedSum<f64>>()
                            .value()
                            / b as f64
                    })
                    .collect();
                FastPath::Additive { component_means }
            }
            (ModelKind::LogisticLinear { coefficients, .. }, _)
                if (b << n) <= LOGISTIC_TABLE_LIMIT =>
            {
                let mut partial = vec![0.0; b << n];
                for mask in 0..(1usize << n) {
                    let out = &mut partial[mask * b..(mask + 1) * b];
                    for (j, row) in bg.rows().enumerate() {
                        out[j] = (0..n)
                            .filter(|i| mask >> i & 1 == 0)
                            .map(|i| coefficients[i] * row[i])
                            .sum();
                    }
                }
                FastPath::Logistic { partial }
            }
            _ => FastPath::General,
        };

        let mut ev = Self {
            model,
            background,
            game: spec.game,
            k,
            standardize: spec.standardize,
            n,
            background_scores,
            empty_value: 0.0,
            fast,
        };
        ev.empty_value = match (&ev.fast, ev.game) {
            (FastPath::Additive { component_means }, GameKind::Marginal) => {
                model.intercept() + component_means.iter().sum::<f64>()
            }
            _ => compensated_mean(&ev.background_scores),
        };
        Ok(ev)
    }

    pub fn n_features(&self) -> usize {
        self.n
    }

    pub fn game(&self) -> GameKind {
        self.game
    }

    pub fn knn_k(&self) -> usize {
        self.k
    }

    /// `v(∅) = E[f]` over the background.
    pub fn baseline(&self) -> f64 {
        self.empty_value
    }

    /// `v(S; x)` for the coalition with bitmask `mask`.
    ///
    /// `x` must have the model's arity and be finite; see [`Self::check_point`].
    pub fn value(&self, mask: usize, x: &[f64]) -> f64 {
        let full = (1usize << self.n) - 1;
        if mask & full == full {
            return self.model.score_unchecked(x);
        }
        if mask == 0 {
            return self.empty_value;
        }
        match self.game {
            GameKind::Marginal => self.marginal_value(mask, x),
            GameKind::Conditional => self.conditional_value(mask, x, &mut Vec::new()),
        }
    }

    /// Values of all `2^n` coalitions at `x`.
    pub fn all_values(&self, x: &[f64]) -> Vec<f64> {
        let mut scratch = Vec::new();
        let full = (1usize << self.n) - 1;
        (0..=full)
            .map(|mask| {
                if mask == full {
                    self.model.score_unchecked(x)
                } else if mask == 0 {
                    self.empty_value
                } else {
                    match self.game {
                        GameKind::Marginal => self.marginal_value(mask, x),
                        GameKind::Conditional => self.conditional_value(mask, x, &mut scratch),
                    }
                }
            })
            .collect()
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::ArityMismatch {
                expected: self.n,
                actual: x.len(),
            });
        }
        match x.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    fn marginal_value(&self, mask: usize, x: &[f64]) -> f64 {
        let in_s = |i: usize| mask >> i & 1 == 1;
        match &self.fast {
            FastPath::Additive { component_means } => {
                let mut acc = CompensatedSum::new();
                acc.add(self.model.intercept());
                for i in 0..self.n {
                    acc.add(if in_s(i) {
                        self.model.additive_component(i, x[i])
                    } else {
                        component_means[i]
                    });
                }
                acc.value()
            }
            FastPath::Logistic { partial } => {
                let ModelKind::LogisticLinear { coefficients, intercept } = &self.model.kind else {
                    unreachable!()
                };
                let fixed: f64 = intercept
                    + (0..self.n)
                        .filter(|&i| in_s(i))
                        .map(|i| coefficients[i] * x[i])
                        .sum::<f64>();
                let b = self.background.len();
                let z = &partial[mask * b..(mask + 1) * b];
                z.iter().map(|&zj| logistic(fixed + zj)).collect::<CompensatedSum<f64>>().value()
                    / b as f64
            }
            FastPath::General => {
                let mut buf = vec![0.0; self.n];
                let mut acc = CompensatedSum::new();
                for row in self.background.features().rows() {
                    for i in 0..self.n {
                        buf[i] = if in_s(i) { x[i] } else { row[i] };
                    }
                    acc.add(self.model.score_unchecked(&buf));
                }
                acc.value() / self.background.len() as f64
            }
        }
    }

    fn conditional_value(&self, mask: usize, x: &[f64], scratch: &mut Vec<(f64, usize)>) -> f64 {
        let bg = self.background.features();
        let scales = &self.background.scales;
        scratch.clear();
        scratch.extend(bg.rows().enumerate().map(|(j, row)| {
            let mut d = 0.0;
            for i in 0..self.n {
                if mask >> i & 1 == 1 {
                    let s = if self.standardize { scales[i] } else { 1.0 };
                    let t = (x[i] - row[i]) / s;
                    d += t * t;
                }
            }
            (d, j)
        }));
        let k = self.k;
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < scratch.len() {
            scratch.select_nth_unstable_by(k - 1, cmp);
        }
        let nearest = &mut scratch[..k];
        nearest.sort_unstable_by_key(|p| p.1);
        nearest
            .iter()
            .map(|&(_, j)| self.background_scores[j])
            .collect::<CompensatedSum<f64>>()
            .value()
            / k as f64
    }
}

fn compensated_mean(v: &[f64]) -> f64 {
    v.iter().copied().collect::<CompensatedSum<f64>>().value() / v.len() as f64
}

fn index_mask(indices: &[usize], n: usize) -> Result<usize> {
    let mut mask = 0usize;
    for &i in indices {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        mask |= 1 << i;
    }
    Ok(mask)
}

/// Partial dependence of `model` on the features `s` at the values `x_s`.
pub fn pdp(model: &ModelSpec, background: &Background, s: &[usize], x_s: &[f64]) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::InvalidArgument("partial dependence needs a non-empty feature set".into()));
    }
    if s.len() != x_s.len() {
        return Err(Error::LengthMismatch {
            expected: s.len(),
            actual: x_s.len(),
        });
    }
    let n = model.arity();
    let mask = index_mask(s, n)?;
    let mut x = background.means().to_vec();
    for (&i, &v) in s.iter().zip(x_s) {
        x[i] = v;
    }
    let ev = GameEvaluator::new(model, background, &GameSpec::marginal())?;
    ev.check_point(&x)?;
    Ok(ev.value(mask, &x))
}

/// `v^ME(S; x)`.
pub fn marginal_game(model: &ModelSpec, background: &Background, s: &[usize], x: &[f64]) -> Result<f64> {
    let ev = GameEvaluator::new(model, background, &GameSpec::marginal())?;
    ev.check_point(x)?;
    Ok(ev.value(index_mask(s, ev.n_features())?, x))
}

/// Nearest-neighbour estimate of `v^CE(S; x)`.
pub fn conditional_game(
    model: &ModelSpec,
    background: &Background,
    s: &[usize],
    x: &[f64],
    knn_k: Option<usize>,
) -> Result<f64> {
    let ev = GameEvaluator::new(model, background, &GameSpec::conditional(knn_k))?;
    ev.check_point(x)?;
    Ok(ev.value(index_mask(s, ev.n_features())?, x))
}

/// A partition of the features into named groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub names: Vec<String>,
    pub groups: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(names: Vec<String>, groups: Vec<Vec<usize>>, n_features: usize) -> Result<Self> {
        if names.len() != groups.len() {
            return Err(Error::InvalidPartition("one name per group is required".into()));
        }
        if groups.is_empty() {
            return Err(Error::InvalidPartition("no groups".into()));
        }
        let mut seen = vec![false; n_features];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidPartition(format!("group `{}` is empty", names[g])));
            }
            for &i in members {
                if i >= n_features {
                    return Err(Error::InvalidPartition(format!(
                        "feature index {i} out of range for {n_features} features"
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidPartition(format!("feature {i} appears twice")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!("feature {i} is not in any group")));
        }
        check_player_count(groups.len())?;
        Ok(Self { names, groups })
    }

    pub fn singletons(names: &[String]) -> Self {
        Self {
            names: names.to_vec(),
            groups: (0..names.len()).map(|i| vec![i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Feature mask of the union of the groups in `group_mask`.
    pub fn feature_mask(&self, group_mask: usize) -> usize {
        self.groups
            .iter()
            .enumerate()
            .filter(|(j, _)| group_mask >> j & 1 == 1)
            .fold(0, |m, (_, g)| m | mask_of(g))
    }
}

/// `v(∪_{j∈A} S_j; x)` under the base game of `spec`.
pub fn group_explainer(
    model: &ModelSpec,
    background: &Background,
    spec: &GameSpec,
    partition: &Partition,
    groups: &[usize],
    x: &[f64],
) -> Result<f64> {
    let ev = GameEvaluator::new(model, background, spec)?;
    ev.check_point(x)?;
    let gmask = index_mask(groups, partition.len())?;
    Ok(ev.value(partition.feature_mask(gmask), x))
}

/// Coalition values `v(S; x_r)` for every sample `r` and every coalition of
/// the players (features, or groups of a partition).
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionValues {
    pub n_players: usize,
    pub n_samples: usize,
    /// Row-major `n_samples x 2^n_players`.
    pub values: Vec<f64>,
    pub baseline: f64,
}

impl CoalitionValues {
    pub fn compute(
        evaluator: &GameEvaluator<'_>,
        data: &FeatureMatrix,
        partition: Option<&Partition>,
    ) -> Result<Self> {
        let n_players = partition.map_or(evaluator.n_features(), Partition::len);
        check_player_count(n_players)?;
        for r in 0..data.n_rows() {
            evaluator.check_point(data.row(r))?;
        }
        let width = 1usize << n_players;
        let masks: Vec<usize> = (0..width)
            .map(|m| partition.map_or(m, |p| p.feature_mask(m)))
            .collect();
        let mut values = vec![0.0; data.n_rows() * width];
        values
            .par_chunks_mut(width.max(1))
            .enumerate()
            .for_each(|(r, out)| {
                let x = data.row(r);
                if partition.is_none() {
                    out.copy_from_slice(&evaluator.all_values(x));
                } else {
                    for (o, &m) in out.iter_mut().zip(&masks) {
                        *o = evaluator.value(m, x);
                    }
                }
            });
        Ok(Self {
            n_players,
            n_samples: data.n_rows(),
            values,
            baseline: evaluator.baseline(),
        })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = 1usize << self.n_players;
        &self.values[r * w..(r + 1) * w]
    }

    /// `v(S; x_r)` for every sample.
    pub fn coalition(&self, mask: usize) -> Vec<f64> {
        (0..self.n_samples).map(|r| self.row(r)[mask]).collect()
    }

    /// Per-sample Shapley values, `n_samples x n_players`.
    pub fn shapley_matrix(&self) -> FeatureMatrix {
        let n = self.n_players;
        let weights = coalition_weights(n);
        let mut out = vec![0.0; self.n_samples * n];
        out.par_chunks_mut(n.max(1)).enumerate().for_each(|(r, phi)| {
            let v = self.row(r);
            for (i, p) in phi.iter_mut().enumerate() {
                let bit = 1usize << i;
                let mut acc = CompensatedSum::new();
                for mask in (0..v.len()).filter(|m| m & bit == 0) {
                    acc.add(weights[mask.count_ones() as usize] * (v[mask | bit] - v[mask]));
                }
                *p = acc.value();
            }
        });
        FeatureMatrix::new(self.n_samples, n, out).expect("shape is consistent")
    }
}

/// Per-sample, per-feature explainer values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMatrix {
    pub values: FeatureMatrix,
    pub feature_names: Vec<String>,
    pub explainer_id: String,
    pub model_id: String,
    /// `E[f]` for Shapley explainers, so that `baseline + row sum = f(x)`.
    pub baseline: Option<f64>,
}

impl AttributionMatrix {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j)
    }

    pub fn n_features(&self) -> usize {
        self.values.n_cols()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.feature_names)?;
        for row in self.values.rows() {
            out.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        out.flush().map_err(|e| Error::io("<attributions>", e))?;
        Ok(())
    }
}

fn default_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

/// Explainer values for every row of `data`.
///
/// The base game is the one `explainer` implies; `spec` supplies the
/// estimator settings. Columns are named `x1..xn` unless `names` is given.
pub fn attribute_dataset(
    model: &ModelSpec,
    data: &FeatureMatrix,
    explainer: ExplainerKind,
    spec: &GameSpec,
    background: &Background,
    names: Option<&[String]>,
) -> Result<AttributionMatrix> {
    let spec = spec.with_game(explainer.game());
    let ev = GameEvaluator::new(model, background, &spec)?;
    let n = ev.n_features();
    if data.n_cols() != n {
        return Err(Error::ArityMismatch {
            expected: n,
            actual: data.n_cols(),
        });
    }
    let feature_names = match names {
        Some(v) if v.len() == n => v.to_vec(),
        Some(v) => {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: v.len(),
            })
        }
        None => default_names(n),
    };
    let (values, baseline) = if explainer.is_shapley() {
        let table = CoalitionValues::compute(&ev, data, None)?;
        (table.shapley_matrix(), Some(table.baseline))
    } else {
        for r in 0..data.n_rows() {
            ev.check_point(data.row(r))?;
        }
        let mut out = vec![0.0; data.n_rows() * n];
        out.par_chunks_mut(n.max(1)).enumerate().for_each(|(r, row)| {
            let x = data.row(r);
            for (i, o) in row.iter_mut().enumerate() {
                *o = ev.value(1 << i, x);
            }
        });
        (FeatureMatrix::new(data.n_rows(), n, out)?, None)
    };
    Ok(AttributionMatrix {
        values,
        feature_names,
        explainer_id: explainer.as_str().into(),
        model_id: model.name.clone(),
        baseline,
    })
}
