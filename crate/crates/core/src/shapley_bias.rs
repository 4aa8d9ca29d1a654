//! Shapley values of the cooperative bias games: additive attributions of
//! the model bias and of its positive, negative and net parts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::explain::{
    AttributionMatrix, Background, CoalitionValues, GameEvaluator, GameKind, GameSpec, Partition,
};
use crate::metrics::{split_by_class, FavorableSign};
use crate::models::ModelSpec;
use crate::ot::{signed_efforts, EmpiricalDistribution};
use crate::scalar::CompensatedSum;
use crate::shapley::{check_player_count, shapley};

/// How the explainer of a coalition `S` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupExplainerForm {
    /// `E(S; x) = v(S; x)`.
    CoalitionValue,
    /// `E(S; x) = Σ_{i∈S} φ_i[v](x)`.
    #[default]
    ShapleySum,
}

/// `(v^bias, v^bias+, v^bias-)` for every coalition, indexed by bitmask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasGameTable {
    pub players: Vec<String>,
    pub total: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
    pub base_game: Option<GameKind>,
    pub form: GroupExplainerForm,
    pub favorable_sign: FavorableSign,
}

impl BiasGameTable {
    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    /// `v^bias,net = v^bias+ - v^bias-`.
    pub fn net(&self) -> Vec<f64> {
        self.positive.iter().zip(&self.negative).map(|(p, n)| p - n).collect()
    }

    /// Builds the table from a per-coalition explainer.
    ///
    /// `explainer(mask, out)` fills `out` with `E(S; x_r)` for every sample.
    pub fn from_explainer<F>(
        players: Vec<String>,
        protected: &[usize],
        sign: FavorableSign,
        base_game: Option<GameKind>,
        form: GroupExplainerForm,
        explainer: F,
    ) -> Result<Self>
    where
        F: Fn(usize, &mut Vec<f64>) + Sync,
    {
        let n = players.len();
        check_player_count(n)?;
        // validates the labels once
        split_by_class(protected, protected)?;
        let entries: Vec<(f64, f64, f64)> = (0..(1usize << n))
            .into_par_iter()
            .map(|mask| {
                let mut values = Vec::with_capacity(protected.len());
                explainer(mask, &mut values);
                let (a, b) = split_by_class(&values, protected)?;
                if let Some(index) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { index });
                }
                let d0 = EmpiricalDistribution::uniform(&a)?;
                let d1 = EmpiricalDistribution::uniform(&b)?;
                let e = signed_efforts(&d0, &d1, 1);
                let (pos, neg) = match sign {
                    FavorableSign::Up => (e.left_effort, e.right_effort),
                    FavorableSign::Down => (e.right_effort, e.left_effort),
                };
                Ok((e.total, pos, neg))
            })
            .collect::<Result<_>>()?;
        let (total, (positive, negative)) =
            entries.into_iter().map(|(t, p, m)| (t, (p, m))).unzip();
        Ok(Self {
            players,
            total,
            positive,
            negative,
            base_game,
            form,
            favorable_sign: sign,
        })
    }

    /// Bias game of an additive explainer `E(S) = Σ_{i∈S} A_i` given by a
    /// precomputed attribution matrix.
    pub fn from_attributions(
        attr: &AttributionMatrix,
        protected: &[usize],
        sign: FavorableSign,
    ) -> Result<Self> {
        let n = attr.n_features();
        check_player_count(n)?;
        if attr.values.n_rows() != protected.len() {
            return Err(Error::LengthMismatch {
                expected: attr.values.n_rows(),
                actual: protected.len(),
            });
        }
        let base = attr.baseline.unwrap_or(0.0);
        Self::from_explainer(
            attr.feature_names.clone(),
            protected,
            sign,
            None,
            GroupExplainerForm::ShapleySum,
            |mask, out| {
                out.extend(attr.values.rows().map(|row| shapley_sum(base, row, mask)));
            },
        )
    }
}

fn shapley_sum(base: f64, phi: &[f64], mask: usize) -> f64 {
    let mut acc = CompensatedSum::new();
    acc.add(base);
    for (i, &p) in phi.iter().enumerate() {
        if mask >> i & 1 == 1 {
            acc.add(p);
        }
    }
    acc.value()
}

/// Shapley values of the four bias games.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyBiasResult {
    pub players: Vec<String>,
    pub phi: Vec<f64>,
    pub phi_pos: Vec<f64>,
    pub phi_neg: Vec<f64>,
    pub phi_net: Vec<f64>,
}

impl ShapleyBiasResult {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["feature", "phi", "phi_pos", "phi_neg", "phi_net"])?;
        for i in 0..self.players.len() {
            out.write_record([
                self.players[i].clone(),
                format!("{:?}", self.phi[i]),
                format!("{:?}", self.phi_pos[i]),
                format!("{:?}", self.phi_neg[i]),
                format!("{:?}", self.phi_net[i]),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<shapley-bias>", e))?;
        Ok(())
    }
}

/// Builds the bias game of `model` on `data` under the given base game.
#[allow(clippy::too_many_arguments)]
pub fn build_bias_game(
    model: &ModelSpec,
    data: &FeatureMatrix,
    protected: &[usize],
    sign: FavorableSign,
    form: GroupExplainerForm,
    spec: &GameSpec,
    background: &Background,
    names: Option<&[String]>,
) -> Result<BiasGameTable> {
    let ev = GameEvaluator::new(model, background, spec)?;
    let n = ev.n_features();
    let players = player_names(names, n)?;
    let table = CoalitionValues::compute(&ev, data, None)?;
    bias_game_from_values(&table, players, protected, sign, form, spec.game)
}

fn player_names(names: Option<&[String]>, n: usize) -> Result<Vec<String>> {
    match names {
        Some(v) if v.len() == n => Ok(v.to_vec()),
        Some(v) => Err(Error::LengthMismatch {
            expected: n,
            actual: v.len(),
        }),
        None => Ok((1..=n).map(|i| format!("x{i}")).collect()),
    }
}

fn bias_game_from_values(
    table: &CoalitionValues,
    players: Vec<String>,
    protected: &[usize],
    sign: FavorableSign,
    form: GroupExplainerForm,
    game: GameKind,
) -> Result<BiasGameTable> {
    if table.n_samples != protected.len() {
        return Err(Error::LengthMismatch {
            expected: table.n_samples,
            actual: protected.len(),
        });
    }
    match form {
        GroupExplainerForm::CoalitionValue => BiasGameTable::from_explainer(
            players,
            protected,
            sign,
            Some(game),
            form,
            |mask, out| out.extend((0..table.n_samples).map(|r| table.row(r)[mask])),
        ),
        GroupExplainerForm::ShapleySum => {
            let phi = table.shapley_matrix();
            let base = table.baseline;
            BiasGameTable::from_explainer(players, protected, sign, Some(game), form, |mask, out| {
                out.extend(phi.rows().map(|row| shapley_sum(base, row, mask)))
            })
        }
    }
}

/// Applies the Shapley formula to each bias game.
pub fn shapley_bias(table: &BiasGameTable) -> Result<ShapleyBiasResult> {
    let n = table.n_players();
    let phi = shapley(&table.total, n)?;
    let phi_pos = shapley(&table.positive, n)?;
    let phi_neg = shapley(&table.negative, n)?;
    let phi_net = phi_pos.iter().zip(&phi_neg).map(|(p, m)| p - m).collect();
    Ok(ShapleyBiasResult {
        players: table.players.clone(),
        phi,
        phi_pos,
        phi_neg,
        phi_net,
    })
}

/// Quotient bias game over the groups of `partition`, where a group
/// coalition `A` is explained by `v(∪_{j∈A} S_j; x)`.
pub fn group_bias_game(
    model: &ModelSpec,
    data: &FeatureMatrix,
    protected: &[usize],
    sign: FavorableSign,
    partition: &Partition,
    spec: &GameSpec,
    background: &Background,
) -> Result<BiasGameTable> {
    let ev = GameEvaluator::new(model, background, spec)?;
    let table = CoalitionValues::compute(&ev, data, Some(partition))?;
    bias_game_from_values(
        &table,
        partition.names.clone(),
        protected,
        sign,
        GroupExplainerForm::CoalitionValue,
        spec.game,
    )
}

/// Shapley bias explanations of the groups of `partition`.
pub fn group_shapley_bias(
    model: &ModelSpec,
    data: &FeatureMatrix,
    protected: &[usize],
    sign: FavorableSign,
    partition: &Partition,
    spec: &GameSpec,
    background: &Background,
) -> Result<ShapleyBiasResult> {
    shapley_bias(&group_bias_game(model, data, protected, sign, partition, spec, background)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::model_bias;

    fn setup() -> (ModelSpec, FeatureMatrix, Vec<usize>, Background) {
        let rows: Vec<Vec<f64>> = (0..24)
            .map(|i| {
                let g = (i % 2) as f64;
                vec![(i as f64 * 0.37).sin() + g, (i as f64 * 0.91).cos() - 0.5 * g, (i % 5) as f64]
            })
            .collect();
        let data = FeatureMatrix::from_rows(&rows).unwrap();
        let protected = (0..24).map(|i| i % 2).collect();
        let bg = Background::new(data.clone()).unwrap();
        let m = ModelSpec::logistic_linear(vec![1.0, -0.5, 0.2], 0.1, FavorableSign::Up);
        (m, data, protected, bg)
    }

    #[test]
    fn table_invariants_and_efficiency() {
        let (m, data, g, bg) = setup();
        let scores = m.score_all(&data).unwrap();
        let bias = model_bias(&scores, &g, m.favorable_sign).unwrap();
        for form in [GroupExplainerForm::CoalitionValue, GroupExplainerForm::ShapleySum] {
            for spec in [GameSpec::marginal(), GameSpec::conditional(Some(3))] {
                let t = build_bias_game(&m, &data, &g, m.favorable_sign, form, &spec, &bg, None)
                    .unwrap();
                assert_eq!(t.total[0], 0.0);
                assert!((t.total[7] - bias.total).abs() < 1e-10);
                for s in 0..8 {
                    assert!((t.total[s] - t.positive[s] - t.negative[s]).abs() < 1e-10);
                }
                let r = shapley_bias(&t).unwrap();
                assert!((r.phi.iter().sum::<f64>() - bias.total).abs() < 1e-9);
                assert!((r.phi_pos.iter().sum::<f64>() - bias.positive).abs() < 1e-9);
                assert!((r.phi_neg.iter().sum::<f64>() - bias.negative).abs() < 1e-9);
                assert!((r.phi_net.iter().sum::<f64>() - bias.net).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn singleton_partition_matches_coalition_form() {
        let (m, data, g, bg) = setup();
        let names: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let spec = GameSpec::marginal();
        let direct = shapley_bias(
            &build_bias_game(
                &m,
                &data,
                &g,
                m.favorable_sign,
                GroupExplainerForm::CoalitionValue,
                &spec,
                &bg,
                Some(&names),
            )
            .unwrap(),
        )
        .unwrap();
        let grouped = group_shapley_bias(
            &m,
            &data,
            &g,
            m.favorable_sign,
            &Partition::singletons(&names),
            &spec,
            &bg,
        )
        .unwrap();
        assert_eq!(direct, grouped);
    }

    #[test]
    fn single_group_takes_everything() {
        let (m, data, g, bg) = setup();
        let p = Partition::new(vec!["all".into()], vec![vec![0, 1, 2]], 3).unwrap();
        let r = group_shapley_bias(&m, &data, &g, m.favorable_sign, &p, &GameSpec::marginal(), &bg)
            .unwrap();
        let bias = model_bias(&m.score_all(&data).unwrap(), &g, m.favorable_sign).unwrap();
        assert!((r.phi[0] - bias.total).abs() < 1e-12);
    }
}
