use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bias_explain::BepSortKey;
use crate::error::{Error, Result};
use crate::explain::{ExplainerKind, Partition};
use crate::metrics::FavorableSign;
use crate::shapley_bias::GroupExplainerForm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FavorableDirection {
    Up,
    Down,
}

impl From<FavorableDirection> for FavorableSign {
    fn from(d: FavorableDirection) -> Self {
        match d {
            FavorableDirection::Up => FavorableSign::Up,
            FavorableDirection::Down => FavorableSign::Down,
        }
    }
}

/// Where scores come from. Exactly one source per audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    /// JSON file holding a model specification.
    ModelSpec(PathBuf),
    /// Precomputed scores in a dataset column.
    ScoreColumn(String),
    /// Precomputed per-feature attributions; scores are their row sums.
    AttributionCsv(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupDef {
    pub name: String,
    pub features: Vec<String>,
}

fn default_cap() -> usize {
    4000
}

fn default_true() -> bool {
    true
}

fn default_z() -> f64 {
    3.0
}

/// A complete audit configuration. Every optional field is written back
/// with its effective value when the configuration is echoed in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub dataset: PathBuf,
    pub protected_column: String,
    /// Label mapped to class 0 (the non-protected class).
    pub reference_label: String,
    pub favorable_direction: FavorableDirection,
    pub model: ModelSource,
    /// Predictor columns; defaults to every column not otherwise used.
    #[serde(default)]
    pub features: Option<Vec<String>>,
    #[serde(default = "default_explainer")]
    pub explainer: ExplainerKind,
    #[serde(default)]
    pub knn_k: Option<usize>,
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default = "default_cap")]
    pub background_cap: usize,
    #[serde(default)]
    pub partition: Option<Vec<GroupDef>>,
    #[serde(default)]
    pub shapley_bias: bool,
    #[serde(default)]
    pub shapley_form: GroupExplainerForm,
    /// Column whose distinct values define the parity events.
    #[serde(default)]
    pub parity_events_column: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub bep_sort: BepSortKey,
    #[serde(default = "default_z")]
    pub mitigation_z: f64,
}

fn default_explainer() -> ExplainerKind {
    ExplainerKind::PdpSingle
}

fn default_output() -> PathBuf {
    PathBuf::from("fairscope-out")
}

impl AuditConfig {
    /// Reads a configuration and resolves relative paths against the
    /// directory of the configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: AuditConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset);
        fix(&mut self.output_dir);
        match &mut self.model {
            ModelSource::ModelSpec(p) | ModelSource::AttributionCsv(p) => fix(p),
            ModelSource::ScoreColumn(_) => {}
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.background_cap == 0 {
            return Err(Error::Config("background_cap must be positive".into()));
        }
        if self.knn_k == Some(0) {
            return Err(Error::Config("knn_k must be at least 1".into()));
        }
        if !(self.mitigation_z >= 0.0) || !self.mitigation_z.is_finite() {
            return Err(Error::Config("mitigation_z must be a non-negative number".into()));
        }
        if let Some(groups) = &self.partition {
            if groups.is_empty() {
                return Err(Error::Config("partition has no groups".into()));
            }
        }
        if let ModelSource::ScoreColumn(c) = &self.model {
            if c == &self.protected_column {
                return Err(Error::Config("score column cannot be the protected column".into()));
            }
        }
        Ok(())
    }

    pub fn favorable_sign(&self) -> FavorableSign {
        self.favorable_direction.into()
    }

    /// Resolves the named partition against the final feature list.
    pub fn partition_for(&self, features: &[String]) -> Result<Option<Partition>> {
        let Some(groups) = &self.partition else {
            return Ok(None);
        };
        let mut names = Vec::new();
        let mut members = Vec::new();
        for g in groups {
            let idx = g
                .features
                .iter()
                .map(|f| {
                    features.iter().position(|x| x == f).ok_or_else(|| {
                        Error::InvalidPartition(format!("group `{}` names unknown feature `{f}`", g.name))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            names.push(g.name.clone());
            members.push(idx);
        }
        Partition::new(names, members, features.len()).map(Some)
    }
}
