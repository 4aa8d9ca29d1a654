use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bias_explain::{
    bias_explanations, greedy_mitigation, sort_rows, write_bep_csv, BiasExplanationRow,
    MitigationOptions, MitigationTrace,
};
use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::explain::{attribute_dataset, AttributionMatrix, Background, GameSpec, Partition};
use crate::metrics::{
    classifier_bias_curve, group_parity_bias, model_bias, quantile_bias_curve, BiasReport,
    FavorableSign, GroupParityResult, GroupParitySpec,
};
use crate::models::ModelSpec;
use crate::shapley_bias::{
    build_bias_game, group_shapley_bias, shapley_bias, BiasGameTable, ShapleyBiasResult,
};

use super::config::{AuditConfig, ModelSource};
use super::ingest::{ingest_csv, Dataset};

pub const SCHEMA_VERSION: u32 = 1;

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub verbose: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub version: String,
    pub command: String,
    pub config: AuditConfig,
    pub n_samples: usize,
    pub class_labels: Vec<String>,
    pub class_counts: Vec<usize>,
    pub model_bias: Option<BiasReport<f64>>,
    pub explainer: Option<String>,
    pub explanations: Option<Vec<BiasExplanationRow>>,
    pub shapley_bias: Option<ShapleyBiasResult>,
    pub group_shapley_bias: Option<ShapleyBiasResult>,
    pub group_parity: Option<GroupParityResult>,
    pub mitigation: Option<MitigationTrace>,
    /// Files written to the output directory, by name.
    pub files: Vec<String>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

struct Session {
    cfg: AuditConfig,
    opts: RunOptions,
    data: Dataset,
    model: Option<ModelSpec>,
    external: Option<AttributionMatrix>,
    scores: Vec<f64>,
    report: AuditReport,
    clock: Instant,
}

impl Session {
    fn open(cfg: &AuditConfig, opts: &RunOptions, command: &str) -> Result<Self> {
        let mut cfg = cfg.clone();
        if let Some(out) = &opts.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = opts.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        let clock = Instant::now();
        let data = ingest_csv(&cfg.dataset, &cfg)?;
        let sign = cfg.favorable_sign();
        let (model, external, scores, feature_names) = match &cfg.model {
            ModelSource::ModelSpec(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let model: ModelSpec = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                if model.favorable_sign != sign {
                    return Err(Error::Config(format!(
                        "model favorable sign {} disagrees with favorable_direction",
                        model.favorable_sign.as_i8()
                    )));
                }
                if model.arity() != data.features.n_cols() {
                    return Err(Error::ArityMismatch {
                        expected: model.arity(),
                        actual: data.features.n_cols(),
                    });
                }
                let scores = model.score_all(&data.features)?;
                (Some(model), None, scores, data.feature_names.clone())
            }
            ModelSource::ScoreColumn(_) => {
                let scores = data.scores.clone().expect("score column was read");
                (None, None, scores, data.feature_names.clone())
            }
            ModelSource::AttributionCsv(path) => {
                let attr = read_attributions(path, data.n_rows())?;
                let scores = attr.values.rows().map(|r| r.iter().sum()).collect();
                let names = attr.feature_names.clone();
                (None, Some(attr), scores, names)
            }
        };
        let mut cfg_echo = cfg.clone();
        cfg_echo.features = Some(feature_names);
        let report = AuditReport {
            schema_version: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: cfg_echo,
            n_samples: data.n_rows(),
            class_labels: data.class_labels.clone(),
            class_counts: data.class_counts(),
            model_bias: None,
            explainer: None,
            explanations: None,
            shapley_bias: None,
            group_shapley_bias: None,
            group_parity: None,
            mitigation: None,
            files: Vec::new(),
            timings: BTreeMap::new(),
        };
        fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
        let mut s = Self {
            cfg,
            opts: opts.clone(),
            data,
            model,
            external,
            scores,
            report,
            clock,
        };
        s.lap("ingest");
        Ok(s)
    }

    fn lap(&mut self, stage: &str) {
        let t = self.clock.elapsed().as_secs_f64();
        self.clock = Instant::now();
        if self.opts.verbose {
            eprintln!("[fairscope] {stage}: {t:.3}s");
        }
        self.report.timings.insert(stage.to_string(), t);
    }

    fn sign(&self) -> FavorableSign {
        self.cfg.favorable_sign()
    }

    fn feature_names(&self) -> Vec<String> {
        self.report.config.features.clone().unwrap_or_default()
    }

    fn require_binary(&self) -> Result<()> {
        if self.data.n_classes() != 2 {
            return Err(Error::Data(format!(
                "this command needs exactly two protected classes, found {}; use group-bias",
                self.data.n_classes()
            )));
        }
        Ok(())
    }

    fn background(&self) -> Result<Background> {
        Background::capped(&self.data.features, self.cfg.background_cap, self.cfg.seed)
    }

    fn game_spec(&self) -> GameSpec {
        GameSpec {
            game: self.cfg.explainer.game(),
            knn_k: self.cfg.knn_k,
            standardize: self.cfg.standardize,
        }
    }

    fn partition(&self) -> Result<Option<Partition>> {
        self.cfg.partition_for(&self.feature_names())
    }

    fn compute_model_bias(&mut self) -> Result<()> {
        self.require_binary()?;
        let r = model_bias(&self.scores, &self.data.protected, self.sign())?;
        self.report.model_bias = Some(r);
        self.lap("model_bias");
        Ok(())
    }

    fn attributions(&mut self) -> Result<Option<AttributionMatrix>> {
        let attr = match (&self.model, &self.external) {
            (Some(model), _) => {
                let bg = self.background()?;
                let names = self.feature_names();
                Some(attribute_dataset(
                    model,
                    &self.data.features,
                    self.cfg.explainer,
                    &self.game_spec(),
                    &bg,
                    Some(&names),
                )?)
            }
            (None, Some(a)) => Some(a.clone()),
            (None, None) => None,
        };
        if let Some(a) = &attr {
            self.report.explainer = Some(a.explainer_id.clone());
        }
        self.lap("attributions");
        Ok(attr)
    }

    fn compute_explanations(&mut self, attr: &AttributionMatrix) -> Result<()> {
        let rows = bias_explanations(attr, &self.data.protected, self.sign())?;
        let sorted = sort_rows(&rows, self.cfg.bep_sort);
        self.write_file("bep.csv", |w| write_bep_csv(&sorted, w))?;
        self.report.explanations = Some(rows);
        self.lap("bias_explanations");
        Ok(())
    }

    fn compute_shapley_bias(&mut self, attr: Option<&AttributionMatrix>) -> Result<()> {
        let sign = self.sign();
        let table = match (&self.model, attr) {
            (Some(model), _) => {
                let bg = self.background()?;
                let names = self.feature_names();
                build_bias_game(
                    model,
                    &self.data.features,
                    &self.data.protected,
                    sign,
                    self.cfg.shapley_form,
                    &self.game_spec(),
                    &bg,
                    Some(&names),
                )?
            }
            (None, Some(a)) => BiasGameTable::from_attributions(a, &self.data.protected, sign)?,
            (None, None) => {
                return Err(Error::Config(
                    "Shapley bias needs a model specification or an attribution file".into(),
                ))
            }
        };
        let result = shapley_bias(&table)?;
        self.write_file("shapley_bias.csv", |w| result.write_csv(w))?;
        self.write_file("shapley_bias.json", |w| {
            serde_json::to_writer_pretty(w, &result).map_err(Error::from)
        })?;
        self.report.shapley_bias = Some(result);
        self.lap("shapley_bias");
        Ok(())
    }

    fn compute_group_shapley_bias(&mut self, attr: Option<&AttributionMatrix>) -> Result<()> {
        let Some(partition) = self.partition()? else {
            return Ok(());
        };
        let sign = self.sign();
        let result = match (&self.model, attr) {
            (Some(model), _) => {
                let bg = self.background()?;
                group_shapley_bias(
                    model,
                    &self.data.features,
                    &self.data.protected,
                    sign,
                    &partition,
                    &self.game_spec(),
                    &bg,
                )?
            }
            (None, Some(a)) => {
                let grouped = group_attributions(a, &partition)?;
                shapley_bias(&BiasGameTable::from_attributions(&grouped, &self.data.protected, sign)?)?
            }
            (None, None) => {
                return Err(Error::Config(
                    "group Shapley bias needs a model specification or an attribution file".into(),
                ))
            }
        };
        self.write_file("group_shapley_bias.csv", |w| result.write_csv(w))?;
        self.report.group_shapley_bias = Some(result);
        self.lap("group_shapley_bias");
        Ok(())
    }

    fn compute_group_parity(&mut self) -> Result<()> {
        let n = self.data.n_rows();
        let events = match &self.data.events {
            Some(raw) => {
                let values: BTreeSet<&String> = raw.iter().collect();
                values
                    .into_iter()
                    .map(|v| raw.iter().map(|x| x == v).collect())
                    .collect()
            }
            None => vec![vec![true; n]],
        };
        let spec = GroupParitySpec {
            n_classes: self.data.n_classes(),
            events,
            weights: None,
        };
        let r = group_parity_bias(&self.scores, &self.data.protected, &spec, self.sign())?;
        self.report.group_parity = Some(r);
        self.lap("group_parity");
        Ok(())
    }

    fn write_file(
        &mut self,
        name: &str,
        f: impl FnOnce(BufWriter<File>) -> Result<()>,
    ) -> Result<()> {
        let path = self.cfg.output_dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        f(BufWriter::new(file))?;
        self.report.files.push(name.to_string());
        Ok(())
    }

    fn emit_curves(&mut self, attr: Option<&AttributionMatrix>) -> Result<()> {
        self.require_binary()?;
        let files = emit_curves(
            &self.scores,
            &self.data.protected,
            self.sign(),
            attr,
            &self.cfg.output_dir,
        )?;
        self.report.files.extend(files);
        self.lap("curves");
        Ok(())
    }

    fn finish(mut self) -> Result<AuditReport> {
        self.report.files.push("report.json".into());
        let path = self.cfg.output_dir.join("report.json");
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &self.report)?;
        Ok(self.report)
    }
}

/// Sums attribution columns within each group of `partition`.
fn group_attributions(attr: &AttributionMatrix, partition: &Partition) -> Result<AttributionMatrix> {
    let m = partition.len();
    let mut data = Vec::with_capacity(attr.values.n_rows() * m);
    for row in attr.values.rows() {
        for g in &partition.groups {
            data.push(g.iter().map(|&i| row[i]).sum());
        }
    }
    Ok(AttributionMatrix {
        values: FeatureMatrix::new(attr.values.n_rows(), m, data)?,
        feature_names: partition.names.clone(),
        explainer_id: format!("{}_grouped", attr.explainer_id),
        model_id: attr.model_id.clone(),
        baseline: attr.baseline,
    })
}

fn read_attributions(path: &Path, n_rows: usize) -> Result<AttributionMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Data(format!("{}: {other:?}", path.display())),
        })?;
    let names: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if names.is_empty() {
        return Err(Error::Data("attribution file has no columns".into()));
    }
    let mut data = Vec::new();
    let mut bad = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        rows += 1;
        let parsed: Option<Vec<f64>> = record
            .iter()
            .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        match parsed {
            Some(v) if v.len() == names.len() => data.extend(v),
            _ => bad.push(r + 1),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Data(format!(
            "attribution file has invalid rows {:?}",
            &bad[..bad.len().min(20)]
        )));
    }
    if rows != n_rows {
        return Err(Error::Data(format!(
            "attribution file has {rows} rows but the dataset has {n_rows}"
        )));
    }
    Ok(AttributionMatrix {
        values: FeatureMatrix::new(rows, names.len(), data)?,
        feature_names: names,
        explainer_id: "external".into(),
        model_id: "external".into(),
        baseline: None,
    })
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes the score CDF curve, the score quantile-gap curve, and one CDF
/// curve per explainer column. Returns the file names.
pub fn emit_curves(
    scores: &[f64],
    protected: &[usize],
    sign: FavorableSign,
    attr: Option<&AttributionMatrix>,
    out_dir: &Path,
) -> Result<Vec<String>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut write = |name: String, curve: crate::metrics::BiasCurve<f64>| -> Result<()> {
        let path = out_dir.join(&name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        curve.write_csv(BufWriter::new(file))?;
        written.push(name);
        Ok(())
    };
    write("score_cdf.csv".into(), classifier_bias_curve(scores, protected, sign, None)?)?;
    write("score_quantile.csv".into(), quantile_bias_curve(scores, protected, sign, None)?)?;
    if let Some(a) = attr {
        for j in 0..a.n_features() {
            let curve = classifier_bias_curve(&a.column(j), protected, sign, None)?;
            write(format!("explainer_cdf_{}.csv", file_stem(&a.feature_names[j])), curve)?;
        }
    }
    Ok(written)
}

/// Model bias, predictor bias explanations and curves, plus Shapley, group
/// and parity results when configured.
pub fn run_audit(cfg: &AuditConfig, opts: &RunOptions) -> Result<AuditReport> {
    let mut s = Session::open(cfg, opts, "audit")?;
    s.compute_model_bias()?;
    let attr = s.attributions()?;
    if let Some(a) = &attr {
        s.compute_explanations(a)?;
    }
    s.emit_curves(attr.as_ref())?;
    if s.cfg.shapley_bias {
        s.compute_shapley_bias(attr.as_ref())?;
    }
    if s.cfg.partition.is_some() {
        s.compute_group_shapley_bias(attr.as_ref())?;
    }
    if s.cfg.parity_events_column.is_some() {
        s.compute_group_parity()?;
    }
    s.finish()
}

/// Attribution matrix only, written to `attributions.csv`.
pub fn run_explain(cfg: &AuditConfig, opts: &RunOptions) -> Result<AuditReport> {
    let mut s = Session::open(cfg, opts, "explain")?;
    let attr = s
        .attributions()?
        .ok_or_else(|| Error::Config("explain needs a model specification or an attribution file".into()))?;
    s.write_file("attributions.csv", |w| attr.write_csv(w))?;
    s.finish()
}

pub fn run_shapley_bias(cfg: &AuditConfig, opts: &RunOptions) -> Result<AuditReport> {
    let mut s = Session::open(cfg, opts, "shapley-bias")?;
    s.compute_model_bias()?;
    let attr = if s.model.is_some() { None } else { s.external.clone() };
    s.compute_shapley_bias(attr.as_ref())?;
    s.finish()
}

/// Group-based parity over the configured events (any number of classes)
/// and, for two classes with a partition, the quotient Shapley bias.
pub fn run_group_bias(cfg: &AuditConfig, opts: &RunOptions) -> Result<AuditReport> {
    let mut s = Session::open(cfg, opts, "group-bias")?;
    s.compute_group_parity()?;
    if s.data.n_classes() == 2 {
        s.compute_model_bias()?;
        if s.cfg.partition.is_some() {
            let attr = if s.model.is_some() { None } else { s.external.clone() };
            s.compute_group_shapley_bias(attr.as_ref())?;
        }
    }
    s.finish()
}

/// Greedy neutralization; writes `mitigation.json`.
pub fn run_mitigation(cfg: &AuditConfig, opts: &RunOptions) -> Result<AuditReport> {
    let mut s = Session::open(cfg, opts, "mitigate")?;
    s.compute_model_bias()?;
    let model = s
        .model
        .clone()
        .ok_or_else(|| Error::Config("mitigate needs a model specification".into()))?;
    let bg = s.background()?;
    let names = s.feature_names();
    let trace = greedy_mitigation(
        &model,
        &s.data.features,
        &s.data.protected,
        s.cfg.explainer,
        &s.game_spec(),
        &bg,
        None,
        MitigationOptions { z: s.cfg.mitigation_z },
        Some(&names),
    )?;
    s.write_file("mitigation.json", |w| {
        serde_json::to_writer_pretty(w, &trace).map_err(Error::from)
    })?;
    s.report.mitigation = Some(trace);
    s.lap("mitigation");
    s.finish()
}

/// Curve files only.
pub fn run_curves(cfg: &AuditConfig, opts: &RunOptions) -> Result<AuditReport> {
    let mut s = Session::open(cfg, opts, "curves")?;
    s.compute_model_bias()?;
    let attr = s.attributions()?;
    s.emit_curves(attr.as_ref())?;
    s.finish()
}
