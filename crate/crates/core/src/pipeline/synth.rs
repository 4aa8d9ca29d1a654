use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::explain::ExplainerKind;
use crate::metrics::FavorableSign;
use crate::models::{generate, ModelId, SynthParams};

use super::config::{AuditConfig, FavorableDirection, ModelSource};

/// Writes `dataset.csv`, `model.json` and a matching `audit.json` into
/// `out`. Returns the path of the audit configuration.
///
/// The dataset has the feature columns, the class column `g`, and a column
/// `y` holding the response when the model has one.
pub fn write_synthetic(
    id: ModelId,
    params: &SynthParams,
    n: usize,
    seed: u64,
    out: &Path,
) -> Result<PathBuf> {
    let (ds, model) = generate(id, params, n, seed)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let data_path = out.join("dataset.csv");
    let file = File::create(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = ds.feature_names.clone();
    header.push("g".into());
    if ds.response.is_some() {
        header.push("y".into());
    }
    w.write_record(&header)?;
    for r in 0..ds.features.n_rows() {
        let mut rec: Vec<String> = ds.features.row(r).iter().map(|v| format!("{v:?}")).collect();
        rec.push(ds.protected[r].to_string());
        if let Some(y) = &ds.response {
            rec.push(format!("{:?}", y[r]));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&data_path, e))?;

    let model_path = out.join("model.json");
    fs::write(&model_path, serde_json::to_string_pretty(&model)?)
        .map_err(|e| Error::io(&model_path, e))?;

    let cfg = AuditConfig {
        dataset: "dataset.csv".into(),
        protected_column: "g".into(),
        reference_label: "0".into(),
        favorable_direction: match model.favorable_sign {
            FavorableSign::Up => FavorableDirection::Up,
            FavorableSign::Down => FavorableDirection::Down,
        },
        model: ModelSource::ModelSpec("model.json".into()),
        features: Some(ds.feature_names.clone()),
        explainer: ExplainerKind::PdpSingle,
        knn_k: None,
        standardize: true,
        background_cap: 4000,
        partition: None,
        shapley_bias: false,
        shapley_form: Default::default(),
        parity_events_column: None,
        seed,
        output_dir: "audit-out".into(),
        bep_sort: Default::default(),
        mitigation_z: 3.0,
    };
    let cfg_path = out.join("audit.json");
    fs::write(&cfg_path, serde_json::to_string_pretty(&cfg)?)
        .map_err(|e| Error::io(&cfg_path, e))?;
    Ok(cfg_path)
}
