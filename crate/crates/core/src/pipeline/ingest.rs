use std::collections::BTreeSet;
use std::path::Path;

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

use super::config::{AuditConfig, ModelSource};

/// A dataset ready for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub features: FeatureMatrix,
    /// Class indices; the reference label is 0.
    pub protected: Vec<usize>,
    /// Original label of each class index.
    pub class_labels: Vec<String>,
    pub scores: Option<Vec<f64>>,
    /// Raw values of the parity event column, if configured.
    pub events: Option<Vec<String>>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.protected.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes()];
        for &g in &self.protected {
            c[g] += 1;
        }
        c
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Data(format!("missing column `{name}`")))
}

fn summarize_rows(rows: &[usize]) -> String {
    const SHOW: usize = 20;
    let mut s = rows.iter().take(SHOW).map(|r| r.to_string()).collect::<Vec<_>>().join(", ");
    if rows.len() > SHOW {
        s.push_str(&format!(" and {} more", rows.len() - SHOW));
    }
    s
}

/// Reads the dataset named by `config`.
///
/// The reference label becomes class 0 and the remaining labels, in sorted
/// order, classes `1..K`. Rows with unparseable or non-finite numbers are
/// rejected and reported by their 1-based data row number.
pub fn ingest_csv(path: &Path, config: &AuditConfig) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Data(format!("{}: {other:?}", path.display())),
        })?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Data("missing header row".into()));
    }
    let g_col = column_index(&headers, &config.protected_column)?;
    let score_col = match &config.model {
        ModelSource::ScoreColumn(c) => Some(column_index(&headers, c)?),
        _ => None,
    };
    let event_col = config
        .parity_events_column
        .as_deref()
        .map(|c| column_index(&headers, c))
        .transpose()?;

    let feature_names: Vec<String> = match (&config.features, &config.model) {
        (Some(f), _) => f.clone(),
        // attribution mode takes predictors from the attribution file
        (None, ModelSource::AttributionCsv(_)) => Vec::new(),
        (None, _) => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != g_col && Some(*i) != score_col && Some(*i) != event_col)
            .map(|(_, h)| h.to_string())
            .collect(),
    };
    let feature_cols = feature_names
        .iter()
        .map(|f| column_index(&headers, f))
        .collect::<Result<Vec<_>>>()?;
    if feature_cols.contains(&g_col) {
        return Err(Error::Config("the protected column cannot be a feature".into()));
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut scores = score_col.map(|_| Vec::new());
    let mut events = event_col.map(|_| Vec::new());
    let mut bad_rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = r + 1;
        let parse = |c: usize| -> Option<f64> {
            record.get(c).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite())
        };
        let values: Option<Vec<f64>> = feature_cols.iter().map(|&c| parse(c)).collect();
        let score = score_col.map(parse);
        match (values, score) {
            (Some(v), None) | (Some(v), Some(Some(_))) => {
                data.extend(v);
                if let (Some(s), Some(Some(x))) = (&mut scores, score) {
                    s.push(x);
                }
            }
            _ => {
                bad_rows.push(row_no);
                continue;
            }
        }
        labels.push(record.get(g_col).unwrap_or("").to_string());
        if let (Some(ev), Some(c)) = (&mut events, event_col) {
            ev.push(record.get(c).unwrap_or("").to_string());
        }
    }
    if !bad_rows.is_empty() {
        return Err(Error::Data(format!(
            "non-numeric or non-finite values in data rows {}",
            summarize_rows(&bad_rows)
        )));
    }
    if labels.is_empty() {
        return Err(Error::Data("dataset has no rows".into()));
    }

    let distinct: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
    if !distinct.contains(config.reference_label.as_str()) {
        return Err(Error::Data(format!(
            "reference label `{}` does not occur in column `{}`",
            config.reference_label, config.protected_column
        )));
    }
    if distinct.len() < 2 {
        return Err(Error::Data(format!(
            "protected column `{}` has a single class",
            config.protected_column
        )));
    }
    let mut class_labels = vec![config.reference_label.clone()];
    class_labels.extend(
        distinct
            .iter()
            .filter(|l| **l != config.reference_label)
            .map(|l| l.to_string()),
    );
    let protected = labels
        .iter()
        .map(|l| class_labels.iter().position(|c| c == l).expect("label is known"))
        .collect();

    let n = labels.len();
    Ok(Dataset {
        features: FeatureMatrix::new(n, feature_names.len(), data)?,
        feature_names,
        protected,
        class_labels,
        scores,
        events,
    })
}
