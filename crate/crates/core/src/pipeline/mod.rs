//! Configuration, CSV ingestion and the audit workflow behind the CLI.

mod audit;
mod config;
mod ingest;
mod synth;

pub use audit::{
    emit_curves, run_audit, run_curves, run_explain, run_group_bias, run_mitigation,
    run_shapley_bias, AuditReport, RunOptions, SCHEMA_VERSION,
};
pub use config::{AuditConfig, FavorableDirection, GroupDef, ModelSource};
pub use ingest::{ingest_csv, Dataset};
pub use synth::write_synthetic;
