//! Running experiments over cohorts on disk: manifests, configurations and reports.

pub mod config;
pub mod experiment;
pub mod manifest;
pub mod report;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, ExperimentReport};
pub use manifest::{load_dataset, LoadedDataset, Manifest, ManifestEntry};
pub use report::{emit_report, format_percent, Format};
