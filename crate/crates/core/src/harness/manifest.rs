use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::signal::Recording;
use crate::synth::TruthFile;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub label: Label,
    /// CSV path, relative paths resolved against the manifest's directory.
    pub recording_path: PathBuf,
    pub sample_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_name: String,
    #[serde(default)]
    pub channel_exclusions: Vec<String>,
    pub subjects: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn from_path(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}:{}: invalid manifest: {e}", path.display(), e.line())))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for s in &self.subjects {
            if !seen.insert(s.subject_id.as_str()) {
                return Err(Error::Data(format!("duplicate subject id {:?} in manifest", s.subject_id)));
            }
            if !(s.sample_rate > 0.0 && s.sample_rate.is_finite()) {
                return Err(Error::Data(format!(
                    "subject {}: sample rate must be positive, got {}",
                    s.subject_id, s.sample_rate
                )));
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(format!("serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_truth(path: &Path) -> Result<TruthFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}:{}: invalid truth file: {e}", path.display(), e.line())))
}

pub fn write_truth(path: &Path, truth: &TruthFile) -> Result<()> {
    write_json(path, truth)
}

#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub manifest: Manifest,
    pub recordings: Vec<Recording>,
}

/// Load every recording of a manifest, drop excluded channels and check that
/// all subjects share one channel layout.
pub fn load_dataset(manifest_path: &Path) -> Result<LoadedDataset> {
    let manifest = Manifest::from_path(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut recordings = Vec::with_capacity(manifest.subjects.len());
    for entry in &manifest.subjects {
        let path = if entry.recording_path.is_absolute() {
            entry.recording_path.clone()
        } else {
            base.join(&entry.recording_path)
        };
        if !path.is_file() {
            return Err(Error::Data(format!(
                "subject {}: recording file {} does not exist",
                entry.subject_id,
                path.display()
            )));
        }
        let rec = Recording::read_csv_file(&path, &entry.subject_id, entry.label, entry.sample_rate)?
            .without_channels(&manifest.channel_exclusions)
            .map_err(|e| e.context(format!("subject {}", entry.subject_id)))?;
        if let Some(first) = recordings.first() {
            let first: &Recording = first;
            if first.channel_names != rec.channel_names {
                return Err(Error::Data(format!(
                    "subject {}: channels {:?} differ from {:?} of subject {}",
                    rec.subject_id, rec.channel_names, first.channel_names, first.subject_id
                )));
            }
        }
        recordings.push(rec);
    }
    Ok(LoadedDataset { manifest, recordings })
}
