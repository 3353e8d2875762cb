//! Generate a synthetic cohort and write it in the on-disk layout `run` reads:
//! one CSV per subject, `manifest.json` and the `truth.json` sidecar.
//!
//! ```text
//! cargo run --example synth_cohort -- /tmp/cohort
//! ```

use std::path::PathBuf;

use spdmil::harness::manifest::write_truth;
use spdmil::harness::{load_dataset, Manifest, ManifestEntry};
use spdmil::synth::{CohortConfig, TruthFile};
use spdmil::Error;

fn main() -> spdmil::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "cohort".into()));
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    let cfg = CohortConfig {
        n_positive: 5,
        n_negative: 5,
        ..Default::default()
    };
    let subjects = cfg.generate()?;
    let mut entries = Vec::new();
    for s in &subjects {
        let file = format!("{}.csv", s.recording.subject_id);
        s.recording.write_csv_file(&out.join(&file))?;
        entries.push(ManifestEntry {
            subject_id: s.recording.subject_id.clone(),
            label: s.recording.label,
            recording_path: file.into(),
            sample_rate: s.recording.sample_rate,
        });
        println!(
            "{} {:>8} {:5.1} s  regimes {:?}",
            s.truth.subject_id,
            s.truth.label.to_string(),
            s.recording.duration(),
            s.truth.instance_labels
        );
    }
    let manifest = Manifest {
        dataset_name: "example".into(),
        channel_exclusions: Vec::new(),
        subjects: entries,
    };
    manifest.write(&out.join("manifest.json"))?;
    let truth = TruthFile {
        subjects: subjects.into_iter().map(|s| s.truth).collect(),
    };
    write_truth(&out.join("truth.json"), &truth)?;

    // Read it back the way the CLI does.
    let loaded = load_dataset(&out.join("manifest.json"))?;
    println!("reloaded {} recordings from {}", loaded.recordings.len(), out.display());
    Ok(())
}
