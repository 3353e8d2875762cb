//! A complete experiment: accuracy grid over bands and methods, paired t-tests,
//! a noise sweep and segmentation scoring, rendered as CSV and JSON.
//!
//! ```text
//! cargo run --release --example full_experiment
//! ```

use spdmil::harness::report::render;
use spdmil::harness::{run_experiment, ExperimentConfig, Format};
use spdmil::svm::cv::CvGrid;
use spdmil::svm::methods::Method;
use spdmil::synth::{CohortConfig, TruthFile};
use spdmil::BandSpec;

fn main() -> spdmil::Result<()> {
    let subjects = CohortConfig {
        n_positive: 10,
        n_negative: 10,
        seed: 2,
        ..Default::default()
    }
    .generate()?;
    let truth = TruthFile {
        subjects: subjects.iter().map(|s| s.truth.clone()).collect(),
    };
    let recordings: Vec<_> = subjects.into_iter().map(|s| s.recording).collect();

    let cfg = ExperimentConfig {
        bands: vec![BandSpec::broadband(), BandSpec::new("alpha", 8.0, 12.0)],
        methods: vec![Method::MiAdaptive, Method::MiFixed, Method::MeanCov],
        comparisons: vec![[Method::MiAdaptive, Method::MiFixed], [Method::MiAdaptive, Method::MeanCov]],
        grid: CvGrid::new(vec![1.0, 100.0, 10_000.0], vec![1.0, 10.0, 100.0]),
        noise_levels: vec![10.0, 0.0],
        ..Default::default()
    };
    cfg.validate()?;
    let report = run_experiment(&recordings, Some(&truth), &cfg)?;

    print!("{}", render(&report, Format::Csv)?);
    for t in &report.t_tests {
        println!("{:?}: {:?} {}", t.methods, t.result, t.note.as_deref().unwrap_or(""));
    }
    if let Some(noise) = &report.noise {
        for m in &noise.methods {
            println!("{} under noise {:?} dB: {:?}", m.name(), noise.snr_db, noise.row(*m));
        }
    }
    if let Some(seg) = &report.segmentation {
        println!("boundaries recovered {:.1}%", 100.0 * seg.recovery_rate);
    }
    println!("{} bytes of JSON", render(&report, Format::Json)?.len());
    Ok(())
}
