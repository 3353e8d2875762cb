//! Leave-one-subject-out evaluation of every representation on a small cohort.
//!
//! ```text
//! cargo run --release --example svm_loocv
//! ```

use spdmil::signal::butterworth_bandpass;
use spdmil::svm::cv::{CvGrid, TuningProtocol};
use spdmil::svm::methods::{classify, Method, RepresentationConfig};
use spdmil::synth::CohortConfig;
use spdmil::{BandSpec, KernelConfig, KernelKind};

fn main() -> spdmil::Result<()> {
    let cohort = CohortConfig {
        n_positive: 8,
        n_negative: 8,
        seed: 4,
        ..Default::default()
    };
    let band = BandSpec::broadband();
    let recordings = cohort
        .generate()?
        .into_iter()
        .map(|s| butterworth_bandpass(&s.recording, &band, 5))
        .collect::<spdmil::Result<Vec<_>>>()?;

    // A coarse grid keeps the nested search quick.
    let grid = CvGrid::new(vec![1.0, 100.0, 10_000.0], vec![1.0, 10.0, 100.0]);
    let rep = RepresentationConfig::default();
    let kernel = KernelConfig::new(KernelKind::AiGaussian, 1.0);
    for method in Method::ALL {
        let res = classify(&recordings, method, &rep, &kernel, &grid, TuningProtocol::Nested)?;
        println!("{:<12} {:6.2}%", method.name(), res.accuracy_percent());
        for f in res.folds.iter().filter(|f| !f.correct()) {
            println!("    missed {} (decision {:+.3}, C = {}, σ = {:?})", f.subject_id, f.decision, f.c, f.sigma);
        }
    }
    Ok(())
}
