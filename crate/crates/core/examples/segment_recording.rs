//! Band-pass a synthetic recording and cut it into homogeneous segments.
//!
//! Each regime of the generated signal has its own covariance, so the detected
//! cuts can be scored against the known regime boundaries.
//!
//! ```text
//! cargo run --example segment_recording
//! ```

use spdmil::segmentation::{segment_adaptively, BoundaryRecovery, SegmentationConfig};
use spdmil::signal::{butterworth_bandpass, DEFAULT_FILTER_ORDER};
use spdmil::synth::{make_synthetic_subject, stream_rng, CohortConfig};
use spdmil::{BandSpec, Label};

fn main() -> spdmil::Result<()> {
    let cfg = CohortConfig::default().synth_config()?;
    let mut rng = stream_rng(3, 0);
    let subject = make_synthetic_subject("demo", Label::Positive, &cfg, &mut rng)?;
    let rec = &subject.recording;
    println!(
        "{} channels, {:.1} s at {} Hz",
        rec.channels(),
        rec.duration(),
        rec.sample_rate
    );

    let filtered = butterworth_bandpass(rec, &BandSpec::broadband(), DEFAULT_FILTER_ORDER)?;
    let seg_cfg = SegmentationConfig::default();
    let seg = segment_adaptively(&filtered, &seg_cfg)?;

    let detected = seg.cuts.times(seg_cfg.elementary_window);
    println!("true cuts     {:?}", subject.truth.cut_times);
    println!("detected cuts {detected:?}");
    println!("regimes       {:?}", subject.truth.instance_labels);
    for s in &seg.segments {
        println!(
            "  segment at {:5.1} s, {:4.1} s long",
            s.start(rec.sample_rate),
            s.duration(rec.sample_rate)
        );
    }

    let score = BoundaryRecovery::score(&detected, &subject.truth.cut_times, seg_cfg.elementary_window);
    println!(
        "recovered {}/{} boundaries, {} spurious",
        score.recovered, score.true_boundaries, score.spurious
    );
    Ok(())
}
