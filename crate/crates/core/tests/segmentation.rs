mod common;

use common::*;
use spdmil::segmentation::{
    cut_points_from_profile, detect_cut_points, elementary_covariances, make_bag, merge_segments, segment_adaptively,
    BoundaryRecovery, CutPointSet, SegmentationConfig, ThresholdMode,
};
use spdmil::synth::{sample_gaussian, stream_rng};
use spdmil::{Label, Recording, SpdMatrix};

const FS: f64 = 128.0;

fn regimes(covs: &[(&SpdMatrix, f64)], seed: u64) -> Recording {
    let mut r = stream_rng(seed, 0);
    let d = covs[0].0.dim();
    let mut samples = vec![Vec::new(); d];
    for (c, seconds) in covs {
        let block = sample_gaussian(c, (seconds * FS) as usize, &mut r).unwrap();
        for (ch, b) in samples.iter_mut().zip(block) {
            ch.extend(b);
        }
    }
    let names = (0..d).map(|i| format!("c{i}")).collect();
    Recording::new("r", Label::Positive, FS, names, samples).unwrap()
}

/// Two concepts far apart in the affine-invariant metric.
fn far_pair() -> (SpdMatrix, SpdMatrix) {
    let a = SpdMatrix::from_diagonal(&[1.0, 2.0, 0.5, 1.0]).unwrap();
    let b = SpdMatrix::from_diagonal(&[20.0, 0.1, 6.0, 0.05]).unwrap();
    (a, b)
}

#[test]
fn stationary_source_keeps_successive_distances_small() {
    let c = spd_with_condition(&mut rng(1), 4, 20.0);
    let rec = regimes(&[(&c, 30.0)], 2);
    let covs = elementary_covariances(&rec, 1.0).unwrap();
    let profile = detect_cut_points(&covs, &SegmentationConfig::default()).unwrap().distances;
    // two independent n-sample estimates sit about √(2·d(d+1)/n) apart
    let bound = 3.0 * (2.0 * 4.0 * 5.0 / FS).sqrt();
    let max = profile.iter().copied().fold(0.0, f64::max);
    assert!(max <= bound, "largest successive distance {max} exceeds {bound}");
}

#[test]
fn two_regimes_give_one_large_distance_at_the_boundary() {
    let (a, b) = far_pair();
    let rec = regimes(&[(&a, 5.0), (&b, 5.0)], 3);
    let covs = elementary_covariances(&rec, 1.0).unwrap();
    let cuts = detect_cut_points(&covs, &SegmentationConfig::default()).unwrap();
    let peak = cuts.distances[4];
    for (i, d) in cuts.distances.iter().enumerate() {
        if i != 4 {
            assert!(*d < peak / 3.0, "distance {i} = {d} vs boundary {peak}");
        }
    }
    assert_eq!(cuts.indices, vec![5]);
}

#[test]
fn absolute_threshold_hand_trace() {
    let cfg = SegmentationConfig {
        threshold: ThresholdMode::Absolute { th: 1.0 },
        ..Default::default()
    };
    let cuts = cut_points_from_profile(vec![0.1, 0.1, 5.0, 0.1], &cfg);
    assert_eq!(cuts.indices, vec![3]);
}

fn direct_covariance(rec: &Recording, start: usize, len: usize) -> nalgebra::DMatrix<f64> {
    let d = rec.channels();
    nalgebra::DMatrix::from_fn(d, d, |i, j| {
        (start..start + len).map(|t| rec.samples[i][t] * rec.samples[j][t]).sum::<f64>() / (len - 1) as f64
    })
}

#[test]
fn merged_segments_are_recomputed_from_samples() {
    let c = spd_with_condition(&mut rng(4), 3, 10.0);
    let rec = regimes(&[(&c, 10.0)], 5);
    let cuts = CutPointSet {
        indices: vec![3],
        distances: vec![0.0; 9],
        threshold: 1.0,
    };
    let segs = merge_segments(&rec, &cuts, 1.0).unwrap();
    assert_eq!(segs.len(), 2);
    assert_eq!((segs[0].len_samples, segs[1].len_samples), (3 * 128, 7 * 128));
    for s in &segs {
        let got = s.covariance(&rec, false, 1e-6).unwrap().matrix;
        let want = direct_covariance(&rec, s.start_sample, s.len_samples);
        assert!(max_abs_diff(got.as_matrix(), &want) <= 1e-12 * want.amax());
    }
}

#[test]
fn stationary_recording_is_a_singleton_bag() {
    let c = spd_with_condition(&mut rng(6), 4, 10.0);
    let rec = regimes(&[(&c, 20.0)], 7);
    assert_eq!(make_bag(&rec, &SegmentationConfig::default()).unwrap().len(), 1);
}

#[test]
fn three_separated_regimes_are_three_instances() {
    let (a, b) = far_pair();
    let rec = regimes(&[(&a, 6.0), (&b, 6.0), (&a, 6.0)], 8);
    let seg = segment_adaptively(&rec, &SegmentationConfig::default()).unwrap();
    assert_eq!(seg.covariances.len(), 3);
    let score = BoundaryRecovery::score(&seg.cuts.times(1.0), &[6.0, 12.0], 1.0);
    assert_eq!((score.recovered, score.spurious), (2, 0));
}

#[test]
fn boundary_scoring() {
    let s = BoundaryRecovery::score(&[2.0, 5.0, 9.0], &[2.5, 7.0], 1.0);
    assert_eq!((s.true_boundaries, s.recovered, s.detected, s.spurious), (2, 1, 3, 2));
    assert_eq!(s.recovery_rate(), 0.5);
    assert_eq!(BoundaryRecovery::default().recovery_rate(), 1.0);
}
