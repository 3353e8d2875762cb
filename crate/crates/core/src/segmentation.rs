//! Adaptive segmentation into statistically homogeneous pieces.
//!
//! The recording is cut into non-overlapping elementary windows, each described
//! by its spatial covariance. Successive covariances are compared by geodesic
//! distance; a boundary becomes a cut point when its distance exceeds the
//! threshold and (optionally) is a local peak of the distance profile. The
//! elementary windows between cut points are merged and the covariance of each
//! merged span is re-estimated from the raw samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Bag;
use crate::signal::{seconds_to_samples, segment_covariance, Recording, Segment, DEFAULT_COV_EPS};
use crate::spd::{distance, Metric, SpdMatrix};

/// Consistency constant making the MAD an estimator of the Gaussian standard deviation.
pub const MAD_SCALE: f64 = 1.482_602_218_505_602;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum ThresholdMode {
    /// Fixed threshold in distance units.
    Absolute { th: f64 },
    /// `median(d) + k·MAD(d)`, MAD normalized by [`MAD_SCALE`].
    Robust { k: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    /// Elementary window length in seconds.
    pub elementary_window: f64,
    pub metric: Metric,
    pub threshold: ThresholdMode,
    pub require_local_peak: bool,
    /// Subtract per-channel means before estimating covariances.
    pub center: bool,
    pub cov_eps: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            elementary_window: 1.0,
            metric: Metric::AffineInvariant,
            threshold: ThresholdMode::Robust { k: 3.0 },
            require_local_peak: true,
            center: false,
            cov_eps: DEFAULT_COV_EPS,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.elementary_window > 0.0) {
            return Err(Error::Config(format!(
                "elementary window must be positive, got {}",
                self.elementary_window
            )));
        }
        match self.threshold {
            ThresholdMode::Absolute { th } if !(th > 0.0) => {
                Err(Error::Config(format!("absolute threshold must be positive, got {th}")))
            }
            ThresholdMode::Robust { k } if !(k > 0.0) => {
                Err(Error::Config(format!("robust threshold factor must be positive, got {k}")))
            }
            _ => Ok(()),
        }
    }
}

/// Detected cut points on the elementary grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutPointSet {
    /// Elementary boundary indices: `i` means a cut between windows `i-1` and `i`.
    pub indices: Vec<usize>,
    /// `distances[i]` is the distance between windows `i` and `i+1`.
    pub distances: Vec<f64>,
    /// Threshold actually applied (infinite when robust mode declines to cut).
    pub threshold: f64,
}

impl CutPointSet {
    /// Cut positions in seconds for an elementary window length.
    pub fn times(&self, window: f64) -> Vec<f64> {
        self.indices.iter().map(|&i| i as f64 * window).collect()
    }
}

fn elementary_grid(rec: &Recording, window: f64) -> Result<(usize, usize)> {
    if !(window > 0.0) {
        return Err(Error::InvalidArgument(format!("window must be positive, got {window}")));
    }
    let win = seconds_to_samples(window, rec.sample_rate);
    if win < 2 {
        return Err(Error::InvalidArgument(format!("elementary window of {window} s spans fewer than 2 samples")));
    }
    let count = rec.len_samples() / win;
    if count == 0 {
        return Err(Error::InvalidArgument(format!(
            "recording of {} s is shorter than one elementary window ({window} s)",
            rec.duration()
        )));
    }
    Ok((win, count))
}

/// Covariances of consecutive non-overlapping windows, in time order.
pub fn elementary_covariances(rec: &Recording, window: f64) -> Result<Vec<SpdMatrix>> {
    elementary_covariances_with(rec, window, false, DEFAULT_COV_EPS)
}

pub fn elementary_covariances_with(rec: &Recording, window: f64, center: bool, eps: f64) -> Result<Vec<SpdMatrix>> {
    let (win, count) = elementary_grid(rec, window)?;
    (0..count)
        .map(|k| Ok(segment_covariance(rec, &Segment::new(k * win, win), center, eps)?.matrix))
        .collect()
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// `(median, normalized MAD)` of a nonempty sample.
pub fn median_mad(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let med = median(&v);
    let mut dev: Vec<f64> = v.iter().map(|x| (x - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    (med, MAD_SCALE * median(&dev))
}

/// Apply the threshold (and local-peak) rule to a precomputed distance profile.
pub fn cut_points_from_profile(distances: Vec<f64>, cfg: &SegmentationConfig) -> CutPointSet {
    let threshold = match cfg.threshold {
        ThresholdMode::Absolute { th } => th,
        // a single distance gives no spread estimate
        ThresholdMode::Robust { .. } if distances.len() < 2 => f64::INFINITY,
        ThresholdMode::Robust { k } => {
            let (med, mad) = median_mad(&distances);
            med + k * mad
        }
    };
    let n = distances.len();
    let indices = (0..n)
        .filter(|&i| {
            let d = distances[i];
            if !(d > threshold) {
                return false;
            }
            if !cfg.require_local_peak {
                return true;
            }
            (i == 0 || d >= distances[i - 1]) && (i + 1 == n || d >= distances[i + 1])
        })
        .map(|i| i + 1)
        .collect();
    CutPointSet {
        indices,
        distances,
        threshold,
    }
}

pub fn detect_cut_points(covs: &[SpdMatrix], cfg: &SegmentationConfig) -> Result<CutPointSet> {
    if covs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "cut detection needs at least 2 covariances, got {}",
            covs.len()
        )));
    }
    let distances = covs
        .windows(2)
        .map(|w| distance(cfg.metric, &w[0], &w[1]))
        .collect::<Result<Vec<_>>>()?;
    Ok(cut_points_from_profile(distances, cfg))
}

/// Merge elementary windows between cut points into segments that tile the
/// elementary-covered span.
pub fn merge_segments(rec: &Recording, cuts: &CutPointSet, window: f64) -> Result<Vec<Segment>> {
    let (win, count) = elementary_grid(rec, window)?;
    let mut prev = 0usize;
    let mut segments = Vec::with_capacity(cuts.indices.len() + 1);
    for &idx in cuts.indices.iter().chain(std::iter::once(&count)) {
        if idx <= prev || idx > count || (idx == count && prev == count) {
            return Err(Error::InvalidArgument(format!(
                "inconsistent cut index {idx} (previous {prev}, {count} elementary windows)"
            )));
        }
        segments.push(Segment::new(prev * win, (idx - prev) * win));
        prev = idx;
    }
    Ok(segments)
}

/// Full adaptive segmentation of one recording.
#[derive(Clone, Debug)]
pub struct AdaptiveSegmentation {
    pub cuts: CutPointSet,
    pub segments: Vec<Segment>,
    pub covariances: Vec<SpdMatrix>,
    /// Number of segment covariances that needed regularization.
    pub regularized: usize,
}

pub fn segment_adaptively(rec: &Recording, cfg: &SegmentationConfig) -> Result<AdaptiveSegmentation> {
    cfg.validate()?;
    let covs = elementary_covariances_with(rec, cfg.elementary_window, cfg.center, cfg.cov_eps)?;
    let cuts = if covs.len() >= 2 {
        detect_cut_points(&covs, cfg)?
    } else {
        CutPointSet {
            indices: Vec::new(),
            distances: Vec::new(),
            threshold: f64::INFINITY,
        }
    };
    let segments = merge_segments(rec, &cuts, cfg.elementary_window)?;
    let mut regularized = 0;
    let covariances = segments
        .iter()
        .map(|s| {
            let est = segment_covariance(rec, s, cfg.center, cfg.cov_eps)?;
            regularized += usize::from(est.regularized);
            Ok(est.matrix)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AdaptiveSegmentation {
        cuts,
        segments,
        covariances,
        regularized,
    })
}

/// Agreement between detected and true change points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryRecovery {
    pub true_boundaries: usize,
    /// True boundaries with a detected cut within the tolerance.
    pub recovered: usize,
    pub detected: usize,
    /// Detected cuts with no true boundary within the tolerance.
    pub spurious: usize,
}

impl BoundaryRecovery {
    pub fn score(detected: &[f64], truth: &[f64], tolerance: f64) -> Self {
        let near = |t: f64, set: &[f64]| set.iter().any(|&u| (t - u).abs() <= tolerance + 1e-9);
        BoundaryRecovery {
            true_boundaries: truth.len(),
            recovered: truth.iter().filter(|&&t| near(t, detected)).count(),
            detected: detected.len(),
            spurious: detected.iter().filter(|&&t| !near(t, truth)).count(),
        }
    }

    pub fn add(self, other: Self) -> Self {
        BoundaryRecovery {
            true_boundaries: self.true_boundaries + other.true_boundaries,
            recovered: self.recovered + other.recovered,
            detected: self.detected + other.detected,
            spurious: self.spurious + other.spurious,
        }
    }

    /// Fraction of true boundaries recovered (1 when there are none).
    pub fn recovery_rate(&self) -> f64 {
        if self.true_boundaries == 0 {
            1.0
        } else {
            self.recovered as f64 / self.true_boundaries as f64
        }
    }

    /// Spurious cuts per true boundary.
    pub fn spurious_rate(&self) -> f64 {
        self.spurious as f64 / self.true_boundaries.max(1) as f64
    }
}

/// Bag of merged-segment covariances carrying the recording's label.
pub fn make_bag(rec: &Recording, cfg: &SegmentationConfig) -> Result<Bag> {
    let seg = segment_adaptively(rec, cfg)?;
    Bag::new(rec.subject_id.clone(), rec.label, seg.covariances)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn absolute(th: f64) -> SegmentationConfig {
        SegmentationConfig {
            threshold: ThresholdMode::Absolute { th },
            ..Default::default()
        }
    }

    #[test]
    fn hand_traced_profile() {
        let cuts = cut_points_from_profile(vec![0.1, 0.1, 5.0, 0.1], &absolute(1.0));
        assert_eq!(cuts.indices, vec![3]);
    }

    #[test]
    fn stationary_profile_has_no_cuts() {
        let cfg = SegmentationConfig::default();
        let cuts = cut_points_from_profile(vec![0.4; 12], &cfg);
        assert!(cuts.indices.is_empty());
        let cuts = cut_points_from_profile(vec![0.1, 0.9, 0.3], &absolute(f64::INFINITY));
        assert!(cuts.indices.is_empty());
    }

    #[test]
    fn local_peak_suppresses_shoulders() {
        let profile = vec![0.1, 2.0, 3.0, 0.1, 0.1];
        assert_eq!(cut_points_from_profile(profile.clone(), &absolute(1.0)).indices, vec![3]);
        let mut cfg = absolute(1.0);
        cfg.require_local_peak = false;
        assert_eq!(cut_points_from_profile(profile, &cfg).indices, vec![2, 3]);
    }

    #[test]
    fn single_distance_profile() {
        assert_eq!(cut_points_from_profile(vec![2.0], &absolute(1.0)).indices, vec![1]);
        let robust = SegmentationConfig::default();
        assert!(cut_points_from_profile(vec![2.0], &robust).indices.is_empty());
    }

    #[test]
    fn robust_threshold_uses_normalized_mad() {
        let (med, mad) = median_mad(&[1.0, 2.0, 3.0, 4.0, 100.0]);
        assert_eq!(med, 3.0);
        assert!((mad - MAD_SCALE).abs() < 1e-15);
        let cuts = cut_points_from_profile(vec![1.0, 2.0, 3.0, 4.0, 100.0], &SegmentationConfig::default());
        assert_eq!(cuts.indices, vec![5]);
        assert!((cuts.threshold - (3.0 + 3.0 * MAD_SCALE)).abs() < 1e-12);
    }

    #[test]
    fn too_few_covariances() {
        let c = vec![SpdMatrix::identity(2)];
        assert!(detect_cut_points(&c, &SegmentationConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(absolute(0.0).validate().is_err());
        let mut cfg = SegmentationConfig::default();
        cfg.elementary_window = 0.0;
        assert!(cfg.validate().is_err());
        cfg.elementary_window = 1.0;
        cfg.threshold = ThresholdMode::Robust { k: -1.0 };
        assert!(cfg.validate().is_err());
    }
}
