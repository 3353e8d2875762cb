//! Covariance-based subject representations and their end-to-end evaluation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ResultExt};
use crate::kernel::{pairwise_sq_distances, Bag, KernelConfig, KernelKind};
use crate::signal::{fixed_segments, segment_covariance, Recording, DEFAULT_COV_EPS};
use crate::segmentation::{segment_adaptively, SegmentationConfig};
use crate::spd::{geometric_mean, Mat, Metric, SpdMatrix};
use crate::svm::cv::{loocv_dataset, CvGrid, Dataset, LoocvResult, Subject, TuningProtocol};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Bag of adaptively segmented covariances, multi-instance kernel.
    MiAdaptive,
    /// Bag of fixed-window covariances, multi-instance kernel.
    MiFixed,
    /// Geometric mean of fixed-window covariances, one instance per subject.
    MeanCov,
    /// Every fixed-window covariance is a sample with the subject's label; majority vote.
    BatchCov,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::BatchCov, Method::MeanCov, Method::MiFixed, Method::MiAdaptive];

    pub fn name(self) -> &'static str {
        match self {
            Method::MiAdaptive => "mi-adaptive",
            Method::MiFixed => "mi-fixed",
            Method::MeanCov => "mean-cov",
            Method::BatchCov => "batch-cov",
        }
    }

    fn uses_fixed_windows(self) -> bool {
        !matches!(self, Method::MiAdaptive)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentationConfig {
    pub segmentation: SegmentationConfig,
    /// Fixed-window length in seconds.
    pub window: f64,
    /// Fraction of overlap between fixed windows.
    pub overlap: f64,
    /// Metric of the subject-level geometric mean.
    pub mean_metric: Metric,
    pub center: bool,
    pub cov_eps: f64,
}

impl Default for RepresentationConfig {
    fn default() -> Self {
        RepresentationConfig {
            segmentation: SegmentationConfig::default(),
            window: 2.0,
            overlap: 0.5,
            mean_metric: Metric::AffineInvariant,
            center: false,
            cov_eps: DEFAULT_COV_EPS,
        }
    }
}

/// Fixed-window covariances of one recording and how many needed regularization.
pub fn fixed_covariances(rec: &Recording, cfg: &RepresentationConfig) -> Result<(Vec<SpdMatrix>, usize)> {
    let mut regularized = 0;
    let covs = fixed_segments(rec, cfg.window, cfg.overlap)?
        .iter()
        .map(|s| {
            let est = segment_covariance(rec, s, cfg.center, cfg.cov_eps)?;
            regularized += usize::from(est.regularized);
            Ok(est.matrix)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((covs, regularized))
}

/// A method's dataset together with representation diagnostics.
#[derive(Clone, Debug)]
pub struct Representation {
    pub method: Method,
    pub dataset: Dataset,
    pub regularized_covariances: usize,
    /// Instances per subject before any aggregation (segments or bag size).
    pub instances_per_subject: Vec<usize>,
}

fn subjects_of(recordings: &[Recording]) -> Vec<Subject> {
    recordings
        .iter()
        .map(|r| Subject {
            id: r.subject_id.clone(),
            label: r.label,
        })
        .collect()
}

/// Build datasets for several methods, computing fixed-window covariances once.
pub fn represent_all(recordings: &[Recording], methods: &[Method], cfg: &RepresentationConfig) -> Result<Vec<Representation>> {
    let fixed = if methods.iter().any(|m| m.uses_fixed_windows()) {
        let per_subject = recordings
            .iter()
            .map(|r| fixed_covariances(r, cfg).context_with(|| format!("subject {}", r.subject_id)))
            .collect::<Result<Vec<_>>>()?;
        Some(per_subject)
    } else {
        None
    };
    let subjects = subjects_of(recordings);
    methods
        .iter()
        .map(|&method| {
            let (groups, regularized): (Vec<Vec<SpdMatrix>>, usize) = match method {
                Method::MiAdaptive => {
                    let mut reg = 0;
                    let groups = recordings
                        .iter()
                        .map(|r| {
                            let seg = segment_adaptively(r, &cfg.segmentation)
                                .context_with(|| format!("subject {}", r.subject_id))?;
                            reg += seg.regularized;
                            Ok(seg.covariances)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    (groups, reg)
                }
                _ => {
                    let fixed = fixed.as_ref().expect("fixed covariances computed");
                    (fixed.iter().map(|(c, _)| c.clone()).collect(), fixed.iter().map(|(_, r)| r).sum())
                }
            };
            let instances_per_subject = groups.iter().map(Vec::len).collect();
            let dataset = match method {
                Method::BatchCov => Dataset::from_instance_groups(subjects.clone(), groups)?,
                Method::MeanCov => {
                    let bags = recordings
                        .iter()
                        .zip(groups)
                        .map(|(r, g)| {
                            let mean = geometric_mean(&g, cfg.mean_metric)
                                .context_with(|| format!("geometric mean of subject {}", r.subject_id))?;
                            Bag::new(r.subject_id.clone(), r.label, vec![mean])
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Dataset::from_bags(&bags)
                }
                Method::MiAdaptive | Method::MiFixed => {
                    let bags = recordings
                        .iter()
                        .zip(groups)
                        .map(|(r, g)| Bag::new(r.subject_id.clone(), r.label, g))
                        .collect::<Result<Vec<_>>>()?;
                    Dataset::from_bags(&bags)
                }
            };
            Ok(Representation {
                method,
                dataset,
                regularized_covariances: regularized,
                instances_per_subject,
            })
        })
        .collect()
}

pub fn represent(recordings: &[Recording], method: Method, cfg: &RepresentationConfig) -> Result<Representation> {
    Ok(represent_all(recordings, &[method], cfg)?.remove(0))
}

/// Squared instance distances of a representation under the kernel's metric.
pub fn instance_distances(rep: &Representation, kernel: &KernelConfig) -> Result<Mat> {
    pairwise_sq_distances(&rep.dataset.instances, kernel.metric())
}

/// Represent, then evaluate by leave-one-subject-out.
pub fn classify(
    recordings: &[Recording],
    method: Method,
    rep_cfg: &RepresentationConfig,
    kernel: &KernelConfig,
    grid: &CvGrid,
    protocol: TuningProtocol,
) -> Result<LoocvResult> {
    let rep = represent(recordings, method, rep_cfg)?;
    let d2 = instance_distances(&rep, kernel)?;
    loocv_dataset(&rep.dataset, &d2, kernel, grid, protocol)
}

fn ai_gaussian() -> KernelConfig {
    KernelConfig::new(KernelKind::AiGaussian, 1.0)
}

fn fixed_cfg(window: f64, overlap: f64) -> RepresentationConfig {
    RepresentationConfig {
        window,
        overlap,
        ..Default::default()
    }
}

/// Segment-level SVM with subject-level majority vote (affine-invariant Gaussian kernel).
pub fn classify_batch_cov(recordings: &[Recording], window: f64, overlap: f64, grid: &CvGrid) -> Result<LoocvResult> {
    classify(
        recordings,
        Method::BatchCov,
        &fixed_cfg(window, overlap),
        &ai_gaussian(),
        grid,
        TuningProtocol::Nested,
    )
}

/// Single-instance SVM on each subject's geometric-mean covariance.
pub fn classify_mean_cov(recordings: &[Recording], window: f64, overlap: f64, grid: &CvGrid) -> Result<LoocvResult> {
    classify(
        recordings,
        Method::MeanCov,
        &fixed_cfg(window, overlap),
        &ai_gaussian(),
        grid,
        TuningProtocol::Nested,
    )
}
