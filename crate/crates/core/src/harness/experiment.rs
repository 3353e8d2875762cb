use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::harness::config::ExperimentConfig;
use crate::kernel::{spectrum_diagnostics, KernelConfig, KernelKind, SpectrumDiagnostics};
use crate::label::Label;
use crate::segmentation::{segment_adaptively, BoundaryRecovery, ThresholdMode};
use crate::signal::{butterworth_bandpass, BandSpec, Recording};
use crate::spd::{Mat, Metric};
use crate::svm::cv::{dataset_gram, loocv_dataset, LoocvResult, TuningProtocol, INNER_FOLDS};
use crate::svm::methods::{represent_all, Method, Representation};
use crate::svm::smo::KKT_TOL;
use crate::svm::ttest::{paired_t_test, TTestResult};
use crate::synth::{add_white_noise, stream_rng, TruthFile};

/// Gram spectrum at the bandwidth most often selected across folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramSummary {
    pub sigma: Option<f64>,
    pub size: usize,
    #[serde(flatten)]
    pub spectrum: SpectrumDiagnostics,
}

/// One (method, band) evaluation with its per-fold records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: Method,
    pub band: String,
    pub kernel: KernelConfig,
    /// Percent, two decimals.
    pub accuracy: f64,
    pub mean_instances_per_subject: f64,
    pub regularized_covariances: usize,
    pub unconverged_folds: usize,
    pub gram: GramSummary,
    pub loocv: LoocvResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyGrid {
    pub methods: Vec<Method>,
    pub bands: Vec<String>,
    /// Row-major: `cells[m * bands.len() + b]`.
    pub cells: Vec<Cell>,
}

impl AccuracyGrid {
    pub fn get(&self, method: Method, band: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.method == method && c.band == band)
    }

    /// Accuracies of one method across bands, in band order.
    pub fn row(&self, method: Method) -> Vec<f64> {
        self.bands
            .iter()
            .filter_map(|b| self.get(method, b).map(|c| c.accuracy))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestEntry {
    pub methods: [Method; 2],
    pub result: Option<TTestResult>,
    /// Why no result is available.
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseCell {
    pub method: Method,
    /// `None` is the clean signal.
    pub snr_db: Option<f64>,
    pub accuracy: f64,
    pub loocv: LoocvResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseGrid {
    pub band: String,
    pub methods: Vec<Method>,
    pub snr_db: Vec<f64>,
    pub cells: Vec<NoiseCell>,
}

impl NoiseGrid {
    /// Accuracies of one method: clean first, then each SNR level in order.
    pub fn row(&self, method: Method) -> Vec<f64> {
        self.cells.iter().filter(|c| c.method == method).map(|c| c.accuracy).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelComparison {
    pub band: String,
    pub method: Method,
    pub cells: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationSummary {
    pub band: String,
    /// Matching tolerance in seconds (one elementary window).
    pub tolerance: f64,
    #[serde(flatten)]
    pub totals: BoundaryRecovery,
    pub recovery_rate: f64,
    pub spurious_rate: f64,
    pub per_subject: Vec<(String, BoundaryRecovery)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub dataset: Option<String>,
    pub subjects: usize,
    pub positives: usize,
    pub channels: Vec<String>,
    pub sample_rate: f64,
    pub config: ExperimentConfig,
    /// Defaults and conventions in effect that the config does not spell out.
    pub decisions: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub accuracy: AccuracyGrid,
    pub t_tests: Vec<TTestEntry>,
    pub noise: Option<NoiseGrid>,
    pub kernel_comparison: Option<KernelComparison>,
    pub segmentation: Option<SegmentationSummary>,
    pub provenance: Provenance,
}

fn baseline_kernel() -> KernelConfig {
    KernelConfig::new(KernelKind::AiGaussian, 1.0)
}

fn method_kernel(method: Method, cfg: &ExperimentConfig) -> KernelConfig {
    match method {
        Method::MiAdaptive | Method::MiFixed => cfg.kernel.clone(),
        Method::MeanCov | Method::BatchCov => baseline_kernel(),
    }
}

fn check_cohort(recordings: &[Recording]) -> Result<()> {
    if recordings.len() < 4 {
        return Err(Error::Data(format!("need at least 4 recordings, got {}", recordings.len())));
    }
    let pos = recordings.iter().filter(|r| r.label == Label::Positive).count();
    if pos == 0 || pos == recordings.len() {
        return Err(Error::Data("the cohort must contain both classes".into()));
    }
    let first = &recordings[0];
    for r in recordings {
        r.validate()?;
        if r.channel_names != first.channel_names {
            return Err(Error::Data(format!(
                "subject {} has channels {:?}, subject {} has {:?}",
                r.subject_id, r.channel_names, first.subject_id, first.channel_names
            )));
        }
        if r.sample_rate != first.sample_rate {
            return Err(Error::Data(format!(
                "subject {} is sampled at {} Hz, subject {} at {} Hz",
                r.subject_id, r.sample_rate, first.subject_id, first.sample_rate
            )));
        }
    }
    Ok(())
}

fn filter_all(recordings: &[Recording], band: &BandSpec, order: usize) -> Result<Vec<Recording>> {
    recordings
        .iter()
        .map(|r| butterworth_bandpass(r, band, order).context_with(|| format!("subject {}", r.subject_id)))
        .collect()
}

/// Distances shared between methods that use the same instances and metric.
#[derive(Default)]
struct DistanceCache {
    entries: Vec<(bool, Metric, Mat)>,
}

impl DistanceCache {
    fn get(&mut self, rep: &Representation, metric: Metric) -> Result<&Mat> {
        // mi-fixed and batch-cov share instance lists; mean-cov and mi-adaptive do not.
        let shared = matches!(rep.method, Method::MiFixed | Method::BatchCov);
        let hit = self.entries.iter().position(|(s, m, _)| shared && *s && *m == metric);
        let idx = match hit {
            Some(i) => i,
            None => {
                let d2 = crate::kernel::pairwise_sq_distances(&rep.dataset.instances, metric)?;
                self.entries.push((shared, metric, d2));
                self.entries.len() - 1
            }
        };
        Ok(&self.entries[idx].2)
    }
}

fn modal_sigma(result: &LoocvResult, kernel: &KernelConfig) -> Option<f64> {
    if !kernel.kind.uses_bandwidth() {
        return None;
    }
    let mut counts: Vec<(f64, usize)> = Vec::new();
    for s in result.folds.iter().filter_map(|f| f.sigma) {
        match counts.iter_mut().find(|(v, _)| *v == s) {
            Some(e) => e.1 += 1,
            None => counts.push((s, 1)),
        }
    }
    // Most frequent; ties to the smaller bandwidth.
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.total_cmp(&b.0)));
    counts.first().map(|c| c.0)
}

fn evaluate(
    rep: &Representation,
    kernel: &KernelConfig,
    cfg: &ExperimentConfig,
    band: &str,
    cache: &mut DistanceCache,
) -> Result<Cell> {
    let d2 = cache.get(rep, kernel.metric())?;
    let loocv = loocv_dataset(&rep.dataset, d2, kernel, &cfg.grid, cfg.protocol)?;
    let sigma = modal_sigma(&loocv, kernel);
    let gram = dataset_gram(&rep.dataset, d2, kernel, sigma)?;
    let spectrum = spectrum_diagnostics(&gram)?;
    let counts = &rep.instances_per_subject;
    Ok(Cell {
        method: rep.method,
        band: band.to_string(),
        kernel: KernelConfig {
            sigma: sigma.unwrap_or(kernel.sigma),
            ..kernel.clone()
        },
        accuracy: loocv.accuracy_percent(),
        mean_instances_per_subject: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
        regularized_covariances: rep.regularized_covariances,
        unconverged_folds: loocv.folds.iter().filter(|f| !f.converged).count(),
        gram: GramSummary {
            sigma,
            size: gram.nrows(),
            spectrum,
        },
        loocv,
    })
}

fn cell_context(band: &str, method: Method) -> impl FnOnce() -> String + '_ {
    move || format!("band {band}, method {method}")
}

fn band_cells(recordings: &[Recording], band: &BandSpec, methods: &[Method], cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let filtered = filter_all(recordings, band, cfg.filter_order).context_with(|| format!("band {}", band.name))?;
    let reps = represent_all(&filtered, methods, &cfg.representation).context_with(|| format!("band {}", band.name))?;
    let mut cache = DistanceCache::default();
    reps.iter()
        .map(|rep| {
            evaluate(rep, &method_kernel(rep.method, cfg), cfg, &band.name, &mut cache)
                .context_with(cell_context(&band.name, rep.method))
        })
        .collect()
}

fn t_tests(grid: &AccuracyGrid, cfg: &ExperimentConfig) -> Vec<TTestEntry> {
    cfg.comparisons
        .iter()
        .map(|&[a, b]| {
            let missing = [a, b].into_iter().find(|m| !grid.methods.contains(m));
            let (result, note) = if let Some(m) = missing {
                (None, Some(format!("{m} was not run")))
            } else if grid.bands.len() < 2 {
                (None, Some("a paired test needs at least 2 bands".to_string()))
            } else {
                match paired_t_test(&grid.row(a), &grid.row(b)) {
                    Ok(r) => (Some(r), None),
                    Err(e) => (None, Some(e.to_string())),
                }
            };
            TTestEntry {
                methods: [a, b],
                result,
                note,
            }
        })
        .collect()
}

fn noise_grid(recordings: &[Recording], cfg: &ExperimentConfig, grid: &AccuracyGrid) -> Result<NoiseGrid> {
    let band = &cfg.reference_band;
    let mut cells = Vec::new();
    let mut clean: BTreeMap<Method, LoocvResult> = cfg
        .noise_methods
        .iter()
        .filter_map(|&m| grid.get(m, &band.name).filter(|_| cfg.bands.contains(band)).map(|c| (m, c.loocv.clone())))
        .collect();
    let missing: Vec<Method> = cfg.noise_methods.iter().copied().filter(|m| !clean.contains_key(m)).collect();
    if !missing.is_empty() {
        for c in band_cells(recordings, band, &missing, cfg)? {
            clean.insert(c.method, c.loocv);
        }
    }
    let mut per_level = Vec::with_capacity(cfg.noise_levels.len());
    for (li, &snr) in cfg.noise_levels.iter().enumerate() {
        let noisy = recordings
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let mut rng = stream_rng(cfg.seed, ((li as u64 + 1) << 32) | k as u64);
                add_white_noise(r, snr, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let cells = band_cells(&noisy, band, &cfg.noise_methods, cfg).context_with(|| format!("noise level {snr} dB"))?;
        per_level.push(cells);
    }
    for &m in &cfg.noise_methods {
        let loocv = clean.remove(&m).expect("clean result computed");
        cells.push(NoiseCell {
            method: m,
            snr_db: None,
            accuracy: loocv.accuracy_percent(),
            loocv,
        });
        for (li, level_cells) in per_level.iter().enumerate() {
            let c = level_cells.iter().find(|c| c.method == m).expect("cell per method");
            cells.push(NoiseCell {
                method: m,
                snr_db: Some(cfg.noise_levels[li]),
                accuracy: c.accuracy,
                loocv: c.loocv.clone(),
            });
        }
    }
    Ok(NoiseGrid {
        band: band.name.clone(),
        methods: cfg.noise_methods.clone(),
        snr_db: cfg.noise_levels.clone(),
        cells,
    })
}

fn kernel_comparison(recordings: &[Recording], cfg: &ExperimentConfig) -> Result<KernelComparison> {
    let band = &cfg.reference_band;
    let filtered = filter_all(recordings, band, cfg.filter_order)?;
    let rep = represent_all(&filtered, &[Method::MiAdaptive], &cfg.representation)?.remove(0);
    let mut cache = DistanceCache::default();
    let cells = cfg
        .kernel_comparison
        .iter()
        .map(|&kind| {
            let kernel = KernelConfig { kind, ..cfg.kernel.clone() };
            evaluate(&rep, &kernel, cfg, &band.name, &mut cache).context_with(|| format!("kernel {kind:?}"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KernelComparison {
        band: band.name.clone(),
        method: Method::MiAdaptive,
        cells,
    })
}

fn segmentation_summary(recordings: &[Recording], truth: &TruthFile, cfg: &ExperimentConfig) -> Result<SegmentationSummary> {
    let band = &cfg.reference_band;
    let seg_cfg = &cfg.representation.segmentation;
    let tolerance = seg_cfg.elementary_window;
    let filtered = filter_all(recordings, band, cfg.filter_order)?;
    let mut totals = BoundaryRecovery::default();
    let mut per_subject = Vec::with_capacity(filtered.len());
    for rec in &filtered {
        let t = truth
            .get(&rec.subject_id)
            .ok_or_else(|| Error::Data(format!("truth file has no entry for subject {}", rec.subject_id)))?;
        let seg = segment_adaptively(rec, seg_cfg).context_with(|| format!("subject {}", rec.subject_id))?;
        let score = BoundaryRecovery::score(&seg.cuts.times(seg_cfg.elementary_window), &t.cut_times, tolerance);
        totals = totals.add(score);
        per_subject.push((rec.subject_id.clone(), score));
    }
    Ok(SegmentationSummary {
        band: band.name.clone(),
        tolerance,
        totals,
        recovery_rate: totals.recovery_rate(),
        spurious_rate: totals.spurious_rate(),
        per_subject,
    })
}

/// Conventions a run depends on, spelled out for the report.
pub fn decisions_in_effect(cfg: &ExperimentConfig) -> BTreeMap<String, String> {
    let seg = &cfg.representation.segmentation;
    let threshold = match seg.threshold {
        ThresholdMode::Absolute { th } => format!("absolute, th = {th}"),
        ThresholdMode::Robust { k } => format!("robust, median + {k} x 1.4826 x MAD of the distance profile"),
    };
    let protocol = match cfg.protocol {
        TuningProtocol::Nested => format!(
            "nested: {INNER_FOLDS}-fold stratified subject-level CV inside each leave-one-out training fold"
        ),
        TuningProtocol::Global => format!("global: one {INNER_FOLDS}-fold CV on all subjects (optimistic)"),
    };
    let entries = [
        ("segmentation_threshold", threshold),
        ("segmentation_local_peak", seg.require_local_peak.to_string()),
        ("segmentation_elementary_window_s", seg.elementary_window.to_string()),
        ("segmentation_metric", seg.metric.to_string()),
        ("covariance_centering", cfg.representation.center.to_string()),
        ("covariance_normalization", "E E^T / (n - 1)".to_string()),
        (
            "covariance_regularization",
            format!("shift by eps * (trace/d) with eps = {} when not SPD", cfg.representation.cov_eps),
        ),
        ("fixed_window_s", cfg.representation.window.to_string()),
        ("fixed_overlap", cfg.representation.overlap.to_string()),
        ("mean_cov_metric", cfg.representation.mean_metric.to_string()),
        (
            "filter",
            format!("Butterworth band-pass of order {}, causal single pass from zero state", cfg.filter_order),
        ),
        ("snr_definition", "per channel, power of the clean broadband signal over the whole recording".to_string()),
        ("noise_ordering", "white noise added to the broadband signal before band-pass filtering".to_string()),
        ("tuning_protocol", protocol),
        ("tuning_tie_break", "first grid point in (sigma, C) order".to_string()),
        ("isometric_centering", "training-pool statistics per fit, out-of-sample formula for held-out bags".to_string()),
        ("baseline_kernel", "affine-invariant Gaussian for mean-cov and batch-cov".to_string()),
        ("batch_cov_vote", "majority of segment labels, ties to positive".to_string()),
        ("svm_solver", format!("SMO, maximal violating pair, KKT tolerance {KKT_TOL}")),
        ("decision_tie", "f = 0 predicts positive".to_string()),
        ("gram_diagnostics", "full-cohort Gram at the most frequently selected bandwidth".to_string()),
    ];
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Evaluate every (band, method) cell, then the optional noise, kernel and
/// segmentation sections. Deterministic given the recordings and `cfg`.
pub fn run_experiment(recordings: &[Recording], truth: Option<&TruthFile>, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    check_cohort(recordings)?;
    let rate = recordings[0].sample_rate;
    for b in cfg.bands.iter().chain([&cfg.reference_band]) {
        b.validate(rate).map_err(|e| Error::Config(e.to_string()))?;
    }

    let mut by_band = Vec::with_capacity(cfg.bands.len());
    for band in &cfg.bands {
        by_band.push(band_cells(recordings, band, &cfg.methods, cfg)?);
    }
    let mut cells = Vec::with_capacity(cfg.methods.len() * cfg.bands.len());
    for &m in &cfg.methods {
        for band_row in &by_band {
            cells.push(band_row.iter().find(|c| c.method == m).expect("one cell per method").clone());
        }
    }
    let accuracy = AccuracyGrid {
        methods: cfg.methods.clone(),
        bands: cfg.bands.iter().map(|b| b.name.clone()).collect(),
        cells,
    };
    let t_tests = t_tests(&accuracy, cfg);
    let noise = if cfg.noise_levels.is_empty() {
        None
    } else {
        Some(noise_grid(recordings, cfg, &accuracy)?)
    };
    let kernel_comparison = if cfg.kernel_comparison.is_empty() {
        None
    } else {
        Some(kernel_comparison(recordings, cfg)?)
    };
    let segmentation = truth.map(|t| segmentation_summary(recordings, t, cfg)).transpose()?;

    Ok(ExperimentReport {
        accuracy,
        t_tests,
        noise,
        kernel_comparison,
        segmentation,
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION").to_string(),
            dataset: None,
            subjects: recordings.len(),
            positives: recordings.iter().filter(|r| r.label == Label::Positive).count(),
            channels: recordings[0].channel_names.clone(),
            sample_rate: rate,
            config: cfg.clone(),
            decisions: decisions_in_effect(cfg),
        },
    })
}
