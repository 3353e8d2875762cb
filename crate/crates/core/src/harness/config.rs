use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelConfig, KernelKind};
use crate::signal::{BandSpec, DEFAULT_FILTER_ORDER};
use crate::svm::cv::{CvGrid, TuningProtocol};
use crate::svm::methods::{Method, RepresentationConfig};

/// Everything a run depends on besides the recordings themselves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub bands: Vec<BandSpec>,
    pub methods: Vec<Method>,
    /// Kernel of the multi-instance methods. The single-instance baselines
    /// always use the affine-invariant Gaussian kernel.
    pub kernel: KernelConfig,
    pub representation: RepresentationConfig,
    pub grid: CvGrid,
    pub protocol: TuningProtocol,
    pub filter_order: usize,
    /// Band of the noise grid, the kernel comparison and the segmentation summary.
    pub reference_band: BandSpec,
    /// SNR levels in dB; empty disables the noise grid.
    pub noise_levels: Vec<f64>,
    pub noise_methods: Vec<Method>,
    /// Concept-level kernels compared on mi-adaptive; empty disables the comparison.
    pub kernel_comparison: Vec<KernelKind>,
    /// Method pairs compared by paired t-test over bands.
    pub comparisons: Vec<[Method; 2]>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            bands: BandSpec::standard_bands(),
            methods: Method::ALL.to_vec(),
            kernel: KernelConfig::default(),
            representation: RepresentationConfig::default(),
            grid: CvGrid::default(),
            protocol: TuningProtocol::default(),
            filter_order: DEFAULT_FILTER_ORDER,
            reference_band: BandSpec::broadband(),
            noise_levels: Vec::new(),
            noise_methods: vec![Method::MiAdaptive],
            kernel_comparison: Vec::new(),
            comparisons: [Method::MiFixed, Method::MeanCov, Method::BatchCov]
                .into_iter()
                .map(|m| [Method::MiAdaptive, m])
                .collect(),
            seed: 0,
        }
    }
}

fn no_duplicates<T: Ord>(items: impl IntoIterator<Item = T>) -> bool {
    let mut seen = BTreeSet::new();
    items.into_iter().all(|x| seen.insert(x))
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}:{}: invalid experiment config: {e}", path.display(), e.line())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands.is_empty() {
            return Err(Error::Config("at least one band is required".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if !no_duplicates(self.bands.iter().map(|b| b.name.as_str())) {
            return Err(Error::Config("band names must be unique".into()));
        }
        if !no_duplicates(&self.methods) || !no_duplicates(&self.noise_methods) {
            return Err(Error::Config("methods must not repeat".into()));
        }
        if !no_duplicates(self.kernel_comparison.iter().map(|k| format!("{k:?}"))) {
            return Err(Error::Config("kernel comparison lists a kernel twice".into()));
        }
        for b in self.bands.iter().chain([&self.reference_band]) {
            if !(b.low > 0.0 && b.low < b.high && b.high.is_finite()) {
                return Err(Error::Config(format!("band {}: need 0 < low < high, got {}..{}", b.name, b.low, b.high)));
            }
        }
        if self.filter_order == 0 {
            return Err(Error::Config("filter order must be at least 1".into()));
        }
        if let Some(v) = self.noise_levels.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "noise level {v} dB is not finite (the clean column is always reported)"
            )));
        }
        if !self.noise_levels.is_empty() && self.noise_methods.is_empty() {
            return Err(Error::Config("noise levels given without noise methods".into()));
        }
        if let Some([a, b]) = self.comparisons.iter().find(|[a, b]| a == b) {
            return Err(Error::Config(format!("comparison of {a} with itself ({b})")));
        }
        let r = &self.representation;
        if !(r.window > 0.0) || !(0.0..1.0).contains(&r.overlap) {
            return Err(Error::Config(format!(
                "fixed windows need window > 0 and overlap in [0, 1), got {} s and {}",
                r.window, r.overlap
            )));
        }
        self.kernel.validate().map_err(|e| Error::Config(format!("kernel: {e}")))?;
        self.grid.validate().map_err(|e| Error::Config(format!("grid: {e}")))?;
        r.segmentation
            .validate()
            .map_err(|e| Error::Config(format!("segmentation: {e}")))?;
        Ok(())
    }
}
