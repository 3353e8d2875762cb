//! Instance kernels on SPD matrices and multi-instance set kernels over bags.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Concept, Label};
use crate::spd::{distance, sym_eigenvalues, Mat, Metric, SpdMatrix};

/// One subject: a nonempty multiset of covariance instances.
#[derive(Clone, Debug)]
pub struct Bag {
    pub subject_id: String,
    pub label: Label,
    pub instances: Vec<SpdMatrix>,
    /// Ground-truth concept tags, only known for synthetic data.
    pub hidden_labels: Option<Vec<Concept>>,
}

impl Bag {
    pub fn new(subject_id: impl Into<String>, label: Label, instances: Vec<SpdMatrix>) -> Result<Self> {
        let subject_id = subject_id.into();
        let first = instances
            .first()
            .ok_or_else(|| Error::InvalidArgument(format!("bag {subject_id} has no instances")))?;
        if let Some(bad) = instances.iter().find(|c| c.dim() != first.dim()) {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                found: bad.dim(),
            });
        }
        Ok(Bag {
            subject_id,
            label,
            instances,
            hidden_labels: None,
        })
    }

    pub fn with_hidden_labels(mut self, labels: Vec<Concept>) -> Result<Self> {
        if labels.len() != self.instances.len() {
            return Err(Error::InvalidArgument(format!(
                "bag {} has {} instances but {} hidden labels",
                self.subject_id,
                self.instances.len(),
                labels.len()
            )));
        }
        self.hidden_labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.instances[0].dim()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// `exp(−d_LE²/σ)`; positive definite for every σ.
    LeGaussian,
    /// `exp(−d_AI²/σ)`; not positive definite in general.
    AiGaussian,
    /// Double-centered squared geodesic distances over a pooled instance set.
    Isometric,
}

impl KernelKind {
    pub fn metric(self) -> Option<Metric> {
        match self {
            KernelKind::LeGaussian => Some(Metric::LogEuclidean),
            KernelKind::AiGaussian => Some(Metric::AffineInvariant),
            KernelKind::Isometric => None,
        }
    }

    pub fn uses_bandwidth(self) -> bool {
        !matches!(self, KernelKind::Isometric)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kind: KernelKind,
    /// Bandwidth σ dividing the squared distance.
    pub sigma: f64,
    /// Power applied to each instance-kernel value before summation.
    pub power: u32,
    /// Divide the pairwise sum by `N·M` (mean instead of sum).
    pub normalize: bool,
    /// Geodesic distance feeding the isometric kernel.
    pub isometric_metric: Metric,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            kind: KernelKind::AiGaussian,
            sigma: 1.0,
            power: 1,
            normalize: true,
            isometric_metric: Metric::AffineInvariant,
        }
    }
}

impl KernelConfig {
    pub fn new(kind: KernelKind, sigma: f64) -> Self {
        KernelConfig {
            kind,
            sigma,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("kernel bandwidth must be positive, got {}", self.sigma)));
        }
        if self.power < 1 {
            return Err(Error::Config("kernel power must be at least 1".into()));
        }
        Ok(())
    }

    /// Distance underlying the kernel.
    pub fn metric(&self) -> Metric {
        self.kind.metric().unwrap_or(self.isometric_metric)
    }

    /// Sum (or mean) of `k^p` over a set of instance-kernel values.
    pub(crate) fn aggregate(&self, values: impl Iterator<Item = f64>, n: usize, m: usize) -> f64 {
        let p = self.power as i32;
        let sum: f64 = values.map(|v| if p == 1 { v } else { v.powi(p) }).sum();
        if self.normalize {
            sum / (n * m) as f64
        } else {
            sum
        }
    }
}

#[inline]
pub fn gaussian_from_sq_dist(d2: f64, sigma: f64) -> f64 {
    (-d2 / sigma).exp()
}

/// Gaussian instance kernel for the LE or AI kinds.
pub fn instance_kernel(x: &SpdMatrix, y: &SpdMatrix, cfg: &KernelConfig) -> Result<f64> {
    let metric = cfg.kind.metric().ok_or_else(|| {
        Error::InvalidArgument("the isometric kernel is only defined over a pooled instance set".into())
    })?;
    cfg.validate()?;
    let d = distance(metric, x, y)?;
    Ok(gaussian_from_sq_dist(d * d, cfg.sigma))
}

fn check_bag_dims(x: &Bag, y: &Bag) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidArgument("multi-instance kernel of an empty bag".into()));
    }
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    Ok(())
}

/// Multi-instance set kernel: `Σ_ij k(x_i, y_j)^p`, divided by `N·M` when normalized.
pub fn mi_kernel(x: &Bag, y: &Bag, cfg: &KernelConfig) -> Result<f64> {
    check_bag_dims(x, y)?;
    let mut values = Vec::with_capacity(x.len() * y.len());
    for xi in &x.instances {
        for yj in &y.instances {
            values.push(instance_kernel(xi, yj, cfg)?);
        }
    }
    Ok(cfg.aggregate(values.into_iter(), x.len(), y.len()))
}

/// The set kernel split by the hidden concept tags of the instance pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelDecomposition {
    pub positive_positive: f64,
    pub mixed: f64,
    pub negative_negative: f64,
}

impl KernelDecomposition {
    pub fn total(&self) -> f64 {
        self.positive_positive + self.mixed + self.negative_negative
    }
}

pub fn kernel_decomposition(x: &Bag, y: &Bag, cfg: &KernelConfig) -> Result<KernelDecomposition> {
    check_bag_dims(x, y)?;
    let missing = |b: &Bag| Error::InvalidArgument(format!("bag {} carries no hidden instance labels", b.subject_id));
    let hx = x.hidden_labels.as_ref().ok_or_else(|| missing(x))?;
    let hy = y.hidden_labels.as_ref().ok_or_else(|| missing(y))?;
    let p = cfg.power as i32;
    let (mut pp, mut mixed, mut nn) = (0.0, 0.0, 0.0);
    for (xi, lx) in x.instances.iter().zip(hx) {
        for (yj, ly) in y.instances.iter().zip(hy) {
            let v = instance_kernel(xi, yj, cfg)?.powi(p);
            match (lx, ly) {
                (Concept::Positive, Concept::Positive) => pp += v,
                (Concept::Negative, Concept::Negative) => nn += v,
                _ => mixed += v,
            }
        }
    }
    let norm = if cfg.normalize { (x.len() * y.len()) as f64 } else { 1.0 };
    Ok(KernelDecomposition {
        positive_positive: pp / norm,
        mixed: mixed / norm,
        negative_negative: nn / norm,
    })
}

/// Spectrum summary of a symmetric similarity matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDiagnostics {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// `Σ_{λ<0} λ / Σ |λ|`, in `[−1, 0]`.
    pub negative_eigen_fraction: f64,
    /// `λ_min ≥ −1e-8·max|λ|`.
    pub psd: bool,
}

pub const PSD_TOL: f64 = 1e-8;

pub fn spectrum_diagnostics(m: &Mat) -> Result<SpectrumDiagnostics> {
    let values = sym_eigenvalues(&((m + m.transpose()) * 0.5))?;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let abs_sum: f64 = values.iter().map(|v| v.abs()).sum();
    let neg_sum: f64 = values.iter().filter(|&&v| v < 0.0).sum();
    let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    Ok(SpectrumDiagnostics {
        min_eigenvalue: min,
        max_eigenvalue: max,
        negative_eigen_fraction: if abs_sum > 0.0 { neg_sum / abs_sum } else { 0.0 },
        psd: min >= -PSD_TOL * scale,
    })
}

/// Bag-level similarity matrix with its spectrum diagnostics.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    pub entries: Mat,
    pub diagnostics: SpectrumDiagnostics,
}

impl GramMatrix {
    pub fn new(entries: Mat) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        let diagnostics = spectrum_diagnostics(&entries)?;
        Ok(GramMatrix { entries, diagnostics })
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }
}

/// Pairwise squared geodesic distances `D²` over a list of instances.
pub fn pairwise_sq_distances(instances: &[SpdMatrix], metric: Metric) -> Result<Mat> {
    let n = instances.len();
    let mut d2 = Mat::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = distance(metric, &instances[i], &instances[j])?;
            d2[(i, j)] = d * d;
            d2[(j, i)] = d * d;
        }
    }
    Ok(d2)
}

/// `−½·J·D²·J` with `J = I − 11ᵀ/N`.
pub fn double_center(d2: &Mat) -> Mat {
    let n = d2.nrows();
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| d2.row(i).sum() / nf).collect();
    let col_means: Vec<f64> = (0..n).map(|j| d2.column(j).sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    Mat::from_fn(n, n, |i, j| -0.5 * (d2[(i, j)] - row_means[i] - col_means[j] + grand))
}

/// Isometric (classical-MDS) similarity over a pooled instance set.
pub fn isometric_instance_similarity(instances: &[SpdMatrix], metric: Metric) -> Result<Mat> {
    if instances.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "isometric similarity needs at least 2 instances, got {}",
            instances.len()
        )));
    }
    Ok(double_center(&pairwise_sq_distances(instances, metric)?))
}

/// Aggregate an instance-level kernel matrix into a bag-level one; `ranges[a]`
/// lists the rows of bag `a` in `k_rows`, `cols[b]` the columns of bag `b`.
pub(crate) fn aggregate_blocks(
    k: &Mat,
    rows: &[std::ops::Range<usize>],
    cols: &[std::ops::Range<usize>],
    cfg: &KernelConfig,
) -> Mat {
    Mat::from_fn(rows.len(), cols.len(), |a, b| {
        let (ra, rb) = (&rows[a], &cols[b]);
        let values = ra.clone().flat_map(|i| rb.clone().map(move |j| k[(i, j)]));
        cfg.aggregate(values, ra.len(), rb.len())
    })
}

pub(crate) fn bag_ranges(sizes: impl IntoIterator<Item = usize>) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    sizes
        .into_iter()
        .map(|n| {
            let r = start..start + n;
            start += n;
            r
        })
        .collect()
}

/// Bag-level Gram matrix. For the isometric kind the instances of all bags are
/// pooled and double-centered together before aggregation.
pub fn gram_matrix(bags: &[Bag], cfg: &KernelConfig) -> Result<GramMatrix> {
    if bags.len() < 2 {
        return Err(Error::InvalidArgument(format!("Gram matrix needs at least 2 bags, got {}", bags.len())));
    }
    cfg.validate()?;
    for b in bags {
        check_bag_dims(&bags[0], b)?;
    }
    let pool: Vec<SpdMatrix> = bags.iter().flat_map(|b| b.instances.iter().cloned()).collect();
    let d2 = pairwise_sq_distances(&pool, cfg.metric())?;
    let k = match cfg.kind {
        KernelKind::Isometric => double_center(&d2),
        _ => d2.map(|v| gaussian_from_sq_dist(v, cfg.sigma)),
    };
    let ranges = bag_ranges(bags.iter().map(Bag::len));
    let g = aggregate_blocks(&k, &ranges, &ranges, cfg);
    GramMatrix::new((&g + g.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn diag(v: &[f64]) -> SpdMatrix {
        SpdMatrix::from_diagonal(v).unwrap()
    }

    #[test]
    fn instance_kernel_values() {
        let cfg = KernelConfig::new(KernelKind::LeGaussian, 4.0);
        let x = SpdMatrix::identity(2);
        assert_eq!(instance_kernel(&x, &x, &cfg).unwrap(), 1.0);
        let y = diag(&[E * E, 1.0]);
        assert!((instance_kernel(&x, &y, &cfg).unwrap() - (-1.0_f64).exp()).abs() < 1e-15);
        let iso = KernelConfig::new(KernelKind::Isometric, 1.0);
        assert!(instance_kernel(&x, &y, &iso).is_err());
    }

    #[test]
    fn mi_kernel_reductions() {
        let a = diag(&[1.0, 2.0]);
        let b = diag(&[3.0, 0.5]);
        let cfg = KernelConfig::new(KernelKind::AiGaussian, 2.0);
        let single = Bag::new("x", Label::Positive, vec![a.clone()]).unwrap();
        assert!((mi_kernel(&single, &single, &cfg).unwrap() - 1.0).abs() < 1e-15);

        let x = Bag::new("x", Label::Positive, vec![a.clone(), b.clone()]).unwrap();
        let y = Bag::new("y", Label::Negative, vec![a.clone()]).unwrap();
        let expected = (1.0 + instance_kernel(&b, &a, &cfg).unwrap()) / 2.0;
        assert!((mi_kernel(&x, &y, &cfg).unwrap() - expected).abs() < 1e-15);

        let raw = KernelConfig {
            normalize: false,
            ..cfg.clone()
        };
        let sb = Bag::new("b", Label::Negative, vec![b.clone()]).unwrap();
        assert_eq!(mi_kernel(&single, &sb, &raw).unwrap(), instance_kernel(&a, &b, &cfg).unwrap());
    }

    #[test]
    fn dimension_mismatch_between_bags() {
        let x = Bag::new("x", Label::Positive, vec![SpdMatrix::identity(2)]).unwrap();
        let y = Bag::new("y", Label::Positive, vec![SpdMatrix::identity(3)]).unwrap();
        assert!(mi_kernel(&x, &y, &KernelConfig::default()).is_err());
        assert!(Bag::new("z", Label::Positive, vec![SpdMatrix::identity(2), SpdMatrix::identity(3)]).is_err());
        assert!(Bag::new("z", Label::Positive, vec![]).is_err());
    }

    #[test]
    fn identical_singletons_give_all_ones() {
        let bags: Vec<Bag> = (0..4)
            .map(|i| Bag::new(format!("s{i}"), Label::Positive, vec![diag(&[2.0, 1.0])]).unwrap())
            .collect();
        let g = gram_matrix(&bags, &KernelConfig::new(KernelKind::LeGaussian, 1.0)).unwrap();
        assert!((g.entries.clone() - Mat::from_element(4, 4, 1.0)).norm() < 1e-15);
        assert!((g.diagnostics.max_eigenvalue - 4.0).abs() < 1e-12);
        assert!(g.diagnostics.min_eigenvalue.abs() < 1e-12);
        assert_eq!(g.diagnostics.negative_eigen_fraction.abs() < 1e-12, true);
        assert!(g.diagnostics.psd);
    }

    #[test]
    fn two_point_double_centering() {
        let delta: f64 = 1.7;
        let d2 = Mat::from_row_slice(2, 2, &[0.0, delta * delta, delta * delta, 0.0]);
        let s = double_center(&d2);
        let q = delta * delta / 4.0;
        let expected = Mat::from_row_slice(2, 2, &[q, -q, -q, q]);
        assert!((s - expected).norm() < 1e-15);
    }

    #[test]
    fn identical_instances_center_to_zero() {
        let c = diag(&[2.0, 3.0]);
        let s = isometric_instance_similarity(&[c.clone(), c.clone(), c], Metric::AffineInvariant).unwrap();
        assert!(s.norm() < 1e-15);
        assert!(isometric_instance_similarity(&[diag(&[1.0, 1.0])], Metric::LogEuclidean).is_err());
    }

    #[test]
    fn decomposition_requires_labels_and_partitions() {
        let cfg = KernelConfig::new(KernelKind::AiGaussian, 1.0);
        let p = diag(&[4.0, 1.0]);
        let n = diag(&[1.0, 4.0]);
        let x = Bag::new("x", Label::Positive, vec![p.clone(), n.clone()]).unwrap();
        let y = Bag::new("y", Label::Negative, vec![n.clone()]).unwrap();
        assert!(kernel_decomposition(&x, &y, &cfg).is_err());
        let x = x.with_hidden_labels(vec![Concept::Positive, Concept::Negative]).unwrap();
        let y = y.with_hidden_labels(vec![Concept::Negative]).unwrap();
        let dec = kernel_decomposition(&x, &y, &cfg).unwrap();
        assert_eq!(dec.positive_positive, 0.0);
        assert!((dec.total() - mi_kernel(&x, &y, &cfg).unwrap()).abs() <= 1e-12);

        let all_pos = Bag::new("p", Label::Positive, vec![p.clone()])
            .unwrap()
            .with_hidden_labels(vec![Concept::Positive])
            .unwrap();
        let all_neg = Bag::new("n", Label::Negative, vec![n])
            .unwrap()
            .with_hidden_labels(vec![Concept::Negative])
            .unwrap();
        let dec = kernel_decomposition(&all_pos, &all_pos, &cfg).unwrap();
        assert_eq!((dec.mixed, dec.negative_negative), (0.0, 0.0));
        assert_eq!(dec.positive_positive, mi_kernel(&all_pos, &all_pos, &cfg).unwrap());
        let dec = kernel_decomposition(&all_neg, &all_pos, &cfg).unwrap();
        assert_eq!((dec.positive_positive, dec.negative_negative), (0.0, 0.0));
        assert_eq!(dec.mixed, mi_kernel(&all_neg, &all_pos, &cfg).unwrap());
    }
}
