//! Piecewise-stationary multichannel Gaussian cohorts with known ground truth.
//!
//! Each subject is a concatenation of regimes; every regime is i.i.d. zero-mean
//! Gaussian with a scripted covariance ("concept"). Positive subjects contain at
//! least one regime drawn from the positive concepts, negative subjects only
//! distractors, so the bag label is the disjunction of the hidden instance tags.
//!
//! Randomness comes from ChaCha8 seeded with the cohort seed; subject `k` draws
//! from stream `k`, so subjects are independent of generation order.

use nalgebra::{Cholesky, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Concept, Label};
use crate::signal::{seconds_to_samples, Recording};
use crate::spd::{dist_affine_invariant, Mat, SpdMatrix};

/// Seeded generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Haar-ish random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Mat {
    let g = Mat::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Random SPD matrix `Q·diag(λ)·Qᵀ` with `λ_max/λ_min ≤ max_condition`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, d: usize, max_condition: f64) -> SpdMatrix {
    let q = random_orthogonal(rng, d);
    let span = max_condition.max(1.0).ln();
    let offset: f64 = rng.random_range(-1.0..1.0);
    let lambdas = DVector::from_fn(d, |_, _| (offset + rng.random_range(0.0..=1.0) * span).exp());
    let m = &q * Mat::from_diagonal(&lambdas) * q.transpose();
    SpdMatrix::new((&m + m.transpose()) * 0.5).expect("constructed from a positive spectrum")
}

/// Draw `n` i.i.d. samples of `N(0, cov)` as a channels × n block.
pub fn sample_gaussian<R: Rng + ?Sized>(cov: &SpdMatrix, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let chol = Cholesky::new(cov.as_matrix().clone())
        .ok_or_else(|| Error::Numerical("Cholesky factorization of regime covariance failed".into()))?;
    let l = chol.l();
    let d = cov.dim();
    let mut out = vec![Vec::with_capacity(n); d];
    let mut z = DVector::zeros(d);
    for _ in 0..n {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let x = &l * &z;
        for (ch, v) in out.iter_mut().zip(x.iter()) {
            ch.push(*v);
        }
    }
    Ok(out)
}

/// Samples for one regime of `duration` seconds at `rate` Hz.
pub fn sample_regime<R: Rng + ?Sized>(cov: &SpdMatrix, duration: f64, rate: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let n = seconds_to_samples(duration, rate);
    if n < 1 {
        return Err(Error::InvalidArgument(format!(
            "regime of {duration} s at {rate} Hz contains no samples"
        )));
    }
    sample_gaussian(cov, n, rng)
}

/// Inclusive integer range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub min: usize,
    pub max: usize,
}

impl Span {
    pub fn new(min: usize, max: usize) -> Self {
        Span { min, max }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub channels: usize,
    pub sample_rate: f64,
    pub positive_concepts: Vec<SpdMatrix>,
    pub distractor_concepts: Vec<SpdMatrix>,
    pub regimes_per_subject: Span,
    /// Number of positive regimes in a positive subject (clamped to the regime count).
    pub positive_regimes: Span,
    /// Regime duration range in seconds, `[min, max]`.
    pub duration_range: (f64, f64),
    pub seed: u64,
}

/// Separation targets for generated concept sets, in affine-invariant distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConceptGeometry {
    pub n_positive: usize,
    pub n_distractor: usize,
    /// Minimum distance from every positive concept to every distractor.
    pub positive_gap: f64,
    /// Minimum distance between any two distractors (and between positives).
    pub distractor_gap: f64,
    /// Condition-number cap of each concept.
    pub max_condition: f64,
    /// Minimum positive-to-distractor distance that must survive white noise at
    /// `reference_snr_db` (noise power taken from the pair's mean diagonal).
    pub noisy_positive_gap: f64,
    pub reference_snr_db: f64,
    /// Mean channel power of each concept is `exp(u)`, `u` uniform in `[−power_spread, power_spread]`.
    pub power_spread: f64,
}

impl Default for ConceptGeometry {
    fn default() -> Self {
        ConceptGeometry {
            n_positive: 1,
            n_distractor: 8,
            positive_gap: 3.5,
            distractor_gap: 3.5,
            max_condition: 100.0,
            noisy_positive_gap: 2.0,
            reference_snr_db: 0.0,
            power_spread: 0.5,
        }
    }
}

/// Rejection-sample concept sets meeting the separation targets.
pub fn generate_concepts(d: usize, geometry: &ConceptGeometry, seed: u64) -> Result<(Vec<SpdMatrix>, Vec<SpdMatrix>)> {
    if geometry.n_positive == 0 || geometry.n_distractor == 0 {
        return Err(Error::Config("need at least one positive and one distractor concept".into()));
    }
    let mut rng = stream_rng(seed, u64::MAX);
    const MAX_TRIES: usize = 100_000;
    let noise_ratio = 10f64.powf(-geometry.reference_snr_db / 10.0);
    let noisy_gap_ok = |a: &SpdMatrix, b: &SpdMatrix| -> bool {
        if geometry.noisy_positive_gap <= 0.0 {
            return true;
        }
        let diag = (a.as_matrix() + b.as_matrix()).diagonal() * (0.5 * noise_ratio);
        let noise = Mat::from_diagonal(&diag);
        match (SpdMatrix::new(a.as_matrix() + &noise), SpdMatrix::new(b.as_matrix() + &noise)) {
            (Ok(x), Ok(y)) => dist_affine_invariant(&x, &y).is_ok_and(|v| v >= geometry.noisy_positive_gap),
            _ => false,
        }
    };
    let mut accept = |pool: &[SpdMatrix], gap: f64, others: &[SpdMatrix], other_gap: f64| -> Result<SpdMatrix> {
        for _ in 0..MAX_TRIES {
            let raw = random_spd(&mut rng, d, geometry.max_condition);
            let power = if geometry.power_spread > 0.0 {
                rng.random_range(-geometry.power_spread..=geometry.power_spread).exp()
            } else {
                1.0
            };
            let c = raw.scaled(power * d as f64 / raw.trace())?;
            let ok = pool.iter().all(|p| dist_affine_invariant(p, &c).is_ok_and(|x| x >= gap))
                && others
                    .iter()
                    .all(|p| dist_affine_invariant(p, &c).is_ok_and(|x| x >= other_gap) && (other_gap <= 0.0 || noisy_gap_ok(p, &c)));
            if ok {
                return Ok(c);
            }
        }
        Err(Error::Config(format!(
            "could not place concepts with gaps ({}, {}) in dimension {d}",
            geometry.positive_gap, geometry.distractor_gap
        )))
    };
    let mut distractors = Vec::with_capacity(geometry.n_distractor);
    for _ in 0..geometry.n_distractor {
        let c = accept(&distractors, geometry.distractor_gap, &[], 0.0)?;
        distractors.push(c);
    }
    let mut positives = Vec::with_capacity(geometry.n_positive);
    for _ in 0..geometry.n_positive {
        let c = accept(&positives, geometry.distractor_gap, &distractors, geometry.positive_gap)?;
        positives.push(c);
    }
    Ok((positives, distractors))
}

impl SynthConfig {
    /// Default cohort layout with concepts placed by [`generate_concepts`].
    pub fn with_geometry(channels: usize, geometry: &ConceptGeometry, seed: u64) -> Result<Self> {
        let (positive_concepts, distractor_concepts) = generate_concepts(channels, geometry, seed)?;
        Ok(SynthConfig {
            channels,
            sample_rate: 128.0,
            positive_concepts,
            distractor_concepts,
            regimes_per_subject: Span::new(4, 6),
            positive_regimes: Span::new(1, 1),
            duration_range: (3.0, 6.0),
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.positive_concepts.is_empty() || self.distractor_concepts.is_empty() {
            return Err(Error::Config("need at least one positive and one distractor concept".into()));
        }
        if let Some(c) = self
            .positive_concepts
            .iter()
            .chain(&self.distractor_concepts)
            .find(|c| c.dim() != self.channels)
        {
            return Err(Error::Config(format!(
                "concept of dimension {} in a {}-channel configuration",
                c.dim(),
                self.channels
            )));
        }
        if self.channels < 2 {
            return Err(Error::Config("need at least 2 channels".into()));
        }
        if !(self.sample_rate > 0.0) {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        let (lo, hi) = self.duration_range;
        if !(lo > 0.0 && lo <= hi) || seconds_to_samples(lo, self.sample_rate) < 1 {
            return Err(Error::Config(format!("invalid duration range ({lo}, {hi})")));
        }
        let r = self.regimes_per_subject;
        if r.min < 1 || r.min > r.max {
            return Err(Error::Config(format!("invalid regime count range {}..={}", r.min, r.max)));
        }
        let p = self.positive_regimes;
        if p.min < 1 || p.min > p.max {
            return Err(Error::Config(format!("invalid positive regime range {}..={}", p.min, p.max)));
        }
        Ok(())
    }
}

/// Ground truth for one generated subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub subject_id: String,
    pub label: Label,
    /// Regime boundaries in seconds (interior only).
    pub cut_times: Vec<f64>,
    /// Concept tag of every regime, in time order.
    pub instance_labels: Vec<Concept>,
}

/// Truth sidecar document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub subjects: Vec<SubjectTruth>,
}

impl TruthFile {
    pub fn get(&self, subject_id: &str) -> Option<&SubjectTruth> {
        self.subjects.iter().find(|s| s.subject_id == subject_id)
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticSubject {
    pub recording: Recording,
    pub truth: SubjectTruth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ConceptRef {
    Positive(usize),
    Distractor(usize),
}

fn pick_distinct<R: Rng + ?Sized>(rng: &mut R, n: usize, avoid: Option<usize>) -> usize {
    match avoid {
        Some(a) if n > 1 => {
            let k = rng.random_range(0..n - 1);
            if k >= a {
                k + 1
            } else {
                k
            }
        }
        _ => rng.random_range(0..n),
    }
}

/// One subject of class `label`. Adjacent regimes that draw the same concept are
/// merged so every reported cut time is a genuine change of covariance.
pub fn make_synthetic_subject<R: Rng + ?Sized>(
    subject_id: impl Into<String>,
    label: Label,
    cfg: &SynthConfig,
    rng: &mut R,
) -> Result<SyntheticSubject> {
    cfg.validate()?;
    let n_regimes = rng.random_range(cfg.regimes_per_subject.min..=cfg.regimes_per_subject.max);
    let mut is_positive = vec![false; n_regimes];
    if label == Label::Positive {
        let want = rng
            .random_range(cfg.positive_regimes.min..=cfg.positive_regimes.max)
            .min(n_regimes);
        let mut slots: Vec<usize> = (0..n_regimes).collect();
        for k in 0..want {
            let j = rng.random_range(k..n_regimes);
            slots.swap(k, j);
            is_positive[slots[k]] = true;
        }
    }

    let mut regimes: Vec<(ConceptRef, usize)> = Vec::with_capacity(n_regimes);
    let (lo, hi) = cfg.duration_range;
    for &pos in &is_positive {
        let prev = regimes.last().map(|r| r.0);
        let concept = if pos {
            let avoid = match prev {
                Some(ConceptRef::Positive(i)) => Some(i),
                _ => None,
            };
            ConceptRef::Positive(pick_distinct(rng, cfg.positive_concepts.len(), avoid))
        } else {
            let avoid = match prev {
                Some(ConceptRef::Distractor(i)) => Some(i),
                _ => None,
            };
            ConceptRef::Distractor(pick_distinct(rng, cfg.distractor_concepts.len(), avoid))
        };
        let duration = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let n = seconds_to_samples(duration, cfg.sample_rate).max(1);
        match regimes.last_mut() {
            Some(last) if last.0 == concept => last.1 += n,
            _ => regimes.push((concept, n)),
        }
    }

    let mut samples = vec![Vec::new(); cfg.channels];
    let mut cut_times = Vec::with_capacity(regimes.len().saturating_sub(1));
    let mut instance_labels = Vec::with_capacity(regimes.len());
    let mut elapsed = 0usize;
    for (k, (concept, n)) in regimes.iter().enumerate() {
        let (cov, tag) = match *concept {
            ConceptRef::Positive(i) => (&cfg.positive_concepts[i], Concept::Positive),
            ConceptRef::Distractor(i) => (&cfg.distractor_concepts[i], Concept::Negative),
        };
        if k > 0 {
            cut_times.push(elapsed as f64 / cfg.sample_rate);
        }
        let block = sample_gaussian(cov, *n, rng)?;
        for (ch, b) in samples.iter_mut().zip(block) {
            ch.extend(b);
        }
        instance_labels.push(tag);
        elapsed += n;
    }
    let subject_id = subject_id.into();
    let names = (0..cfg.channels).map(|i| format!("ch{i}")).collect();
    let recording = Recording::new(subject_id.clone(), label, cfg.sample_rate, names, samples)?;
    Ok(SyntheticSubject {
        recording,
        truth: SubjectTruth {
            subject_id,
            label,
            cut_times,
            instance_labels,
        },
    })
}

/// Add white Gaussian noise so that each channel reaches `snr_db` relative to
/// its own mean power. `snr_db = +∞` returns the recording unchanged.
pub fn add_white_noise<R: Rng + ?Sized>(rec: &Recording, snr_db: f64, rng: &mut R) -> Result<Recording> {
    if snr_db == f64::INFINITY {
        return Ok(rec.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument(format!("SNR must be finite or +inf, got {snr_db}")));
    }
    let factor = 10f64.powf(-snr_db / 10.0);
    let samples = rec
        .samples
        .iter()
        .map(|ch| {
            let power = ch.iter().map(|v| v * v).sum::<f64>() / ch.len() as f64;
            let sd = (power * factor).sqrt();
            ch.iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(rng);
                    v + sd * z
                })
                .collect()
        })
        .collect();
    Ok(rec.with_samples(samples))
}

/// `n_pos` positive then `n_neg` negative subjects, subject `k` on stream `k`.
pub fn make_dataset(n_pos: usize, n_neg: usize, cfg: &SynthConfig) -> Result<Vec<SyntheticSubject>> {
    if n_pos < 2 || n_neg < 2 {
        return Err(Error::Config(format!(
            "need at least 2 subjects per class, got {n_pos} positive and {n_neg} negative"
        )));
    }
    cfg.validate()?;
    (0..n_pos + n_neg)
        .map(|k| {
            let label = if k < n_pos { Label::Positive } else { Label::Negative };
            let mut rng = stream_rng(cfg.seed, k as u64);
            make_synthetic_subject(format!("s{k:03}"), label, cfg, &mut rng)
        })
        .collect()
}

/// A whole synthetic cohort: class sizes plus the generator settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub n_positive: usize,
    pub n_negative: usize,
    pub channels: usize,
    pub sample_rate: f64,
    pub geometry: ConceptGeometry,
    pub regimes_per_subject: Span,
    pub positive_regimes: Span,
    pub duration_range: (f64, f64),
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_positive: 20,
            n_negative: 20,
            channels: 6,
            sample_rate: 128.0,
            geometry: ConceptGeometry::default(),
            regimes_per_subject: Span::new(4, 6),
            positive_regimes: Span::new(1, 1),
            duration_range: (3.0, 6.0),
            seed: 1,
        }
    }
}

impl CohortConfig {
    pub fn synth_config(&self) -> Result<SynthConfig> {
        let mut cfg = SynthConfig::with_geometry(self.channels, &self.geometry, self.seed)?;
        cfg.sample_rate = self.sample_rate;
        cfg.regimes_per_subject = self.regimes_per_subject;
        cfg.positive_regimes = self.positive_regimes;
        cfg.duration_range = self.duration_range;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn generate(&self) -> Result<Vec<SyntheticSubject>> {
        make_dataset(self.n_positive, self.n_negative, &self.synth_config()?)
    }
}
