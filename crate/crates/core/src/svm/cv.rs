//! Leave-one-subject-out evaluation with hyperparameter selection.
//!
//! A [`Dataset`] is a list of samples, each owning a contiguous run of pooled
//! SPD instances and belonging to one subject. Multi-instance methods have one
//! sample (a bag) per subject; the batch baseline has one sample per segment,
//! and a subject's prediction is the majority vote of its samples.
//!
//! For every held-out subject, `(σ, C)` is chosen by stratified inner
//! cross-validation over the remaining subjects only, then a model trained on
//! those subjects predicts the held-out one. Isometric kernels are re-centered
//! on the training instances of every fit; held-out instances enter only
//! through their distances to that training pool.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::kernel::{aggregate_blocks, bag_ranges, gaussian_from_sq_dist, pairwise_sq_distances, Bag, KernelConfig, KernelKind};
use crate::label::Label;
use crate::spd::{Mat, SpdMatrix};
use crate::svm::smo::{train_svm, SvmModel};

pub const INNER_FOLDS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvGrid {
    pub c_values: Vec<f64>,
    pub sigma_values: Vec<f64>,
}

impl Default for CvGrid {
    /// C ∈ {0.1, 10, …, 100000}, σ ∈ {0.1, 1, 10, 20, …, 1000}.
    fn default() -> Self {
        let mut sigma_values = vec![0.1, 1.0];
        sigma_values.extend((1..=100).map(|k| 10.0 * k as f64));
        CvGrid {
            c_values: vec![0.1, 10.0, 100.0, 1_000.0, 10_000.0, 100_000.0],
            sigma_values,
        }
    }
}

impl CvGrid {
    pub fn new(c_values: Vec<f64>, sigma_values: Vec<f64>) -> Self {
        CvGrid { c_values, sigma_values }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_values.is_empty() || self.sigma_values.is_empty() {
            return Err(Error::Config("hyperparameter grid must be nonempty".into()));
        }
        if self.c_values.iter().chain(&self.sigma_values).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("grid values must be positive and finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuningProtocol {
    /// Hyperparameters chosen inside every leave-one-out training fold.
    #[default]
    Nested,
    /// One selection over the whole cohort before leave-one-out; optimistically biased.
    Global,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub subject: usize,
    pub instances: Range<usize>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub subjects: Vec<Subject>,
    pub samples: Vec<Sample>,
    pub instances: Vec<SpdMatrix>,
}

impl Dataset {
    /// One sample per bag.
    pub fn from_bags(bags: &[Bag]) -> Dataset {
        let ranges = bag_ranges(bags.iter().map(Bag::len));
        Dataset {
            subjects: bags
                .iter()
                .map(|b| Subject {
                    id: b.subject_id.clone(),
                    label: b.label,
                })
                .collect(),
            samples: ranges
                .into_iter()
                .enumerate()
                .map(|(subject, instances)| Sample { subject, instances })
                .collect(),
            instances: bags.iter().flat_map(|b| b.instances.iter().cloned()).collect(),
        }
    }

    /// One single-instance sample per matrix, grouped by subject.
    pub fn from_instance_groups(subjects: Vec<Subject>, groups: Vec<Vec<SpdMatrix>>) -> Result<Dataset> {
        if subjects.len() != groups.len() {
            return Err(Error::DimensionMismatch {
                expected: subjects.len(),
                found: groups.len(),
            });
        }
        let mut samples = Vec::new();
        let mut instances = Vec::new();
        for (subject, group) in groups.into_iter().enumerate() {
            if group.is_empty() {
                return Err(Error::InvalidArgument(format!("subject {} has no samples", subjects[subject].id)));
            }
            for c in group {
                samples.push(Sample {
                    subject,
                    instances: instances.len()..instances.len() + 1,
                });
                instances.push(c);
            }
        }
        Ok(Dataset {
            subjects,
            samples,
            instances,
        })
    }

    pub fn sample_label(&self, s: usize) -> Label {
        self.subjects[self.samples[s].subject].label
    }

    fn samples_of(&self, subjects: &[usize]) -> Vec<usize> {
        let mut keep = vec![false; self.subjects.len()];
        for &s in subjects {
            keep[s] = true;
        }
        (0..self.samples.len()).filter(|&i| keep[self.samples[i].subject]).collect()
    }

    /// With the same subjects and samples but every label replaced.
    pub fn relabeled(&self, labels: &[Label]) -> Result<Dataset> {
        if labels.len() != self.subjects.len() {
            return Err(Error::DimensionMismatch {
                expected: self.subjects.len(),
                found: labels.len(),
            });
        }
        let mut out = self.clone();
        for (s, l) in out.subjects.iter_mut().zip(labels) {
            s.label = *l;
        }
        Ok(out)
    }
}

/// Outcome for one held-out subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub subject_id: String,
    pub label: Label,
    pub predicted: Label,
    /// Mean decision value over the subject's samples.
    pub decision: f64,
    pub votes_positive: usize,
    pub votes_total: usize,
    /// Selected bandwidth (absent for the isometric kernel).
    pub sigma: Option<f64>,
    pub c: f64,
    pub converged: bool,
}

impl FoldRecord {
    pub fn correct(&self) -> bool {
        self.label == self.predicted
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoocvResult {
    pub correct: usize,
    pub total: usize,
    pub folds: Vec<FoldRecord>,
}

impl LoocvResult {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }

    pub fn accuracy_percent(&self) -> f64 {
        round2(100.0 * self.accuracy())
    }
}

pub(crate) fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Kernel values at one bandwidth, ready to be sliced into train/test blocks.
enum Prepared<'a> {
    /// Sample-level kernel over the whole dataset.
    Full(Mat),
    /// Isometric: centering depends on the training pool of each fit.
    Isometric { d2: &'a Mat },
}

struct Blocks {
    train: Mat,
    /// `test.len() × train.len()`.
    cross: Mat,
}

struct Engine<'a> {
    ds: &'a Dataset,
    d2: &'a Mat,
    cfg: &'a KernelConfig,
}

impl<'a> Engine<'a> {
    fn prepare(&self, sigma: Option<f64>) -> Prepared<'a> {
        match (self.cfg.kind, sigma) {
            (KernelKind::Isometric, _) => Prepared::Isometric { d2: self.d2 },
            (_, Some(sigma)) => {
                let k = self.d2.map(|v| gaussian_from_sq_dist(v, sigma));
                let ranges: Vec<Range<usize>> = self.ds.samples.iter().map(|s| s.instances.clone()).collect();
                Prepared::Full(aggregate_blocks(&k, &ranges, &ranges, self.cfg))
            }
            (_, None) => unreachable!("Gaussian kernels always carry a bandwidth"),
        }
    }

    fn blocks(&self, prepared: &Prepared<'_>, train: &[usize], test: &[usize]) -> Blocks {
        match prepared {
            Prepared::Full(k) => Blocks {
                train: Mat::from_fn(train.len(), train.len(), |a, b| k[(train[a], train[b])]),
                cross: Mat::from_fn(test.len(), train.len(), |a, b| k[(test[a], train[b])]),
            },
            Prepared::Isometric { d2 } => self.isometric_blocks(d2, train, test),
        }
    }

    /// Double centering with row/column means taken over the training instances;
    /// the same formula extends to held-out instances (classical MDS out-of-sample).
    fn isometric_blocks(&self, d2: &Mat, train: &[usize], test: &[usize]) -> Blocks {
        let pool: Vec<usize> = train
            .iter()
            .flat_map(|&s| self.ds.samples[s].instances.clone())
            .collect();
        let np = pool.len() as f64;
        let n_inst = d2.nrows();
        let mut needed = vec![false; n_inst];
        for &s in train.iter().chain(test) {
            for i in self.ds.samples[s].instances.clone() {
                needed[i] = true;
            }
        }
        let mut r = vec![0.0; n_inst];
        for i in (0..n_inst).filter(|&i| needed[i]) {
            r[i] = pool.iter().map(|&c| d2[(i, c)]).sum::<f64>() / np;
        }
        let g = pool.iter().map(|&c| r[c]).sum::<f64>() / np;
        let s = |i: usize, j: usize| -0.5 * (d2[(i, j)] - r[i] - r[j] + g);
        let bag = |a: usize, b: usize| {
            let (ra, rb) = (&self.ds.samples[a].instances, &self.ds.samples[b].instances);
            let values = ra.clone().flat_map(|i| rb.clone().map(move |j| s(i, j)));
            self.cfg.aggregate(values, ra.len(), rb.len())
        };
        let mut train_k = Mat::from_fn(train.len(), train.len(), |a, b| bag(train[a], train[b]));
        train_k = (&train_k + train_k.transpose()) * 0.5;
        Blocks {
            train: train_k,
            cross: Mat::from_fn(test.len(), train.len(), |a, b| bag(test[a], train[b])),
        }
    }

    fn labels(&self, samples: &[usize]) -> Vec<Label> {
        samples.iter().map(|&s| self.ds.sample_label(s)).collect()
    }
}

fn has_both_classes(labels: &[Label]) -> bool {
    labels.contains(&Label::Positive) && labels.contains(&Label::Negative)
}

/// Per-subject votes from sample decision values.
struct Votes {
    positive: usize,
    total: usize,
    decision_sum: f64,
}

impl Votes {
    fn label(&self) -> Label {
        if 2 * self.positive >= self.total {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

fn decisions(model: &SvmModel, cross: &Mat) -> Vec<f64> {
    let coef: Vec<f64> = model
        .alphas
        .iter()
        .zip(&model.training_labels)
        .map(|(a, y)| a * y.sign())
        .collect();
    (0..cross.nrows())
        .map(|r| (0..cross.ncols()).map(|c| coef[c] * cross[(r, c)]).sum::<f64>() + model.bias)
        .collect()
}

fn tally(ds: &Dataset, test: &[usize], decisions: &[f64]) -> Vec<(usize, Votes)> {
    let mut out: Vec<(usize, Votes)> = Vec::new();
    for (&s, &f) in test.iter().zip(decisions) {
        let subj = ds.samples[s].subject;
        let idx = match out.iter().position(|(k, _)| *k == subj) {
            Some(i) => i,
            None => {
                out.push((
                    subj,
                    Votes {
                        positive: 0,
                        total: 0,
                        decision_sum: 0.0,
                    },
                ));
                out.len() - 1
            }
        };
        let v = &mut out[idx].1;
        v.total += 1;
        v.decision_sum += f;
        if Label::from_decision(f) == Label::Positive {
            v.positive += 1;
        }
    }
    out
}

/// Stratified assignment of subjects to `k` folds: within each class, in index order, round-robin.
fn stratified_folds(ds: &Dataset, subjects: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [Label::Positive, Label::Negative] {
        for &s in subjects.iter().filter(|&&s| ds.subjects[s].label == class) {
            folds[next % k].push(s);
            next += 1;
        }
    }
    folds
}

type Candidate = (Option<f64>, f64);

fn candidates(cfg: &KernelConfig, grid: &CvGrid) -> (Vec<Option<f64>>, Vec<f64>) {
    let sigmas = if cfg.kind.uses_bandwidth() {
        grid.sigma_values.iter().map(|&s| Some(s)).collect()
    } else {
        vec![None]
    };
    (sigmas, grid.c_values.clone())
}

/// Inner-CV scores for several training subject sets at once, one σ at a time.
fn inner_scores(engine: &Engine<'_>, grid: &CvGrid, training_sets: &[Vec<usize>]) -> Result<Vec<Candidate>> {
    let (sigmas, cs) = candidates(engine.cfg, grid);
    let mut best: Vec<(usize, Candidate)> = vec![(0, (sigmas[0], cs[0])); training_sets.len()];
    let mut seen = vec![false; training_sets.len()];
    let folds: Vec<Vec<Vec<usize>>> = training_sets
        .iter()
        .map(|t| stratified_folds(engine.ds, t, INNER_FOLDS))
        .collect();
    for &sigma in &sigmas {
        let prepared = engine.prepare(sigma);
        for (set_idx, subjects) in training_sets.iter().enumerate() {
            let mut correct = vec![0usize; cs.len()];
            for fold in &folds[set_idx] {
                if fold.is_empty() {
                    continue;
                }
                let inner_train_subjects: Vec<usize> =
                    subjects.iter().copied().filter(|s| !fold.contains(s)).collect();
                let train = engine.ds.samples_of(&inner_train_subjects);
                let test = engine.ds.samples_of(fold);
                let labels = engine.labels(&train);
                if !has_both_classes(&labels) {
                    continue;
                }
                let blocks = engine.blocks(&prepared, &train, &test);
                for (ci, &c) in cs.iter().enumerate() {
                    let model = train_svm(&blocks.train, &labels, c)
                        .context_with(|| format!("inner cross-validation of fold {set_idx}"))?;
                    let f = decisions(&model, &blocks.cross);
                    correct[ci] += tally(engine.ds, &test, &f)
                        .iter()
                        .filter(|(s, v)| v.label() == engine.ds.subjects[*s].label)
                        .count();
                }
            }
            for (ci, &score) in correct.iter().enumerate() {
                if !seen[set_idx] || score > best[set_idx].0 {
                    best[set_idx] = (score, (sigma, cs[ci]));
                    seen[set_idx] = true;
                }
            }
        }
    }
    Ok(best.into_iter().map(|(_, cand)| cand).collect())
}

/// Leave-one-subject-out evaluation over a dataset with precomputed squared
/// instance distances (`d2` must match `cfg.metric()`).
pub fn loocv_dataset(
    ds: &Dataset,
    d2: &Mat,
    cfg: &KernelConfig,
    grid: &CvGrid,
    protocol: TuningProtocol,
) -> Result<LoocvResult> {
    grid.validate()?;
    if cfg.kind.uses_bandwidth() {
        cfg.validate()?;
    }
    let n_subj = ds.subjects.len();
    if n_subj < 4 {
        return Err(Error::InvalidArgument(format!("leave-one-out needs at least 4 subjects, got {n_subj}")));
    }
    if d2.nrows() != ds.instances.len() {
        return Err(Error::DimensionMismatch {
            expected: ds.instances.len(),
            found: d2.nrows(),
        });
    }
    let engine = Engine { ds, d2, cfg };
    let outer_train: Vec<Vec<usize>> = (0..n_subj)
        .map(|held| (0..n_subj).filter(|&s| s != held).collect())
        .collect();
    for (held, train) in outer_train.iter().enumerate() {
        let labels: Vec<Label> = train.iter().map(|&s| ds.subjects[s].label).collect();
        if !has_both_classes(&labels) {
            return Err(Error::InvalidArgument(format!(
                "a class is absent from the training fold of subject {}",
                ds.subjects[held].id
            )));
        }
    }

    let chosen: Vec<Candidate> = match protocol {
        TuningProtocol::Nested => inner_scores(&engine, grid, &outer_train)?,
        TuningProtocol::Global => {
            let all: Vec<usize> = (0..n_subj).collect();
            vec![inner_scores(&engine, grid, &[all])?[0]; n_subj]
        }
    };

    let mut folds: Vec<Option<FoldRecord>> = vec![None; n_subj];
    let mut sigma_order: Vec<Option<f64>> = Vec::new();
    for cand in &chosen {
        if !sigma_order.iter().any(|s| s.map(f64::to_bits) == cand.0.map(f64::to_bits)) {
            sigma_order.push(cand.0);
        }
    }
    for sigma in sigma_order {
        let prepared = engine.prepare(sigma);
        for held in 0..n_subj {
            let (s_sel, c) = chosen[held];
            if s_sel.map(f64::to_bits) != sigma.map(f64::to_bits) {
                continue;
            }
            let train = ds.samples_of(&outer_train[held]);
            let test = ds.samples_of(&[held]);
            let labels = engine.labels(&train);
            let blocks = engine.blocks(&prepared, &train, &test);
            let model = train_svm(&blocks.train, &labels, c).context_with(|| format!("fold {held}"))?;
            let f = decisions(&model, &blocks.cross);
            let (_, votes) = tally(ds, &test, &f).pop().expect("held-out subject has samples");
            folds[held] = Some(FoldRecord {
                fold: held,
                subject_id: ds.subjects[held].id.clone(),
                label: ds.subjects[held].label,
                predicted: votes.label(),
                decision: votes.decision_sum / votes.total as f64,
                votes_positive: votes.positive,
                votes_total: votes.total,
                sigma,
                c,
                converged: model.converged,
            });
        }
    }
    let folds: Vec<FoldRecord> = folds.into_iter().map(|f| f.expect("every fold evaluated")).collect();
    Ok(LoocvResult {
        correct: folds.iter().filter(|f| f.correct()).count(),
        total: folds.len(),
        folds,
    })
}

/// Sample-level Gram matrix of the whole dataset at one bandwidth. For the
/// isometric kernel the centering pool is every instance (transductive).
pub fn dataset_gram(ds: &Dataset, d2: &Mat, cfg: &KernelConfig, sigma: Option<f64>) -> Result<Mat> {
    if d2.nrows() != ds.instances.len() {
        return Err(Error::DimensionMismatch {
            expected: ds.instances.len(),
            found: d2.nrows(),
        });
    }
    if cfg.kind.uses_bandwidth() && !sigma.is_some_and(|s| s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!("{:?} kernel needs a positive bandwidth", cfg.kind)));
    }
    let engine = Engine { ds, d2, cfg };
    let all: Vec<usize> = (0..ds.samples.len()).collect();
    Ok(engine.blocks(&engine.prepare(sigma), &all, &[]).train)
}

/// Leave-one-out over bags (one bag per subject).
pub fn loocv(bags: &[Bag], cfg: &KernelConfig, grid: &CvGrid, protocol: TuningProtocol) -> Result<LoocvResult> {
    let ds = Dataset::from_bags(bags);
    let d2 = pairwise_sq_distances(&ds.instances, cfg.metric())?;
    loocv_dataset(&ds, &d2, cfg, grid, protocol)
}
