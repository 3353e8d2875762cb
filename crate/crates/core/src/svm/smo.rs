//! C-SVC dual solver on a precomputed kernel matrix.
//!
//! Minimizes `½ αᵀQα − Σα` with `Q_ij = y_i y_j K_ij`, subject to `0 ≤ α ≤ C`
//! and `yᵀα = 0`, by sequential minimal optimization over the maximal
//! KKT-violating pair. Ties in the working-set search go to the lowest index,
//! so a run is a deterministic function of its inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::spd::Mat;

/// Stopping tolerance on the maximal KKT violation `m(α) − M(α)`.
pub const KKT_TOL: f64 = 1e-3;
const TAU: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub support_indices: Vec<usize>,
    pub training_labels: Vec<Label>,
    pub c: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Maximal KKT violation at termination.
    pub kkt_violation: f64,
}

impl SvmModel {
    /// Dual objective `Σα − ½ Σ α_i α_j y_i y_j K_ij` (the quantity being maximized).
    pub fn dual_objective(&self, gram: &Mat) -> f64 {
        dual_objective(gram, &self.training_labels, &self.alphas)
    }

    /// Decision values on the training set.
    pub fn training_decisions(&self, gram: &Mat) -> Vec<f64> {
        (0..self.alphas.len())
            .map(|i| {
                let row: Vec<f64> = (0..self.alphas.len()).map(|j| gram[(i, j)]).collect();
                self.decision(&row)
            })
            .collect()
    }

    fn decision(&self, kernel_row: &[f64]) -> f64 {
        self.alphas
            .iter()
            .zip(&self.training_labels)
            .zip(kernel_row)
            .map(|((a, y), k)| a * y.sign() * k)
            .sum::<f64>()
            + self.bias
    }
}

pub fn dual_objective(gram: &Mat, labels: &[Label], alphas: &[f64]) -> f64 {
    let n = alphas.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alphas[i] * alphas[j] * labels[i].sign() * labels[j].sign() * gram[(i, j)];
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

/// Decision value `f = Σ α_i y_i k_i + b` and label `sign(f)` (ties positive).
pub fn predict(model: &SvmModel, kernel_row: &[f64]) -> Result<(Label, f64)> {
    if kernel_row.len() != model.alphas.len() {
        return Err(Error::DimensionMismatch {
            expected: model.alphas.len(),
            found: kernel_row.len(),
        });
    }
    let f = model.decision(kernel_row);
    Ok((Label::from_decision(f), f))
}

fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

pub fn default_max_iter(n: usize) -> usize {
    (10 * n).max(10_000)
}

/// Train on a precomputed Gram matrix. Hitting the iteration cap is not an
/// error: the model is returned with `converged = false`.
pub fn train_svm(gram: &Mat, labels: &[Label], c: f64) -> Result<SvmModel> {
    train_svm_with(gram, labels, c, default_max_iter(labels.len()))
}

pub fn train_svm_with(gram: &Mat, labels: &[Label], c: f64, max_iter: usize) -> Result<SvmModel> {
    let n = labels.len();
    if gram.nrows() != n || gram.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: gram.nrows(),
        });
    }
    if n < 2 {
        return Err(Error::InvalidArgument("SVM training needs at least 2 samples".into()));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("C must be positive, got {c}")));
    }
    if !labels.contains(&Label::Positive) || !labels.contains(&Label::Negative) {
        return Err(Error::InvalidArgument("SVM training set lacks one of the classes".into()));
    }
    let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
    // Signed kernel, column-major so that column updates stream contiguously.
    let mut qbuf = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            qbuf[j * n + i] = y[i] * y[j] * gram[(i, j)];
        }
    }
    let col = |j: usize| &qbuf[j * n..(j + 1) * n];
    let q = |i: usize, j: usize| qbuf[j * n + i];
    let mut alpha = vec![0.0; n];
    // Gradient of the dual, and the part of it contributed by α at the upper bound
    // (needed to rebuild the gradient of shrunk variables).
    let mut grad = vec![-1.0; n];
    let mut g_bar = vec![0.0; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut unshrunk = false;
    let shrink_every = n.min(1000);
    let mut countdown = shrink_every;
    let mut iterations = 0;
    let mut violation;

    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for &t in &active {
            let (yt, at) = (y[t], alpha[t]);
            let v = -yt * grad[t];
            if v > gmax && in_up(yt, at, c) {
                gmax = v;
                i = t;
            }
            if v < gmin && in_low(yt, at, c) {
                gmin = v;
                j = t;
            }
        }
        violation = gmax - gmin;
        let optimal = i == usize::MAX || j == usize::MAX || violation <= KKT_TOL;
        if optimal && active.len() < n {
            // Converged on the active set only: restore everything and look again.
            reconstruct_gradient(&mut grad, &g_bar, &alpha, &active, c, &qbuf, n);
            active = (0..n).collect();
            countdown = 1;
            continue;
        }
        if optimal || iterations >= max_iter {
            break;
        }
        iterations += 1;

        countdown -= 1;
        if countdown == 0 {
            countdown = shrink_every;
            if !unshrunk && violation <= 10.0 * KKT_TOL {
                unshrunk = true;
                reconstruct_gradient(&mut grad, &g_bar, &alpha, &active, c, &qbuf, n);
                active = (0..n).collect();
            }
            active.retain(|&t| !shrinkable(y[t], alpha[t], -y[t] * grad[t], c, gmax, gmin));
            if active.len() < 2 || !active.contains(&i) || !active.contains(&j) {
                // i and j violate by construction and are never shrunk; guard anyway.
                active = (0..n).collect();
            }
        }

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (qii, qjj, qij) = (q(i, i), q(j, j), q(i, j));
        if y[i] != y[j] {
            let quad = (qii + qjj + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qii + qjj - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let (qi, qj) = (col(i), col(j));
        if active.len() == n {
            for ((g, &a), &b) in grad.iter_mut().zip(qi).zip(qj) {
                *g += a * di + b * dj;
            }
        } else {
            for &t in &active {
                grad[t] += qi[t] * di + qj[t] * dj;
            }
        }
        for (k, old, new) in [(i, old_i, alpha[i]), (j, old_j, alpha[j])] {
            let (was, is) = (old >= c, new >= c);
            if was != is {
                let sign = if is { c } else { -c };
                for (gb, &qk) in g_bar.iter_mut().zip(col(k)) {
                    *gb += sign * qk;
                }
            }
        }
    }

    let bias = -rho(&y, &alpha, &grad, c);
    let support_indices = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    Ok(SvmModel {
        alphas: alpha,
        bias,
        support_indices,
        training_labels: labels.to_vec(),
        c,
        converged: violation <= KKT_TOL,
        iterations,
        kkt_violation: violation.max(0.0),
    })
}

/// A bounded variable that cannot join a violating pair under the current extremes.
fn shrinkable(y: f64, a: f64, v: f64, c: f64, gmax: f64, gmin: f64) -> bool {
    let (up, low) = (in_up(y, a, c), in_low(y, a, c));
    match (up, low) {
        (true, false) => v < gmin,
        (false, true) => v > gmax,
        _ => false,
    }
}

/// Recompute the gradient of variables outside the active set from `g_bar` and
/// the free variables.
fn reconstruct_gradient(grad: &mut [f64], g_bar: &[f64], alpha: &[f64], active: &[usize], c: f64, qbuf: &[f64], n: usize) {
    if active.len() == n {
        return;
    }
    let mut inactive = vec![true; n];
    for &t in active {
        inactive[t] = false;
    }
    for t in (0..n).filter(|&t| inactive[t]) {
        grad[t] = g_bar[t] - 1.0;
    }
    for (j, &aj) in alpha.iter().enumerate() {
        if aj > 0.0 && aj < c {
            let qj = &qbuf[j * n..(j + 1) * n];
            for t in (0..n).filter(|&t| inactive[t]) {
                grad[t] += aj * qj[t];
            }
        }
    }
}

/// Offset from free support vectors, or the midpoint of the feasible interval
/// when every α sits at a bound.
fn rho(y: &[f64], alpha: &[f64], grad: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    }
}
