#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use spdmil::spd::Mat;
use spdmil::SpdMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut impl Rng, r: usize, c: usize) -> Mat {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Q·diag(λ)·Qᵀ with Q from a QR factorization and log-uniform λ in [1, cond].
pub fn spd_with_condition(rng: &mut impl Rng, d: usize, cond: f64) -> SpdMatrix {
    let q = gaussian_matrix(rng, d, d).qr().q();
    let lambdas: Vec<f64> = (0..d).map(|_| cond.ln() * rng.random::<f64>()).map(f64::exp).collect();
    let m = &q * DMatrix::from_diagonal(&DVector::from_vec(lambdas)) * q.transpose();
    SpdMatrix::new((&m + m.transpose()) * 0.5).unwrap()
}

/// Symmetric function of an SPD matrix through nalgebra directly.
pub fn spectral_map(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let e = m.clone().symmetric_eigen();
    let v = &e.eigenvectors;
    let r = v * DMatrix::from_diagonal(&e.eigenvalues.map(f)) * v.transpose();
    (&r + r.transpose()) * 0.5
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    (a - b).amax()
}

/// Gaussian RBF Gram over random points in the plane; positive definite for distinct points.
pub fn rbf_problem(rng: &mut impl Rng, n: usize) -> (Mat, Vec<spdmil::Label>) {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
    let gram = DMatrix::from_fn(n, n, |i, j| {
        let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
        (-(dx * dx + dy * dy) / 2.0).exp()
    });
    let mut labels: Vec<spdmil::Label> = (0..n)
        .map(|_| if rng.random::<bool>() { spdmil::Label::Positive } else { spdmil::Label::Negative })
        .collect();
    labels[0] = spdmil::Label::Positive;
    labels[1] = spdmil::Label::Negative;
    (gram, labels)
}

pub fn dual(gram: &Mat, y: &[f64], a: &[f64]) -> f64 {
    let n = a.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += a[i] * a[j] * y[i] * y[j] * gram[(i, j)];
        }
    }
    a.iter().sum::<f64>() - 0.5 * quad
}

/// Exact C-SVC dual optimum by enumerating which multipliers sit at 0, at C or
/// strictly inside, and solving the equality-constrained stationarity system on
/// the free set.
pub fn active_set_optimum(gram: &Mat, y: &[f64], c: f64) -> f64 {
    let n = y.len();
    let mut best = 0.0_f64; // α = 0 is always feasible
    let mut state = vec![0u8; n];
    loop {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let fixed: Vec<f64> = (0..n).map(|i| if state[i] == 1 { c } else { 0.0 }).collect();
        let mut alpha = fixed.clone();
        let mut ok = true;
        if !free.is_empty() {
            let k = free.len();
            let mut a = DMatrix::zeros(k + 1, k + 1);
            let mut b = DVector::zeros(k + 1);
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    a[(r, s)] = y[i] * y[j] * gram[(i, j)];
                }
                a[(r, k)] = y[i];
                a[(k, r)] = y[i];
                let bound: f64 = (0..n).map(|j| y[i] * y[j] * gram[(i, j)] * fixed[j]).sum();
                b[r] = 1.0 - bound;
            }
            b[k] = -(0..n).map(|j| y[j] * fixed[j]).sum::<f64>();
            match a.lu().solve(&b) {
                Some(sol) => {
                    for (r, &i) in free.iter().enumerate() {
                        if sol[r] < -1e-12 || sol[r] > c + 1e-12 {
                            ok = false;
                        }
                        alpha[i] = sol[r].clamp(0.0, c);
                    }
                }
                None => ok = false,
            }
        } else if (0..n).map(|j| y[j] * fixed[j]).sum::<f64>().abs() > 1e-12 {
            ok = false;
        }
        if ok {
            best = best.max(dual(gram, y, &alpha));
        }
        // next state in base 3
        let mut i = 0;
        while i < n {
            state[i] += 1;
            if state[i] < 3 {
                break;
            }
            state[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

/// `max_{I_up} −y∇ − min_{I_low} −y∇` recomputed from the multipliers alone.
pub fn kkt_gap(gram: &Mat, y: &[f64], a: &[f64], c: f64) -> f64 {
    let n = a.len();
    let grad: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * gram[(i, j)] * a[j]).sum::<f64>() - 1.0)
        .collect();
    let eps = 1e-12 * c.max(1.0);
    let (mut up, mut low) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let v = -y[i] * grad[i];
        let in_up = (y[i] > 0.0 && a[i] < c - eps) || (y[i] < 0.0 && a[i] > eps);
        let in_low = (y[i] > 0.0 && a[i] > eps) || (y[i] < 0.0 && a[i] < c - eps);
        if in_up {
            up = up.max(v);
        }
        if in_low {
            low = low.min(v);
        }
    }
    (up - low).max(0.0)
}
