//! Geometry of the cone of symmetric positive definite matrices.
//!
//! Every matrix function here (log, exp, square root, inverse square root) is
//! evaluated through one symmetric eigendecomposition, so accuracy and failure
//! modes are governed by a single routine, [`sym_eig`].
//!
//! Two Riemannian distances are provided:
//!
//! ```text
//! d_LE(A, B) = ‖log A − log B‖_F
//! d_AI(A, B) = ‖log(A^{-1/2} B A^{-1/2})‖_F
//! ```
//!
//! Both agree on commuting pairs. `d_AI` is invariant under congruence
//! `C ↦ M C Mᵀ` for any invertible `M`, which makes it insensitive to the
//! units and mixing of the recorded channels.

use std::fmt;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

const EIG_MAX_ITER: usize = 10_000;
const SYMMETRY_TOL: f64 = 1e-12;
/// Smallest admissible `λ_min / λ_max` for a validated SPD matrix.
pub const SPD_RATIO_TOL: f64 = 1e-12;
/// Karcher iteration stops once the Riemannian gradient norm drops below this.
pub const KARCHER_TOL: f64 = 1e-9;
/// Gradient norm accepted when rounding prevents reaching `KARCHER_TOL`.
pub const KARCHER_FLOOR_TOL: f64 = 1e-6;
pub const KARCHER_MAX_ITER: usize = 200;

/// Riemannian metric used for distances, means and segmentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    LogEuclidean,
    AffineInvariant,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::LogEuclidean => "log-euclidean",
            Metric::AffineInvariant => "affine-invariant",
        })
    }
}

fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn check_square(m: &Mat) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    Ok(())
}

fn check_symmetric(m: &Mat) -> Result<()> {
    check_square(m)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let tol = SYMMETRY_TOL * max_abs(m);
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let gap = (m[(i, j)] - m[(j, i)]).abs();
            if gap > tol {
                return Err(Error::Domain(format!(
                    "matrix is not symmetric: |m[{i},{j}] - m[{j},{i}]| = {gap:e}"
                )));
            }
        }
    }
    Ok(())
}

fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

/// Symmetric (not necessarily definite) matrix; the tangent-space side of `log`/`exp`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(Mat);

impl SymMatrix {
    /// Validates symmetry to `1e-12·max|m|` and stores the exactly symmetrized matrix.
    pub fn new(m: Mat) -> Result<Self> {
        check_symmetric(&m)?;
        Ok(SymMatrix(symmetrize(&m)))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(Mat::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(Mat::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(mat_from_rows(rows)?)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_matrix(self) -> Mat {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

/// Build a dense matrix from row vectors, rejecting ragged input.
pub fn mat_from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let m = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: bad.len(),
        });
    }
    Ok(Mat::from_fn(n, m, |i, j| rows[i][j]))
}

fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors stored as columns, aligned with `values`.
    pub vectors: Mat,
}

impl Eigen {
    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        let scaled = DVector::from_iterator(self.values.len(), self.values.iter().map(|&l| f(l)));
        let mut vs = self.vectors.clone();
        for (j, s) in scaled.iter().enumerate() {
            vs.column_mut(j).scale_mut(*s);
        }
        symmetrize(&(vs * self.vectors.transpose()))
    }

    pub fn min(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }
}

fn eig_raw(m: &Mat) -> Result<Eigen> {
    let d = m.nrows();
    let se = SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIG_MAX_ITER).ok_or_else(|| {
        let diag: Vec<f64> = m.diagonal().iter().copied().collect();
        let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Error::Numerical(format!(
            "symmetric eigendecomposition did not converge in {EIG_MAX_ITER} sweeps \
             (d={d}, ‖M‖_F={:e}, diagonal range [{lo:e}, {hi:e}])",
            m.norm()
        ))
    })?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| se.eigenvalues[b].total_cmp(&se.eigenvalues[a]).then(a.cmp(&b)));
    let values = DVector::from_iterator(d, order.iter().map(|&k| se.eigenvalues[k]));
    let mut vectors = Mat::zeros(d, d);
    for (j, &k) in order.iter().enumerate() {
        vectors.set_column(j, &se.eigenvectors.column(k));
    }
    Ok(Eigen { values, vectors })
}

/// Eigendecomposition `M = V·diag(λ)·Vᵀ` with λ sorted descending.
pub fn sym_eig(m: &SymMatrix) -> Result<Eigen> {
    eig_raw(m.as_matrix())
}

/// Eigenvalues only, descending.
pub(crate) fn sym_eigenvalues(m: &Mat) -> Result<DVector<f64>> {
    Ok(eig_raw(m)?.values)
}

/// A validated symmetric positive definite matrix.
///
/// The eigendecomposition computed during validation is retained, and the
/// matrix log and inverse square root are memoized on first use, so repeated
/// distance evaluations against the same matrix stay cheap.
#[derive(Clone)]
pub struct SpdMatrix {
    mat: Mat,
    eig: Eigen,
    log: OnceLock<SymMatrix>,
    inv_sqrt: OnceLock<Mat>,
}

impl fmt::Debug for SpdMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpdMatrix")
            .field("mat", &self.mat)
            .field("eigenvalues", &self.eig.values.as_slice())
            .finish()
    }
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.mat == other.mat
    }
}

impl SpdMatrix {
    /// Validates symmetry and `λ_min > 1e-12·λ_max`.
    pub fn new(m: Mat) -> Result<Self> {
        check_symmetric(&m)?;
        let mat = symmetrize(&m);
        let eig = eig_raw(&mat)?;
        if !(eig.min() > 0.0 && eig.min() > SPD_RATIO_TOL * eig.max()) {
            return Err(Error::Domain(format!(
                "matrix is not positive definite: λ_min = {:e}, λ_max = {:e}",
                eig.min(),
                eig.max()
            )));
        }
        Ok(SpdMatrix {
            mat,
            eig,
            log: OnceLock::new(),
            inv_sqrt: OnceLock::new(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(mat_from_rows(rows)?)
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(Mat::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(Mat::identity(dim, dim)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_matrix(&self) -> &Mat {
        &self.mat
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        mat_to_rows(&self.mat)
    }

    pub fn eigen(&self) -> &Eigen {
        &self.eig
    }

    pub fn condition_number(&self) -> f64 {
        self.eig.max() / self.eig.min()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    pub fn log(&self) -> &SymMatrix {
        self.log.get_or_init(|| SymMatrix(self.eig.map(f64::ln)))
    }

    pub fn sqrt(&self) -> Mat {
        self.eig.map(f64::sqrt)
    }

    pub fn inv_sqrt(&self) -> &Mat {
        self.inv_sqrt.get_or_init(|| self.eig.map(|l| 1.0 / l.sqrt()))
    }

    pub fn inverse(&self) -> Result<SpdMatrix> {
        SpdMatrix::new(self.eig.map(|l| 1.0 / l))
    }

    pub fn scaled(&self, s: f64) -> Result<SpdMatrix> {
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {s}")));
        }
        SpdMatrix::new(&self.mat * s)
    }

    /// `A · C · Aᵀ`.
    pub fn congruence(&self, a: &Mat) -> Result<SpdMatrix> {
        check_dims(self.dim(), a.ncols())?;
        SpdMatrix::new(a * &self.mat * a.transpose())
    }
}

impl Serialize for SpdMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SpdMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        SpdMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Matrix logarithm `V·diag(ln λ)·Vᵀ`.
pub fn spd_log(c: &SpdMatrix) -> SymMatrix {
    c.log().clone()
}

/// Matrix exponential of a symmetric matrix; always SPD unless the spectrum over/underflows.
pub fn spd_exp(s: &SymMatrix) -> Result<SpdMatrix> {
    let eig = sym_eig(s)?;
    if eig.max() > 700.0 || eig.min() < -700.0 {
        return Err(Error::Numerical(format!(
            "matrix exponential out of range: eigenvalues span [{:e}, {:e}]",
            eig.min(),
            eig.max()
        )));
    }
    SpdMatrix::new(eig.map(f64::exp)).map_err(|e| Error::Numerical(format!("exp produced a non-SPD matrix: {e}")))
}

pub fn dist_log_euclidean(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok((a.log().as_matrix() - b.log().as_matrix()).norm())
}

/// Generalized eigenvalues of the pencil (b, a) via `a^{-1/2} b a^{-1/2}`.
fn whitened_eigenvalues(a: &SpdMatrix, b: &SpdMatrix) -> Result<DVector<f64>> {
    let w = a.inv_sqrt();
    let m = symmetrize(&(w * b.as_matrix() * w));
    sym_eigenvalues(&m)
}

pub fn dist_affine_invariant(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let lambdas = whitened_eigenvalues(a, b)?;
    let mut acc = 0.0;
    for &l in lambdas.iter() {
        if !(l > 0.0) {
            return Err(Error::Domain(format!(
                "whitened matrix has non-positive eigenvalue {l:e}"
            )));
        }
        acc += l.ln().powi(2);
    }
    Ok(acc.sqrt())
}

pub fn distance(metric: Metric, a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    match metric {
        Metric::LogEuclidean => dist_log_euclidean(a, b),
        Metric::AffineInvariant => dist_affine_invariant(a, b),
    }
}

/// Point at parameter `t` on the log-Euclidean geodesic from `a` (t=0) to `b` (t=1).
pub fn geodesic_log_euclidean(a: &SpdMatrix, b: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    check_dims(a.dim(), b.dim())?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("geodesic parameter t={t} outside [0, 1]")));
    }
    if t == 0.0 {
        return Ok(a.clone());
    }
    if t == 1.0 {
        return Ok(b.clone());
    }
    let s = a.log().as_matrix() * (1.0 - t) + b.log().as_matrix() * t;
    spd_exp(&SymMatrix(symmetrize(&s)))
}

/// Log-Euclidean mean `exp(mean log C_i)`.
fn log_euclidean_mean(cs: &[SpdMatrix]) -> Result<SpdMatrix> {
    let d = cs[0].dim();
    let mut acc = Mat::zeros(d, d);
    for c in cs {
        acc += c.log().as_matrix();
    }
    acc /= cs.len() as f64;
    spd_exp(&SymMatrix(symmetrize(&acc)))
}

/// Mean of `log(M^{-1/2} C_i M^{-1/2})`: the negative Riemannian gradient of the
/// affine-invariant Fréchet objective, expressed in whitened coordinates at `m`.
pub fn karcher_gradient(m: &SpdMatrix, cs: &[SpdMatrix]) -> Result<SymMatrix> {
    let d = m.dim();
    let w = m.inv_sqrt();
    let mut acc = Mat::zeros(d, d);
    for c in cs {
        check_dims(d, c.dim())?;
        let whitened = SymMatrix(symmetrize(&(w * c.as_matrix() * w)));
        let eig = sym_eig(&whitened)?;
        if !(eig.min() > 0.0) {
            return Err(Error::Numerical("whitened matrix lost definiteness".into()));
        }
        acc += eig.map(f64::ln);
    }
    acc /= cs.len() as f64;
    Ok(SymMatrix(acc))
}

/// Affine-invariant (Karcher) mean by fixed-point iteration with unit step,
/// started from the log-Euclidean mean. A step that would increase the
/// gradient norm is halved until it does not (the unit step can oscillate when
/// the matrices are far apart); the step grows back towards 1 afterwards.
fn karcher_mean(cs: &[SpdMatrix]) -> Result<SpdMatrix> {
    const MAX_HALVINGS: usize = 40;
    let mut m = log_euclidean_mean(cs)?;
    let mut grad = karcher_gradient(&m, cs)?;
    let mut norm = grad.frobenius_norm();
    let mut t = 1.0_f64;
    for _ in 0..KARCHER_MAX_ITER {
        if norm <= KARCHER_TOL {
            return Ok(m);
        }
        let half = m.sqrt();
        let mut halvings = 0;
        loop {
            let scaled = SymMatrix(grad.as_matrix() * t);
            let candidate = SpdMatrix::new(&half * spd_exp(&scaled)?.as_matrix() * &half)?;
            let g = karcher_gradient(&candidate, cs)?;
            let n = g.frobenius_norm();
            if n < norm {
                m = candidate;
                grad = g;
                norm = n;
                break;
            }
            if halvings == MAX_HALVINGS {
                // No step reduces the gradient: rounding floor of the eigensolver.
                if norm <= KARCHER_FLOOR_TOL {
                    return Ok(m);
                }
                return Err(Error::Numerical(format!(
                    "Karcher mean stalled at gradient norm {norm:e}"
                )));
            }
            t *= 0.5;
            halvings += 1;
        }
        t = (2.0 * t).min(1.0);
    }
    if norm <= KARCHER_TOL {
        return Ok(m);
    }
    Err(Error::Numerical(format!(
        "Karcher mean did not converge in {KARCHER_MAX_ITER} iterations (gradient norm {norm:e})"
    )))
}

/// Geometric mean under the chosen metric.
pub fn geometric_mean(cs: &[SpdMatrix], metric: Metric) -> Result<SpdMatrix> {
    let first = cs
        .first()
        .ok_or_else(|| Error::InvalidArgument("geometric mean of an empty set".into()))?;
    for c in cs {
        check_dims(first.dim(), c.dim())?;
    }
    if cs.len() == 1 || cs.iter().all(|c| c.as_matrix() == first.as_matrix()) {
        return Ok(first.clone());
    }
    match metric {
        Metric::LogEuclidean => log_euclidean_mean(cs),
        Metric::AffineInvariant => karcher_mean(cs),
    }
}

/// Shift `m` by a multiple of the identity so that its smallest eigenvalue is at
/// least `eps·trace(m)/d` (or `eps·max|m|` when the trace is not positive, and
/// `eps` for the zero matrix).
pub fn regularize_spd(m: &SymMatrix, eps: f64) -> Result<SpdMatrix> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let d = m.dim();
    let mean_eig = m.trace() / d as f64;
    let scale = if mean_eig > 0.0 {
        mean_eig
    } else if max_abs(m.as_matrix()) > 0.0 {
        max_abs(m.as_matrix())
    } else {
        1.0
    };
    let lambda_min = sym_eig(m)?.min();
    let delta = (-lambda_min / eps).max(0.0);
    let shift = eps * (scale + delta);
    let shifted = m.as_matrix() + Mat::identity(d, d) * shift;
    SpdMatrix::new(shifted)
}
