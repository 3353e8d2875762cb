//! Multi-instance classification of multichannel biosignals on the manifold of
//! symmetric positive definite matrices.
//!
//! A recording is cut into statistically homogeneous segments by thresholding
//! geodesic distances between successive window covariances; each subject
//! becomes a bag of segment covariances; bags are compared with a set kernel
//! built from Riemannian Gaussian (or isometric) instance kernels; a C-SVC on
//! the resulting Gram matrix is evaluated by leave-one-subject-out.
//!
//! Modules, bottom up: [`spd`] geometry, [`signal`] ingestion and covariance,
//! [`segmentation`], [`kernel`], [`svm`], [`synth`] ground-truth cohorts and
//! [`harness`] experiment orchestration and reports.

pub mod error;
pub mod harness;
pub mod kernel;
pub mod label;
pub mod segmentation;
pub mod signal;
pub mod spd;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
pub use kernel::{Bag, GramMatrix, KernelConfig, KernelKind};
pub use label::{Concept, Label};
pub use signal::{BandSpec, Recording, Segment};
pub use spd::{Metric, SpdMatrix, SymMatrix};
