//! Kernel SVM on precomputed Gram matrices, leave-one-out evaluation and the
//! paired t-test used to compare methods across bands.

pub mod cv;
pub mod methods;
pub mod smo;
pub mod ttest;

pub use cv::{loocv, loocv_dataset, CvGrid, Dataset, FoldRecord, LoocvResult, TuningProtocol};
pub use methods::{classify, classify_batch_cov, classify_mean_cov, Method, RepresentationConfig};
pub use smo::{predict, train_svm, SvmModel};
pub use ttest::{paired_t_test, TTestResult};
