//! Simulation studies of relative efficiency, cross-validation, a kernel
//! diagnostic for the missing-label probability, and PCA preprocessing.

mod cv;
mod nw;
mod pca;
mod study;

pub use cv::kfold_cv;
pub use nw::{nadaraya_watson_missing, NwCurve};
pub use pca::{pca_project, Pca};
pub use study::{
    bootstrap_se, estimate_re, fit_estimator, mean_missing_proportion, relative_efficiency, run_replication, run_study,
    separation_degree, write_report_csv, Baseline, CellOutcome, FitSettings, ModelSpec, ReCell, ReferenceError,
    ReplicationRecord, StudyConfig, StudyFile,
};
