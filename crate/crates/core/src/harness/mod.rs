//! Study runner: configuration, convergence studies against a
//! higher-cutoff reference, order fits and output files.

pub mod config;
pub mod emit;
pub mod study;

pub use config::{log_spaced_eps, DtPolicy, StudyConfig};
pub use emit::{emit, study_csv, study_report, Format};
pub use study::{fit_order, run_study, OrderFit, RowStatus, StudyResult, StudyRow};
