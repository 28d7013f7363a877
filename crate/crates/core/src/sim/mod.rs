//! Seeded Monte-Carlo studies of the estimators on synthetic rings.
//!
//! Three studies are available: coverage and area of the confidence
//! regions across noise levels, bias of the point estimates across ring
//! thickness and image size, and the effect of misclassified boundary
//! pixels with and without correction. Replicate `r` of cell `c` draws all
//! of its randomness from `split_seed(master_seed, [c, r, ..])`, so results
//! do not depend on thread count and adding replicates leaves earlier ones
//! unchanged.

mod config;
mod record;
mod run;

pub use config::{
    Factor, FactorLevels, Geometry, Method, Segmentation, StdaSettings, StudyConfig, StudyKind,
};
pub use record::{
    summarize, write_records_csv, write_summary_csv, CellSummary, Manifest, ReplicateRecord,
    StudyResult, RECORDS_CSV_HEADER, SUMMARY_CSV_HEADER,
};
pub use run::{
    misclassify_interior, run_bias_study, run_coverage_study, run_misclassification_study,
    run_study, Cell,
};
