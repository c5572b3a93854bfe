//! Metrics, cross-validation splits, grid search, auto-annotation and
//! report tables.

mod annotate;
mod boxplot;
mod grid;
mod kfold;
mod metrics;
mod report;

pub use annotate::auto_annotate;
pub use boxplot::{boxplot_stats, quantile_sorted, BoxplotStats};
pub use grid::{
    grid_search, read_runs, run_file_name, FailedRun, GridOutcome, GridSpec, GridTable, DEFAULT_FUTURE,
    DEFAULT_PAST, RUNS_DIR,
};
pub use kfold::{kfold_split, train_indices};
pub use metrics::{mae, mean_std, mse, Context, MetricRecord, RunResult};
pub use report::{mean_pm_std, report, ReportSummary, BOXPLOT_JSON, POSE_TABLE, REFINE_TABLE, SWEEP_CURVE};
