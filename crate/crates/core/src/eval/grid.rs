//! Past/future window grid search over the forecasting models.

use super::metrics::{Context, RunResult};
use crate::error::{ensure, Error, Result};
use crate::forecast::{train_forecast, CellKind, ForecastHyper};
use crate::numeric::{sub_seed, Matrix};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const DEFAULT_PAST: [usize; 5] = [10, 20, 30, 45, 60];
pub const DEFAULT_FUTURE: [usize; 7] = [1, 5, 15, 30, 60, 90, 120];

/// Subdirectory of a results directory holding one JSON per grid run.
pub const RUNS_DIR: &str = "runs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub cells: Vec<CellKind>,
    pub past: Vec<usize>,
    pub future: Vec<usize>,
    /// Stores `wall_time_s` in the result files (breaks byte-identical reruns).
    pub record_wall_time: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            cells: CellKind::ALL.to_vec(),
            past: DEFAULT_PAST.to_vec(),
            future: DEFAULT_FUTURE.to_vec(),
            record_wall_time: false,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.cells.is_empty(), InvalidArgument, "no cell kinds to search");
        ensure!(!self.past.is_empty() && !self.future.is_empty(), InvalidArgument, "empty window lists");
        ensure!(
            self.past.iter().chain(&self.future).all(|&w| w >= 1),
            InvalidArgument,
            "window sizes must be >= 1"
        );
        Ok(())
    }
}

/// File name of the result for one grid run.
pub fn run_file_name(cell: CellKind, past: usize, future: usize) -> String {
    format!("{cell}_n{past:03}_f{future:03}.json")
}

fn failed_file_name(cell: CellKind, past: usize, future: usize) -> String {
    format!("{cell}_n{past:03}_f{future:03}.failed.json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub context: Context,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct GridOutcome {
    pub executed: usize,
    pub skipped: usize,
    pub failed: Vec<FailedRun>,
    pub results: Vec<RunResult>,
}

/// Mean validation MSE for every (past, future) pair of one cell kind;
/// `None` where the run is missing or failed.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub cell: String,
    pub past: Vec<usize>,
    pub future: Vec<usize>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl GridTable {
    pub fn from_results(cell: &str, results: &[RunResult], metric: fn(&RunResult) -> f64) -> Self {
        let mut past: Vec<usize> = Vec::new();
        let mut future: Vec<usize> = Vec::new();
        let mine: Vec<&RunResult> = results.iter().filter(|r| r.context.model == cell).collect();
        for r in &mine {
            if let (Some(n), Some(f)) = (r.context.n, r.context.f) {
                if !past.contains(&n) {
                    past.push(n);
                }
                if !future.contains(&f) {
                    future.push(f);
                }
            }
        }
        past.sort_unstable();
        future.sort_unstable();
        let mut values = vec![vec![None; future.len()]; past.len()];
        for r in mine {
            if let (Some(n), Some(f)) = (r.context.n, r.context.f) {
                let i = past.binary_search(&n).expect("collected above");
                let j = future.binary_search(&f).expect("collected above");
                values[i][j] = Some(metric(r));
            }
        }
        Self {
            cell: cell.to_string(),
            past,
            future,
            values,
        }
    }

    pub fn get(&self, past: usize, future: usize) -> Option<f64> {
        let i = self.past.iter().position(|&p| p == past)?;
        let j = self.future.iter().position(|&f| f == future)?;
        self.values[i][j]
    }

    pub fn populated(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_some()).count()
    }

    /// Rows are past windows, columns future windows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("past\\future");
        for f in &self.future {
            out.push_str(&format!(",{f}"));
        }
        out.push('\n');
        for (i, n) in self.past.iter().enumerate() {
            out.push_str(&n.to_string());
            for v in &self.values[i] {
                match v {
                    Some(v) => out.push_str(&format!(",{v:.4}")),
                    None => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn write_json(path: &Path, json: String) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, json + "\n").map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads every grid result under `dir/runs`, sorted by file name.
pub fn read_runs(dir: &Path) -> Result<Vec<RunResult>> {
    let runs = dir.join(RUNS_DIR);
    let mut paths: Vec<PathBuf> = fs::read_dir(&runs)
        .map_err(|e| Error::io(&runs, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".json") && !p.to_string_lossy().ends_with(".failed.json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::format(p, e.to_string()))
        })
        .collect()
}

/// Trains one model per (cell, past, future) into `out_dir/runs`, skipping
/// runs whose result file already exists. Failed runs are recorded beside
/// the results and do not stop the search.
pub fn grid_search(
    series: &Matrix,
    spec: &GridSpec,
    hyper: &ForecastHyper,
    seed: u64,
    out_dir: &Path,
) -> Result<GridOutcome> {
    use rayon::prelude::*;
    spec.validate()?;
    hyper.validate()?;
    let max_past = spec.past.iter().max().copied().unwrap_or(0);
    let max_future = spec.future.iter().max().copied().unwrap_or(0);
    ensure!(
        series.rows() > max_past + max_future,
        InvalidArgument,
        "series of {} frames is too short for past {max_past} + future {max_future}",
        series.rows()
    );
    let runs_dir = out_dir.join(RUNS_DIR);
    fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;

    let mut jobs = Vec::new();
    let mut skipped = 0;
    for &cell in &spec.cells {
        for (i, &n) in spec.past.iter().enumerate() {
            for (j, &f) in spec.future.iter().enumerate() {
                if runs_dir.join(run_file_name(cell, n, f)).exists() {
                    skipped += 1;
                } else {
                    jobs.push((cell, n, f, sub_seed(seed, (i * spec.future.len() + j) as u64)));
                }
            }
        }
    }
    log::info!("grid_start pending={} skipped={skipped}", jobs.len());

    let outcomes: Vec<std::result::Result<RunResult, FailedRun>> = jobs
        .par_iter()
        .map(|&(cell, n, f, run_seed)| {
            let context = Context {
                model: cell.to_string(),
                kernel: None,
                fold: None,
                n: Some(n),
                f: Some(f),
            };
            let started = Instant::now();
            let h = ForecastHyper {
                seed: run_seed,
                ..hyper.clone()
            };
            match train_forecast(series, cell, n, f, &h) {
                Ok(report) => {
                    let result = RunResult {
                        context,
                        mse: report.val_mse,
                        mae: report.val_mae,
                        seed: run_seed,
                        wall_time_s: spec.record_wall_time.then(|| started.elapsed().as_secs_f64()),
                    };
                    log::info!("grid_run cell={cell} n={n} f={f} mse={:.4} mae={:.4}", result.mse, result.mae);
                    write_json(&runs_dir.join(run_file_name(cell, n, f)), result.to_json())
                        .map(|_| result)
                        .map_err(|e| FailedRun {
                            context: Context {
                                model: cell.to_string(),
                                kernel: None,
                                fold: None,
                                n: Some(n),
                                f: Some(f),
                            },
                            seed: run_seed,
                            error: e.to_string(),
                        })
                }
                Err(e) => {
                    log::warn!("grid_run_failed cell={cell} n={n} f={f} error=\"{e}\"");
                    let failed = FailedRun {
                        context,
                        seed: run_seed,
                        error: e.to_string(),
                    };
                    let json = serde_json::to_string_pretty(&failed).expect("failure record serializes");
                    if let Err(io) = write_json(&runs_dir.join(failed_file_name(cell, n, f)), json) {
                        log::warn!("grid_failure_unrecorded error=\"{io}\"");
                    }
                    Err(failed)
                }
            }
        })
        .collect();

    let mut outcome = GridOutcome {
        skipped,
        ..GridOutcome::default()
    };
    for o in outcomes {
        match o {
            Ok(r) => {
                outcome.executed += 1;
                let stale = runs_dir.join(failed_file_name(
                    r.context.model.parse().expect("cell name"),
                    r.context.n.unwrap_or_default(),
                    r.context.f.unwrap_or_default(),
                ));
                if stale.exists() {
                    let _ = fs::remove_file(stale);
                }
            }
            Err(f) => outcome.failed.push(f),
        }
    }
    outcome.results = read_runs(out_dir)?;
    for &cell in &spec.cells {
        for (name, metric) in [("mse", mse_of as fn(&RunResult) -> f64), ("mae", mae_of)] {
            let table = GridTable::from_results(cell.as_str(), &outcome.results, metric);
            let path = out_dir.join(format!("grid_{cell}_{name}.csv"));
            fs::write(&path, table.to_csv()).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(outcome)
}

pub(crate) fn mse_of(r: &RunResult) -> f64 {
    r.mse
}

pub(crate) fn mae_of(r: &RunResult) -> f64 {
    r.mae
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::COORDS;

    fn series(t: usize) -> Matrix {
        let data = (0..t * COORDS)
            .map(|i| 30.0 + 5.0 * ((i / COORDS) as f64 * 0.2 + (i % COORDS) as f64).sin())
            .collect();
        Matrix::from_vec(t, COORDS, data).unwrap()
    }

    fn small() -> (GridSpec, ForecastHyper) {
        (
            GridSpec {
                cells: vec![CellKind::Lstm, CellKind::Gru],
                past: vec![3, 5],
                future: vec![1, 2, 4],
                record_wall_time: false,
            },
            ForecastHyper {
                epochs: 2,
                lr: 1e-2,
                batch: 16,
                hidden: 3,
                stride: 2,
                train_fraction: 0.8,
                seed: 0,
            },
        )
    }

    #[test]
    fn runs_every_cell_then_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let (spec, hyper) = small();
        let s = series(60);
        let first = grid_search(&s, &spec, &hyper, 7, dir.path()).unwrap();
        assert_eq!((first.executed, first.skipped), (12, 0));
        assert_eq!(first.results.len(), 12);
        let table = GridTable::from_results("gru", &first.results, mse_of);
        assert_eq!(table.populated(), 6);
        let csv = fs::read_to_string(dir.path().join("grid_lstm_mse.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("past\\future,1,2,4\n"));

        let before: Vec<_> = read_runs(dir.path()).unwrap();
        let again = grid_search(&s, &spec, &hyper, 7, dir.path()).unwrap();
        assert_eq!((again.executed, again.skipped), (0, 12));
        assert_eq!(again.results, before);
    }

    #[test]
    fn deterministic_across_directories() {
        let (spec, hyper) = small();
        let s = series(60);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        grid_search(&s, &spec, &hyper, 3, a.path()).unwrap();
        grid_search(&s, &spec, &hyper, 3, b.path()).unwrap();
        for name in ["grid_lstm_mse.csv", "grid_gru_mae.csv"] {
            assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
        }
        let file = run_file_name(CellKind::Gru, 5, 4);
        assert_eq!(
            fs::read(a.path().join(RUNS_DIR).join(&file)).unwrap(),
            fs::read(b.path().join(RUNS_DIR).join(&file)).unwrap()
        );
    }

    #[test]
    fn short_series_is_rejected() {
        let (spec, hyper) = small();
        let dir = tempfile::tempdir().unwrap();
        assert!(grid_search(&series(8), &spec, &hyper, 1, dir.path()).is_err());
    }
}
