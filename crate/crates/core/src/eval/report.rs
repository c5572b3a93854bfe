//! Aggregates result files into summary tables.
//!
//! Every `*.json` under the results directory that parses as a run result is
//! classified by its context: grid runs carry `n` and `f`, refinement runs
//! carry a `kernel`, and the remaining fold records are pose-model runs.
//! Files named `sweep.csv` feed the neuron-count curve.

use super::boxplot::{boxplot_stats, BoxplotStats};
use super::grid::{mae_of, mse_of, GridTable};
use super::metrics::{mean_std, RunResult};
use crate::error::{Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub const POSE_TABLE: &str = "table_pose.csv";
pub const REFINE_TABLE: &str = "table_refinement.csv";
pub const BOXPLOT_JSON: &str = "boxplots.json";
pub const SWEEP_CURVE: &str = "sweep_curve.csv";

#[derive(Debug, Clone, Default)]
pub struct ReportSummary {
    pub written: Vec<PathBuf>,
    /// Files that looked like inputs but could not be read.
    pub skipped: Vec<(PathBuf, String)>,
    pub pose_rows: usize,
    pub refine_rows: usize,
    pub grid_tables: usize,
    pub sweep_rows: usize,
}

#[derive(Serialize)]
struct BoxplotEntry {
    group: String,
    values: Vec<f64>,
    stats: BoxplotStats,
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// `mean±std` formatting used by the summary tables.
pub fn mean_pm_std(values: &[f64]) -> String {
    let (m, s) = mean_std(values);
    format!("{m:.4}±{s:.4}")
}

fn fold_table(header: &str, groups: &BTreeMap<String, Vec<&RunResult>>) -> String {
    let mut out = format!("{header},folds,mse,mae\n");
    for (name, runs) in groups {
        let mses: Vec<f64> = runs.iter().map(|r| r.mse).collect();
        let maes: Vec<f64> = runs.iter().map(|r| r.mae).collect();
        out.push_str(&format!("{name},{},{},{}\n", runs.len(), mean_pm_std(&mses), mean_pm_std(&maes)));
    }
    out
}

/// Writes the summary tables for `results_dir` into `out_dir`.
pub fn report(results_dir: &Path, out_dir: &Path) -> Result<ReportSummary> {
    let mut files = Vec::new();
    if results_dir.is_dir() {
        collect_files(results_dir, &mut files)?;
    } else {
        return Err(Error::InvalidArgument(format!(
            "results directory {} does not exist",
            results_dir.display()
        )));
    }
    files.sort();
    let out_canon = out_dir.canonicalize().ok();

    let mut summary = ReportSummary::default();
    let mut runs: Vec<RunResult> = Vec::new();
    let mut sweep_rows: Vec<(String, usize, f64)> = Vec::new();
    for path in &files {
        if out_canon.as_ref().is_some_and(|o| path.canonicalize().is_ok_and(|p| p.starts_with(o))) {
            continue;
        }
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if name.ends_with(".failed.json") {
            summary.skipped.push((path.clone(), "recorded as a failed run".into()));
            continue;
        }
        if name.ends_with(".json") {
            let text = match fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    summary.skipped.push((path.clone(), e.to_string()));
                    continue;
                }
            };
            match serde_json::from_str::<RunResult>(&text) {
                Ok(r) => runs.push(r),
                Err(e) => {
                    // configs and manifests share the extension; only flag
                    // files that look like results
                    if text.contains("\"mse\"") {
                        summary.skipped.push((path.clone(), e.to_string()));
                    }
                }
            }
        } else if name == "sweep.csv" {
            match parse_sweep(path) {
                Ok(rows) => sweep_rows.extend(rows),
                Err(e) => summary.skipped.push((path.clone(), e.to_string())),
            }
        }
    }
    for (path, why) in &summary.skipped {
        log::warn!("report_skip path={} reason=\"{why}\"", path.display());
    }
    if runs.is_empty() && sweep_rows.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no results found in {}: expected run result JSON files (pose folds, \
             refinement folds or grid runs under runs/) or a sweep.csv",
            results_dir.display()
        )));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut write = |name: String, body: String| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        summary.written.push(path);
        Ok(())
    };

    let mut pose: BTreeMap<String, Vec<&RunResult>> = BTreeMap::new();
    let mut refine: BTreeMap<String, Vec<&RunResult>> = BTreeMap::new();
    let mut grid_cells: Vec<String> = Vec::new();
    for r in &runs {
        let c = &r.context;
        if c.n.is_some() && c.f.is_some() {
            if !grid_cells.contains(&c.model) {
                grid_cells.push(c.model.clone());
            }
        } else if let Some(k) = &c.kernel {
            refine.entry(k.clone()).or_default().push(r);
        } else {
            pose.entry(c.model.clone()).or_default().push(r);
        }
    }
    grid_cells.sort();

    let mut boxes = Vec::new();
    let mut add_boxes = |prefix: &str, groups: &BTreeMap<String, Vec<&RunResult>>| -> Result<()> {
        for (name, rs) in groups {
            let values: Vec<f64> = rs.iter().map(|r| r.mse).collect();
            boxes.push(BoxplotEntry {
                group: format!("{prefix}/{name}"),
                stats: boxplot_stats(&values)?,
                values,
            });
        }
        Ok(())
    };
    add_boxes("pose", &pose)?;
    add_boxes("refinement", &refine)?;
    let grid_groups: BTreeMap<String, Vec<&RunResult>> = grid_cells
        .iter()
        .map(|c| (c.clone(), runs.iter().filter(|r| &r.context.model == c && r.context.f.is_some()).collect()))
        .collect();
    add_boxes("grid", &grid_groups)?;

    if !pose.is_empty() {
        write(POSE_TABLE.into(), fold_table("model", &pose))?;
        summary.pose_rows = pose.len();
    }
    if !refine.is_empty() {
        write(REFINE_TABLE.into(), fold_table("kernel", &refine))?;
        summary.refine_rows = refine.len();
    }
    for cell in &grid_cells {
        for (name, metric) in [("mse", mse_of as fn(&RunResult) -> f64), ("mae", mae_of)] {
            let table = GridTable::from_results(cell, &runs, metric);
            write(format!("table_grid_{cell}_{name}.csv"), table.to_csv())?;
        }
        summary.grid_tables += 1;
    }
    if !sweep_rows.is_empty() {
        let mut curve: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
        for (k, n, m) in &sweep_rows {
            curve.entry((k.clone(), *n)).or_default().push(*m);
        }
        let mut body = String::from("kernel,n_hidden,mean_mse,std_mse\n");
        for ((k, n), v) in &curve {
            let (m, s) = mean_std(v);
            body.push_str(&format!("{k},{n},{m:.6},{s:.6}\n"));
        }
        summary.sweep_rows = curve.len();
        write(SWEEP_CURVE.into(), body)?;
    }
    if !boxes.is_empty() {
        let json = serde_json::to_string_pretty(&boxes).expect("boxplots serialize");
        write(BOXPLOT_JSON.into(), json + "\n")?;
    }
    Ok(summary)
}

fn parse_sweep(path: &Path) -> Result<Vec<(String, usize, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(crate::elm::SWEEP_CSV_HEADER) {
        return Err(Error::format(path, "unexpected sweep header"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            let bad = || Error::format(path, format!("line {}: malformed sweep row", i + 2));
            if cols.len() != 5 {
                return Err(bad());
            }
            Ok((
                cols[0].to_string(),
                cols[1].parse().map_err(|_| bad())?,
                cols[3].parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics::Context;

    fn put(dir: &Path, name: &str, r: &RunResult) {
        let p = dir.join(name);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, r.to_json()).unwrap();
    }

    fn run(model: &str, kernel: Option<&str>, fold: Option<usize>, nf: Option<(usize, usize)>, mse: f64) -> RunResult {
        RunResult {
            context: Context {
                model: model.into(),
                kernel: kernel.map(Into::into),
                fold,
                n: nf.map(|p| p.0),
                f: nf.map(|p| p.1),
            },
            mse,
            mae: mse.sqrt(),
            seed: 1,
            wall_time_s: None,
        }
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = report(dir.path(), &dir.path().join("out")).unwrap_err();
        assert!(err.to_string().contains("no results found"));
    }

    #[test]
    fn builds_every_table() {
        let dir = tempfile::tempdir().unwrap();
        let res = dir.path().join("results");
        for k in 0..5 {
            put(&res, &format!("pose/scconv_fold{k}.json"), &run("scconv", None, Some(k), None, 1.0 + k as f64));
            put(&res, &format!("elm/rbf_l2_fold{k}.json"), &run("scconv+elm", Some("rbf_l2"), Some(k), None, 0.5));
        }
        for n in [10, 20] {
            for f in [1, 5, 15] {
                let name = format!("grid/runs/lstm_n{n:03}_f{f:03}.json");
                put(&res, &name, &run("lstm", None, None, Some((n, f)), (n + f) as f64));
            }
        }
        fs::write(res.join("broken.json"), "{\"mse\": oops").unwrap();
        fs::write(res.join("config.json"), "{\"seed\": 1}").unwrap();
        fs::write(res.join("sweep.csv"), "kernel,n_hidden,fold,mse,mae\nrbf,100,0,2.0,1.0\nrbf,100,1,4.0,1.5\n").unwrap();

        let out = dir.path().join("tables");
        let s = report(&res, &out).unwrap();
        assert_eq!((s.pose_rows, s.refine_rows, s.grid_tables, s.sweep_rows), (1, 1, 1, 1));
        assert_eq!(s.skipped.len(), 1);
        let pose = fs::read_to_string(out.join(POSE_TABLE)).unwrap();
        assert!(pose.starts_with("model,folds,mse,mae\nscconv,5,3.0000±1.4142,"), "{pose}");
        let grid = fs::read_to_string(out.join("table_grid_lstm_mse.csv")).unwrap();
        assert_eq!(grid, "past\\future,1,5,15\n10,11.0000,15.0000,25.0000\n20,21.0000,25.0000,35.0000\n");
        let curve = fs::read_to_string(out.join(SWEEP_CURVE)).unwrap();
        assert_eq!(curve, "kernel,n_hidden,mean_mse,std_mse\nrbf,100,3.000000,1.000000\n");
        assert!(out.join(BOXPLOT_JSON).exists());

        // rerunning into the same place ignores its own outputs
        let again = report(&res, &out).unwrap();
        assert_eq!(again.written.len(), s.written.len());
    }
}
