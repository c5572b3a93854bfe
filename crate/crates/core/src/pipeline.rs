//! Stage runners connecting the library to files on disk.
//!
//! A run is described by one JSON document with a section per stage. Every
//! stage writes the resolved document as `<stage>.config.json` beside its
//! outputs.

use crate::backbone::{forward_batch, train_backbone, train_pose, BackboneModel, PoseDataset, PoseHyper, Variant};
use crate::elm::{
    elm_train, neuron_sweep, refine_cv, sweep_curve, ElmKernel, ElmModel, SweepRange, SWEEP_CSV_HEADER,
};
use crate::error::{ensure, Error, Result};
use crate::eval::{auto_annotate, grid_search, report, Context, GridSpec, RunResult, DEFAULT_FUTURE, DEFAULT_PAST};
use crate::forecast::{series_from_poses, train_forecast, CellKind, ForecastHyper, ForecastModel};
use crate::numeric::{sub_seed, Matrix};
use crate::synth::{self, read_manifest, read_pose_csv, synth_dataset, ArmModel, Camera, Primitive, SynthConfig, COORDS};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

fn p(s: &str) -> PathBuf {
    PathBuf::from(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub out: PathBuf,
    pub force: bool,
    pub fps: f64,
    pub duration_s: f64,
    /// Replaces the built-in activity script when set.
    pub script: Option<Vec<Primitive>>,
    pub noise_sigma: f64,
    pub render_size: usize,
    pub annotation_rate_hz: f64,
    pub render_all: bool,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            out: p("data"),
            force: false,
            fps: d.fps,
            duration_s: d.duration_s,
            script: None,
            noise_sigma: d.noise_sigma,
            render_size: d.render_size,
            annotation_rate_hz: d.annotation_rate_hz,
            render_all: d.render_all,
        }
    }
}

impl SynthSection {
    pub fn to_config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            fps: self.fps,
            duration_s: self.duration_s,
            script: self.script.clone().unwrap_or_else(synth::default_script),
            noise_sigma: self.noise_sigma,
            render_size: self.render_size,
            annotation_rate_hz: self.annotation_rate_hz,
            render_all: self.render_all,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainPoseSection {
    pub data: PathBuf,
    pub out: PathBuf,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub folds: usize,
    pub variant: Variant,
    /// Also train one backbone on every annotated frame for later stages.
    pub final_model: bool,
}

impl Default for TrainPoseSection {
    fn default() -> Self {
        let h = PoseHyper::default();
        Self {
            data: p("data"),
            out: p("pose"),
            epochs: h.epochs,
            lr: h.lr,
            batch: h.batch,
            folds: h.folds,
            variant: h.variant,
            final_model: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElmSweepSection {
    pub data: PathBuf,
    pub backbone: PathBuf,
    pub out: PathBuf,
    pub kernels: Vec<ElmKernel>,
    pub min: usize,
    pub max: usize,
    pub step: usize,
    pub folds: usize,
    /// Ridge strength for `rbf_l2`; its default when unset.
    pub lambda: Option<f64>,
}

impl Default for ElmSweepSection {
    fn default() -> Self {
        let r = SweepRange::default();
        Self {
            data: p("data"),
            backbone: p("pose/backbone.armf"),
            out: p("elm_sweep"),
            kernels: ElmKernel::ALL.to_vec(),
            min: r.min,
            max: r.max,
            step: r.step,
            folds: 5,
            lambda: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElmTrainSection {
    pub data: PathBuf,
    /// Output directory of `train-pose` (fold models, split and final model).
    pub pose: PathBuf,
    pub out: PathBuf,
    pub kernel: ElmKernel,
    pub n_hidden: usize,
    pub lambda: Option<f64>,
}

impl Default for ElmTrainSection {
    fn default() -> Self {
        Self {
            data: p("data"),
            pose: p("pose"),
            out: p("elm"),
            kernel: ElmKernel::RbfL2,
            n_hidden: 1000,
            lambda: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateSection {
    pub data: PathBuf,
    pub backbone: PathBuf,
    pub elm: PathBuf,
    pub out: PathBuf,
}

impl Default for AnnotateSection {
    fn default() -> Self {
        Self {
            data: p("data"),
            backbone: p("pose/backbone.armf"),
            elm: p("elm/elm.armf"),
            out: p("annotated/poses_auto.csv"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainForecastSection {
    pub series: PathBuf,
    pub out: PathBuf,
    pub cell: CellKind,
    pub past: usize,
    pub future: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub hidden: usize,
    pub stride: usize,
    pub train_fraction: f64,
    /// Pose CSV whose consecutive `past`-row chunks are forecast after training.
    pub predict: Option<PathBuf>,
}

impl Default for TrainForecastSection {
    fn default() -> Self {
        let h = ForecastHyper::default();
        Self {
            series: p("annotated/poses_auto.csv"),
            out: p("forecast"),
            cell: CellKind::Lstm,
            past: 10,
            future: 5,
            epochs: h.epochs,
            lr: h.lr,
            batch: h.batch,
            hidden: h.hidden,
            stride: h.stride,
            train_fraction: h.train_fraction,
            predict: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSearchSection {
    pub series: PathBuf,
    pub out: PathBuf,
    pub cells: Vec<CellKind>,
    pub past: Vec<usize>,
    pub future: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub hidden: usize,
    pub stride: usize,
    pub train_fraction: f64,
    pub record_wall_time: bool,
}

impl Default for GridSearchSection {
    fn default() -> Self {
        let h = ForecastHyper::default();
        Self {
            series: p("annotated/poses_auto.csv"),
            out: p("grid"),
            cells: CellKind::ALL.to_vec(),
            past: DEFAULT_PAST.to_vec(),
            future: DEFAULT_FUTURE.to_vec(),
            epochs: h.epochs,
            lr: h.lr,
            batch: h.batch,
            hidden: h.hidden,
            stride: h.stride,
            train_fraction: h.train_fraction,
            record_wall_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub results: PathBuf,
    pub out: PathBuf,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            results: p("."),
            out: p("report"),
        }
    }
}

/// Every tunable of the pipeline, one section per stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub synth: SynthSection,
    pub train_pose: TrainPoseSection,
    pub elm_sweep: ElmSweepSection,
    pub elm_train: ElmTrainSection,
    pub annotate: AnnotateSection,
    pub train_forecast: TrainForecastSection,
    pub grid_search: GridSearchSection,
    pub report: ReportSection,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("config {}: {e}", path.display())))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Writes `<stage>.config.json` into `dir`.
    pub fn write_resolved(&self, dir: &Path, stage: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("{stage}.config.json"));
        fs::write(&path, self.to_json()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// `key=value` pairs describing what a stage produced.
pub type StageSummary = Vec<(&'static str, String)>;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn loss_csv(losses: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(out, "{},{l:.8}", i + 1);
    }
    out
}

pub fn run_synth(cfg: &RunConfig) -> Result<StageSummary> {
    let s = &cfg.synth;
    let config = s.to_config(cfg.seed());
    let manifest = synth_dataset(
        &config,
        &ArmModel::default(),
        &Camera::for_render_size(s.render_size),
        &s.out,
        s.force,
    )?;
    cfg.write_resolved(&s.out, "synth")?;
    Ok(vec![
        ("out", s.out.display().to_string()),
        ("frames", manifest.frames_total.to_string()),
        ("annotated", manifest.annotated_frames.to_string()),
        ("rendered", manifest.rendered_frames.to_string()),
    ])
}

/// Validation split recorded by `train-pose`, by dataset row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub seed: u64,
    pub val_rows: Vec<usize>,
    pub val_frame_ids: Vec<u64>,
}

pub const FOLDS_FILE: &str = "folds.json";
pub const BACKBONE_FILE: &str = "backbone.armf";
pub const ELM_FILE: &str = "elm.armf";
pub const RESULTS_DIR: &str = "results";

fn fold_dir(out: &Path, k: usize) -> PathBuf {
    out.join(format!("fold{k}"))
}

fn write_result(dir: &Path, name: &str, result: &RunResult) -> Result<()> {
    create_dir(dir)?;
    write_text(&dir.join(name), &result.to_json())
}

pub fn run_train_pose(cfg: &RunConfig) -> Result<StageSummary> {
    let s = &cfg.train_pose;
    let seed = cfg.seed();
    let hyper = PoseHyper {
        epochs: s.epochs,
        lr: s.lr,
        batch: s.batch,
        folds: s.folds,
        seed,
        variant: s.variant,
    };
    let data = PoseDataset::load(&s.data)?;
    let cv = train_pose(&data, &hyper)?;
    create_dir(&s.out)?;
    let results = s.out.join(RESULTS_DIR);
    let variant = s.variant.as_str();
    let mut records = Vec::new();
    for f in &cv.folds {
        let dir = fold_dir(&s.out, f.fold);
        create_dir(&dir)?;
        f.trained.model.save(&dir.join(BACKBONE_FILE), f.seed)?;
        write_text(&dir.join("loss.csv"), &loss_csv(&f.trained.epoch_losses))?;
        let result = RunResult {
            context: Context {
                model: variant.to_string(),
                fold: Some(f.fold),
                ..Context::default()
            },
            mse: f.val_mse,
            mae: f.val_mae,
            seed: f.seed,
            wall_time_s: None,
        };
        write_result(&results, &format!("{variant}_fold{}.json", f.fold), &result)?;
        records.push(FoldRecord {
            fold: f.fold,
            seed: f.seed,
            val_rows: f.val_indices.clone(),
            val_frame_ids: f.val_indices.iter().map(|&i| data.frame_ids[i]).collect(),
        });
    }
    let folds_json = serde_json::to_string_pretty(&records).expect("folds serialize") + "\n";
    write_text(&s.out.join(FOLDS_FILE), &folds_json)?;
    write_text(&s.out.join("summary.csv"), &format!("model,mse,mae\n{}\n", cv.summary.csv_line()))?;

    let mut summary = vec![
        ("out", s.out.display().to_string()),
        ("frames", data.len().to_string()),
        ("mse", format!("{:.4}±{:.4}", cv.summary.mse_mean, cv.summary.mse_std)),
        ("mae", format!("{:.4}±{:.4}", cv.summary.mae_mean, cv.summary.mae_std)),
    ];
    if s.final_model {
        let all: Vec<usize> = (0..data.len()).collect();
        let final_seed = sub_seed(seed, s.folds as u64);
        let trained = train_backbone(&data, &all, &hyper, final_seed)?;
        trained.model.save(&s.out.join(BACKBONE_FILE), final_seed)?;
        write_text(&s.out.join("loss.csv"), &loss_csv(&trained.epoch_losses))?;
        summary.push(("backbone", s.out.join(BACKBONE_FILE).display().to_string()));
    }
    cfg.write_resolved(&s.out, "train_pose")?;
    Ok(summary)
}

fn targets_matrix(data: &PoseDataset) -> Result<Matrix> {
    Matrix::from_rows(&data.targets)
}

pub fn run_elm_sweep(cfg: &RunConfig) -> Result<StageSummary> {
    let s = &cfg.elm_sweep;
    let data = PoseDataset::load(&s.data)?;
    let backbone = BackboneModel::load(&s.backbone)?;
    let (features, _) = forward_batch(&backbone, &data.inputs)?;
    let range = SweepRange {
        min: s.min,
        max: s.max,
        step: s.step,
    };
    let rows = neuron_sweep(&features, &targets_matrix(&data)?, &s.kernels, range, s.folds, s.lambda, cfg.seed())?;
    create_dir(&s.out)?;
    let mut csv = String::from(SWEEP_CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv_line());
        csv.push('\n');
    }
    write_text(&s.out.join("sweep.csv"), &csv)?;
    let mut curve = String::from("kernel,n_hidden,mean_mse\n");
    let points = sweep_curve(&rows);
    for (k, n, m) in &points {
        let _ = writeln!(curve, "{k},{n},{m:.6}");
    }
    write_text(&s.out.join("sweep_curve.csv"), &curve)?;
    cfg.write_resolved(&s.out, "elm_sweep")?;
    let best = points
        .iter()
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .map(|(k, n, m)| format!("{k}/{n}/{m:.4}"))
        .unwrap_or_default();
    Ok(vec![
        ("out", s.out.display().to_string()),
        ("rows", rows.len().to_string()),
        ("best", best),
    ])
}

pub fn read_folds(pose_dir: &Path) -> Result<Vec<FoldRecord>> {
    let path = pose_dir.join(FOLDS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
}

pub fn run_elm_train(cfg: &RunConfig) -> Result<StageSummary> {
    let s = &cfg.elm_train;
    let seed = cfg.seed();
    let data = PoseDataset::load(&s.data)?;
    let folds = read_folds(&s.pose)?;
    let models: Vec<BackboneModel> = folds
        .iter()
        .map(|f| BackboneModel::load(&fold_dir(&s.pose, f.fold).join(BACKBONE_FILE)))
        .collect::<Result<_>>()?;
    for f in &folds {
        let ids: Vec<u64> = f.val_rows.iter().map(|&i| data.frame_ids.get(i).copied().unwrap_or(u64::MAX)).collect();
        ensure!(
            ids == f.val_frame_ids,
            InvalidArgument,
            "fold {} of {} does not match the dataset in {}",
            f.fold,
            s.pose.display(),
            s.data.display()
        );
    }
    let pairs: Vec<(&BackboneModel, &[usize])> = models.iter().zip(&folds).map(|(m, f)| (m, &f.val_rows[..])).collect();
    let refined = refine_cv(&data, &pairs, s.kernel, s.n_hidden, s.lambda, seed)?;

    create_dir(&s.out)?;
    let results = s.out.join(RESULTS_DIR);
    let mut comparison = String::from("fold,raw_mse,raw_mae,elm_mse,elm_mae\n");
    for r in &refined {
        let variant = models[r.fold].architecture().variant.as_str();
        let result = RunResult {
            context: Context {
                model: format!("{variant}+elm"),
                kernel: Some(s.kernel.to_string()),
                fold: Some(r.fold),
                ..Context::default()
            },
            mse: r.elm_mse,
            mae: r.elm_mae,
            seed: sub_seed(seed, r.fold as u64),
            wall_time_s: None,
        };
        write_result(&results, &format!("{}_fold{}.json", s.kernel, r.fold), &result)?;
        let _ = writeln!(
            comparison,
            "{},{:.6},{:.6},{:.6},{:.6}",
            r.fold, r.raw_mse, r.raw_mae, r.elm_mse, r.elm_mae
        );
    }
    write_text(&s.out.join("comparison.csv"), &comparison)?;

    let mut summary = vec![
        ("out", s.out.display().to_string()),
        ("kernel", s.kernel.to_string()),
        (
            "improved_folds",
            format!("{}/{}", refined.iter().filter(|r| r.elm_mse <= r.raw_mse).count(), refined.len()),
        ),
    ];
    let final_path = s.pose.join(BACKBONE_FILE);
    if final_path.exists() {
        let backbone = BackboneModel::load(&final_path)?;
        let (features, _) = forward_batch(&backbone, &data.inputs)?;
        let mut model = elm_train(
            &features,
            &targets_matrix(&data)?,
            s.kernel,
            s.n_hidden,
            s.lambda,
            sub_seed(seed, folds.len() as u64),
        )?;
        model.backbone_hash = Some(backbone.hash());
        model.save(&s.out.join(ELM_FILE))?;
        summary.push(("elm", s.out.join(ELM_FILE).display().to_string()));
    } else {
        log::warn!("elm_train_no_final_backbone path={}", final_path.display());
    }
    cfg.write_resolved(&s.out, "elm_train")?;
    Ok(summary)
}

pub fn run_annotate(cfg: &RunConfig) -> Result<StageSummary> {
    let s = &cfg.annotate;
    let manifest = read_manifest(&s.data)?;
    ensure!(
        manifest.rendered_frames > 0,
        InvalidArgument,
        "{} has no rendered frames (generate it with render_all)",
        s.data.display()
    );
    let backbone = BackboneModel::load(&s.backbone)?;
    let elm = ElmModel::load(&s.elm)?;
    let out_dir = s.out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    create_dir(out_dir)?;
    let poses = auto_annotate(
        &backbone,
        &elm,
        &s.data.join(synth::FRAMES_DIR),
        &s.out,
        Some(manifest.rendered_frames),
    )?;
    cfg.write_resolved(out_dir, "annotate")?;
    Ok(vec![("out", s.out.display().to_string()), ("frames", poses.len().to_string())])
}

fn read_series(path: &Path) -> Result<Matrix> {
    Ok(series_from_poses(&read_pose_csv(path)?))
}

/// Forecast CSV: `window,step,x0,y0,...,x7,y7`, `f` rows per query window.
pub fn predictions_csv(predictions: &[Matrix]) -> String {
    let mut out = String::from("window,step");
    for k in 0..COORDS / 2 {
        let _ = write!(out, ",x{k},y{k}");
    }
    out.push('\n');
    for (w, m) in predictions.iter().enumerate() {
        for (t, row) in m.row_iter().enumerate() {
            let _ = write!(out, "{w},{t}");
            for v in row {
                let _ = write!(out, ",{v:.6}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn run_train_forecast(cfg: &RunConfig) -> Result<StageSummary> {
    let s = &cfg.train_forecast;
    let seed = cfg.seed();
    let series = read_series(&s.series)?;
    let hyper = ForecastHyper {
        epochs: s.epochs,
        lr: s.lr,
        batch: s.batch,
        hidden: s.hidden,
        stride: s.stride,
        train_fraction: s.train_fraction,
        seed,
    };
    let rep = train_forecast(&series, s.cell, s.past, s.future, &hyper)?;
    create_dir(&s.out)?;
    rep.model.save(&s.out.join("model.armf"), seed)?;
    write_text(&s.out.join("loss.csv"), &loss_csv(&rep.epoch_losses))?;
    let result = RunResult {
        context: Context {
            model: s.cell.to_string(),
            n: Some(s.past),
            f: Some(s.future),
            ..Context::default()
        },
        mse: rep.val_mse,
        mae: rep.val_mae,
        seed,
        wall_time_s: None,
    };
    write_text(&s.out.join("result.json"), &result.to_json())?;
    let mut summary = vec![
        ("out", s.out.display().to_string()),
        ("val_mse", format!("{:.4}", rep.val_mse)),
        ("val_mae", format!("{:.4}", rep.val_mae)),
    ];
    if let Some(query) = &s.predict {
        let windows = query_windows(&read_series(query)?, s.past)?;
        let preds = rep.model.predict(&windows)?;
        write_text(&s.out.join("predictions.csv"), &predictions_csv(&preds))?;
        summary.push(("predicted_windows", preds.len().to_string()));
    }
    cfg.write_resolved(&s.out, "train_forecast")?;
    Ok(summary)
}

/// Splits a query series into consecutive `past`-row windows; a trailing
/// partial window is dropped.
pub fn query_windows(series: &Matrix, past: usize) -> Result<Vec<Matrix>> {
    ensure!(
        series.rows() >= past,
        InvalidArgument,
        "query holds {} frames, a window needs {past}",
        series.rows()
    );
    if !series.rows().is_multiple_of(past) {
        log::warn!("predict_partial_window dropped_rows={}", series.rows() % past);
    }
    Ok((0..series.rows() / past)
        .map(|w| series.select_rows(&(w * past..(w + 1) * past).collect::<Vec<_>>()))
        .collect())
}

/// Loads a saved forecaster and predicts every query window.
pub fn predict_with(model_path: &Path, query: &Path) -> Result<Vec<Matrix>> {
    let model = ForecastModel::load(model_path)?;
    let windows = query_windows(&read_series(query)?, model.shape().past)?;
    model.predict(&windows)
}

pub fn run_grid_search(cfg: &RunConfig) -> Result<StageSummary> {
    let s = &cfg.grid_search;
    let series = read_series(&s.series)?;
    let spec = GridSpec {
        cells: s.cells.clone(),
        past: s.past.clone(),
        future: s.future.clone(),
        record_wall_time: s.record_wall_time,
    };
    let hyper = ForecastHyper {
        epochs: s.epochs,
        lr: s.lr,
        batch: s.batch,
        hidden: s.hidden,
        stride: s.stride,
        train_fraction: s.train_fraction,
        seed: cfg.seed(),
    };
    let outcome = grid_search(&series, &spec, &hyper, cfg.seed(), &s.out)?;
    cfg.write_resolved(&s.out, "grid_search")?;
    Ok(vec![
        ("out", s.out.display().to_string()),
        ("executed", outcome.executed.to_string()),
        ("skipped", outcome.skipped.to_string()),
        ("failed", outcome.failed.len().to_string()),
    ])
}

pub fn run_report(cfg: &RunConfig) -> Result<StageSummary> {
    let s = &cfg.report;
    let summary = report(&s.results, &s.out)?;
    cfg.write_resolved(&s.out, "report")?;
    Ok(vec![
        ("out", s.out.display().to_string()),
        ("tables", summary.written.len().to_string()),
        ("skipped_inputs", summary.skipped.len().to_string()),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"seed": 1, "synth": {"fps": 10}}"#).is_ok());
        assert!(RunConfig::from_json(r#"{"sed": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"synth": {"fsp": 10}}"#).is_err());
    }

    #[test]
    fn defaults_roundtrip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert_eq!(cfg.grid_search.past.len() * cfg.grid_search.future.len(), 35);
    }

    #[test]
    fn query_windows_chunk() {
        let series = Matrix::zeros(25, COORDS);
        let w = query_windows(&series, 10).unwrap();
        assert_eq!(w.len(), 2);
        assert!(query_windows(&series, 30).is_err());
        let csv = predictions_csv(&[Matrix::zeros(2, COORDS)]);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("window,step,x0,y0,x1,y1"));
    }
}
