use armcast::backbone::Variant;
use armcast::elm::ElmKernel;
use armcast::forecast::CellKind;
use armcast::pipeline::{self, RunConfig, StageSummary};
use armcast::{Error, ErrorKind};
use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

/// Synthetic robotic-arm pose estimation and motion forecasting.
#[derive(Parser, Debug)]
#[command(name = "armcast", version)]
struct Cli {
    /// JSON run configuration; flags given on the command line win over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed (falls back to the config, then ARMCAST_SEED, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for data-parallel loops (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic recording, annotations and rendered frames.
    Synth(SynthArgs),
    /// Cross-validate the pose backbone and train a final model.
    TrainPose(TrainPoseArgs),
    /// Sweep ELM kernels and hidden sizes over backbone features.
    ElmSweep(ElmSweepArgs),
    /// Refine the cross-validated backbones with an ELM head.
    ElmTrain(ElmTrainArgs),
    /// Label every rendered frame with the backbone and ELM.
    Annotate(AnnotateArgs),
    /// Train one forecaster on a pose series.
    TrainForecast(TrainForecastArgs),
    /// Train forecasters over the past × future grid.
    GridSearch(GridSearchArgs),
    /// Summarize result files into tables.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace an existing dataset.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long)]
    duration_s: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    render_size: Option<usize>,
    #[arg(long)]
    annotation_rate_hz: Option<f64>,
    /// Render every frame, not only the annotated ones.
    #[arg(long)]
    render_all: bool,
}

#[derive(Args, Debug)]
struct TrainPoseArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    /// scconv or plain.
    #[arg(long)]
    variant: Option<Variant>,
    /// Skip the backbone trained on every annotated frame.
    #[arg(long)]
    no_final: bool,
}

#[derive(Args, Debug)]
struct ElmSweepArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    backbone: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of linear,tanh,rbf,rbf_l2.
    #[arg(long, value_delimiter = ',')]
    kernels: Option<Vec<ElmKernel>>,
    #[arg(long)]
    min: Option<usize>,
    #[arg(long)]
    max: Option<usize>,
    #[arg(long)]
    step: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args, Debug)]
struct ElmTrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory of train-pose.
    #[arg(long)]
    pose: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    kernel: Option<ElmKernel>,
    #[arg(long)]
    n_hidden: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args, Debug)]
struct AnnotateArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    backbone: Option<PathBuf>,
    #[arg(long)]
    elm: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ForecastArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainForecastArgs {
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// lstm or gru.
    #[arg(long)]
    cell: Option<CellKind>,
    #[arg(long)]
    past: Option<usize>,
    #[arg(long)]
    future: Option<usize>,
    /// Pose CSV to forecast after training.
    #[arg(long)]
    predict: Option<PathBuf>,
    #[command(flatten)]
    hyper: ForecastArgs,
}

#[derive(Args, Debug)]
struct GridSearchArgs {
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    cells: Option<Vec<CellKind>>,
    #[arg(long, value_delimiter = ',')]
    past: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    future: Option<Vec<usize>>,
    /// Store per-run wall time (makes result files run-dependent).
    #[arg(long)]
    record_wall_time: bool,
    #[command(flatten)]
    hyper: ForecastArgs,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

macro_rules! apply_hyper {
    ($section:expr, $h:expr) => {{
        set(&mut $section.epochs, $h.epochs);
        set(&mut $section.lr, $h.lr);
        set(&mut $section.batch, $h.batch);
        set(&mut $section.hidden, $h.hidden);
        set(&mut $section.stride, $h.stride);
        set(&mut $section.train_fraction, $h.train_fraction);
    }};
}

fn env_seed() -> Result<Option<u64>, Error> {
    match std::env::var("ARMCAST_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidArgument(format!("ARMCAST_SEED={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Loads the config file and layers the command-line flags on top.
fn resolve(cli: Cli) -> Result<(Command, RunConfig), Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    cfg.seed = match cli.seed {
        Some(s) => Some(s),
        None => match cfg.seed {
            Some(s) => Some(s),
            None => Some(env_seed()?.unwrap_or(0)),
        },
    };
    match &cli.command {
        Command::Synth(a) => {
            let s = &mut cfg.synth;
            set(&mut s.out, a.out.clone());
            s.force |= a.force;
            set(&mut s.fps, a.fps);
            set(&mut s.duration_s, a.duration_s);
            set(&mut s.noise_sigma, a.noise_sigma);
            set(&mut s.render_size, a.render_size);
            set(&mut s.annotation_rate_hz, a.annotation_rate_hz);
            s.render_all |= a.render_all;
        }
        Command::TrainPose(a) => {
            let s = &mut cfg.train_pose;
            set(&mut s.data, a.data.clone());
            set(&mut s.out, a.out.clone());
            set(&mut s.epochs, a.epochs);
            set(&mut s.lr, a.lr);
            set(&mut s.batch, a.batch);
            set(&mut s.folds, a.folds);
            set(&mut s.variant, a.variant);
            if a.no_final {
                s.final_model = false;
            }
        }
        Command::ElmSweep(a) => {
            let s = &mut cfg.elm_sweep;
            set(&mut s.data, a.data.clone());
            set(&mut s.backbone, a.backbone.clone());
            set(&mut s.out, a.out.clone());
            set(&mut s.kernels, a.kernels.clone());
            set(&mut s.min, a.min);
            set(&mut s.max, a.max);
            set(&mut s.step, a.step);
            set(&mut s.folds, a.folds);
            if a.lambda.is_some() {
                s.lambda = a.lambda;
            }
        }
        Command::ElmTrain(a) => {
            let s = &mut cfg.elm_train;
            set(&mut s.data, a.data.clone());
            set(&mut s.pose, a.pose.clone());
            set(&mut s.out, a.out.clone());
            set(&mut s.kernel, a.kernel);
            set(&mut s.n_hidden, a.n_hidden);
            if a.lambda.is_some() {
                s.lambda = a.lambda;
            }
        }
        Command::Annotate(a) => {
            let s = &mut cfg.annotate;
            set(&mut s.data, a.data.clone());
            set(&mut s.backbone, a.backbone.clone());
            set(&mut s.elm, a.elm.clone());
            set(&mut s.out, a.out.clone());
        }
        Command::TrainForecast(a) => {
            let s = &mut cfg.train_forecast;
            set(&mut s.series, a.series.clone());
            set(&mut s.out, a.out.clone());
            set(&mut s.cell, a.cell);
            set(&mut s.past, a.past);
            set(&mut s.future, a.future);
            if a.predict.is_some() {
                s.predict = a.predict.clone();
            }
            apply_hyper!(s, a.hyper);
        }
        Command::GridSearch(a) => {
            let s = &mut cfg.grid_search;
            set(&mut s.series, a.series.clone());
            set(&mut s.out, a.out.clone());
            set(&mut s.cells, a.cells.clone());
            set(&mut s.past, a.past.clone());
            set(&mut s.future, a.future.clone());
            s.record_wall_time |= a.record_wall_time;
            apply_hyper!(s, a.hyper);
        }
        Command::Report(a) => {
            let s = &mut cfg.report;
            set(&mut s.results, a.results.clone());
            set(&mut s.out, a.out.clone());
        }
    }
    Ok((cli.command, cfg))
}

fn stage_name(command: &Command) -> &'static str {
    match command {
        Command::Synth(_) => "synth",
        Command::TrainPose(_) => "train_pose",
        Command::ElmSweep(_) => "elm_sweep",
        Command::ElmTrain(_) => "elm_train",
        Command::Annotate(_) => "annotate",
        Command::TrainForecast(_) => "train_forecast",
        Command::GridSearch(_) => "grid_search",
        Command::Report(_) => "report",
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::InvalidArgument("--workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let (command, cfg) = resolve(cli)?;
    let stage = stage_name(&command);
    log::info!("stage_start stage={stage} seed={}", cfg.seed());
    let summary: StageSummary = match command {
        Command::Synth(_) => pipeline::run_synth(&cfg)?,
        Command::TrainPose(_) => pipeline::run_train_pose(&cfg)?,
        Command::ElmSweep(_) => pipeline::run_elm_sweep(&cfg)?,
        Command::ElmTrain(_) => pipeline::run_elm_train(&cfg)?,
        Command::Annotate(_) => pipeline::run_annotate(&cfg)?,
        Command::TrainForecast(_) => pipeline::run_train_forecast(&cfg)?,
        Command::GridSearch(_) => pipeline::run_grid_search(&cfg)?,
        Command::Report(_) => pipeline::run_report(&cfg)?,
    };
    let fields: Vec<String> = summary.iter().map(|(k, v)| format!("{k}={v}")).collect();
    log::info!("stage_done stage={stage} {}", fields.join(" "));
    Ok(())
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| {
            writeln!(
                buf,
                "{} {} {}",
                chrono::Utc::now().format("%Y-%m-%dT%H:%M:%S%.3fZ"),
                record.level().as_str().to_lowercase(),
                record.args()
            )
        })
        .target(env_logger::Target::Stderr)
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("failed error=\"{e}\"");
            ExitCode::from(match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Io => 3,
                ErrorKind::Numerical => 4,
            })
        }
    }
}
