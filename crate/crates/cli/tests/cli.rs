use std::path::Path;
use std::process::{Command, Output};

fn armcast(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_armcast"))
        .current_dir(dir)
        .env_remove("ARMCAST_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

const SMALL_SYNTH: &[&str] = &["synth", "--duration-s", "30", "--render-size", "32", "--out", "data"];

#[test]
fn synth_refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let first = armcast(dir.path(), SMALL_SYNTH);
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    assert!(dir.path().join("data/synth.config.json").exists());

    let second = armcast(dir.path(), SMALL_SYNTH);
    assert_eq!(code(&second), 3);

    let mut forced = SMALL_SYNTH.to_vec();
    forced.push("--force");
    assert_eq!(code(&armcast(dir.path(), &forced)), 0);
}

#[test]
fn report_on_empty_directory_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let out = armcast(dir.path(), &["report", "--results", "empty"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no results found"));
}

#[test]
fn bad_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.json"), r#"{"synth": {"frames_per_second": 3}}"#).unwrap();
    let out = armcast(dir.path(), &["--config", "run.json", "synth"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn flags_override_config_and_seed_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.json"),
        r#"{"seed": 11, "synth": {"duration_s": 30, "render_size": 32, "out": "from_config"}}"#,
    )
    .unwrap();
    let out = armcast(dir.path(), &["--config", "run.json", "--seed", "5", "synth", "--out", "from_flag"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let resolved = std::fs::read_to_string(dir.path().join("from_flag/synth.config.json")).unwrap();
    assert!(resolved.contains("\"seed\": 5"));
    assert!(resolved.contains("\"duration_s\": 30"));
    assert!(!dir.path().join("from_config").exists());
    let log = String::from_utf8_lossy(&out.stderr);
    assert!(log.lines().any(|l| l.contains(" info stage_done stage=synth")), "{log}");
}

#[test]
fn small_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = |args: &[&str]| {
        let out = armcast(d, args);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    ok(&["synth", "--duration-s", "40", "--render-size", "32", "--render-all"]);
    ok(&["train-pose", "--epochs", "2", "--folds", "2"]);
    ok(&["elm-sweep", "--kernels", "linear,rbf_l2", "--min", "10", "--max", "30", "--step", "10", "--folds", "2"]);
    ok(&["elm-train", "--n-hidden", "20"]);
    ok(&["annotate"]);
    ok(&[
        "train-forecast", "--past", "4", "--future", "2", "--epochs", "2", "--hidden", "4", "--batch", "16",
        "--predict", "data/poses_full.csv",
    ]);
    ok(&["grid-search", "--past", "4", "--future", "1,2", "--cells", "gru", "--epochs", "1", "--hidden", "4"]);
    ok(&["report"]);
    for f in [
        "pose/summary.csv",
        "pose/backbone.armf",
        "elm/elm.armf",
        "elm/comparison.csv",
        "elm_sweep/sweep.csv",
        "annotated/poses_auto.csv",
        "forecast/predictions.csv",
        "grid/grid_gru_mse.csv",
        "report/table_pose.csv",
        "report/table_refinement.csv",
        "report/table_grid_gru_mse.csv",
        "report/sweep_curve.csv",
    ] {
        assert!(d.join(f).exists(), "missing {f}");
    }
}
