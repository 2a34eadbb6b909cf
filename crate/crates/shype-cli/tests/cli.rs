//! End-to-end CLI tests: exit codes, file outputs, reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn shype() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_shype"));
    cmd.env_remove("SHYPE_SEED");
    cmd
}

fn exemplar() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models/network_node.hype")
}

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("shype_cli_{}", name));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

#[test]
fn validate_exemplar_exits_zero() {
    let out = shype().arg("validate").arg(exemplar()).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn validate_missing_file_exits_two() {
    let out = shype()
        .arg("validate")
        .arg("/nonexistent/nowhere.hype")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn validate_duplicate_influence_exits_one_and_names_it() {
    let dir = temp_dir("dupinfl");
    let path = dir.join("bad.hype");
    fs::write(
        &path,
        "\
hype model dup
#definitions
var B = 0;
function const() = 1;
#mappings
infl shared :-> B;
event go = :-> @ 1;
#subcomponents
only(e) := e,init:[0,const()];
#components
c1 := only(go):shared;
c2 := only(go):shared;
#controller
loopy := go.loopy;
#system
c1 <*> c2 <*> loopy;
",
    )
    .unwrap();
    let out = shype().arg("validate").arg(&path).output().unwrap();
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("shared"), "stderr: {}", stderr);
    assert!(stderr.contains("influence not unique"), "stderr: {}", stderr);
}

#[test]
fn simulate_writes_deterministic_csvs() {
    let dir_a = temp_dir("sim_a");
    let dir_b = temp_dir("sim_b");
    for dir in [&dir_a, &dir_b] {
        let out = shype()
            .arg("simulate")
            .arg(exemplar())
            .args(["--t-end", "100", "--seed", "7"])
            .arg("--out")
            .arg(dir)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read(dir_a.join("trajectory.csv")).unwrap();
    let b = fs::read(dir_b.join("trajectory.csv")).unwrap();
    assert_eq!(a, b, "trajectory CSVs differ between invocations");
    assert_eq!(
        fs::read(dir_a.join("events.csv")).unwrap(),
        fs::read(dir_b.join("events.csv")).unwrap()
    );
}

#[test]
fn simulate_matches_frozen_golden() {
    let dir = temp_dir("sim_golden");
    let out = shype()
        .arg("simulate")
        .arg(exemplar())
        .args(["--t-end", "100", "--seed", "7", "--points", "10"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let got = fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    let golden_path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/network_node_t100_s7.csv");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&golden_path, &got).unwrap();
        return;
    }
    let want = fs::read_to_string(&golden_path).unwrap();
    assert_eq!(got, want, "trajectory drifted from the frozen golden run");
}

#[test]
fn simulate_zero_horizon_writes_initial_row_only() {
    let dir = temp_dir("sim_zero");
    let out = shype()
        .arg("simulate")
        .arg(exemplar())
        .args(["--t-end", "0"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2); // header and the t = 0 row
    assert!(lines[1].starts_with("0,"));
}

#[test]
fn deterministic_model_is_seed_independent() {
    let dir = temp_dir("det_model");
    let model_path = dir.join("fill.hype");
    fs::write(&model_path, shype::parse::render(&shype::testmodels::fill_only_model())).unwrap();

    let mut outputs = Vec::new();
    for seed in ["1", "999"] {
        let sub = dir.join(format!("s{}", seed));
        let out = shype()
            .arg("simulate")
            .arg(&model_path)
            .args(["--t-end", "150", "--seed", seed])
            .arg("--out")
            .arg(&sub)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(fs::read(sub.join("trajectory.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn zeno_model_exits_three() {
    let dir = temp_dir("zeno");
    let path = dir.join("zeno.hype");
    // The guard holds from the start and the controller re-offers the event
    // forever, so the cascade limit trips at t = 0.
    fs::write(
        &path,
        "\
hype model zeno
#definitions
var B = 0;
function const() = 1;
guard above(X,K) = X >= K;
#mappings
infl i :-> B;
event boom = above(B, 0) :-> ;
#subcomponents
only(e) := e,init:[0,const()];
#components
c := only(boom):i;
#controller
forever := boom.forever;
#system
c <*> forever;
",
    )
    .unwrap();
    let out = shype()
        .arg("simulate")
        .arg(&path)
        .args(["--t-end", "1"])
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Zeno"), "stderr: {}", stderr);
}

#[test]
fn batch_summary_has_expected_shape() {
    let dir = temp_dir("batch");
    let out = shype()
        .arg("batch")
        .arg(exemplar())
        .args(["--runs", "8", "--t-end", "50", "--jobs", "2"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert!(summary.starts_with("observable,n,mean,sd,ci_lo,ci_hi\n"));
    assert!(summary.contains("B,8,"));
    let raw = fs::read_to_string(dir.join("raw.csv")).unwrap();
    assert_eq!(raw.lines().count(), 9); // header plus one row per run
}

#[test]
fn batch_jobs_do_not_change_files() {
    let dir1 = temp_dir("batch_j1");
    let dir4 = temp_dir("batch_j4");
    for (dir, jobs) in [(&dir1, "1"), (&dir4, "4")] {
        let out = shype()
            .arg("batch")
            .arg(exemplar())
            .args(["--runs", "12", "--t-end", "50", "--jobs", jobs, "--seed", "5"])
            .arg("--out")
            .arg(dir)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
    }
    assert_eq!(
        fs::read(dir1.join("summary.csv")).unwrap(),
        fs::read(dir4.join("summary.csv")).unwrap()
    );
    assert_eq!(
        fs::read(dir1.join("raw.csv")).unwrap(),
        fs::read(dir4.join("raw.csv")).unwrap()
    );
}

#[test]
fn sweep_unknown_parameter_exits_one() {
    let out = shype()
        .arg("sweep")
        .arg(exemplar())
        .args(["--param", "nope", "--values", "1,2"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn sweep_writes_per_observable_files() {
    let dir = temp_dir("sweep");
    let out = shype()
        .arg("sweep")
        .arg(exemplar())
        .args([
            "--param", "kon_in", "--values", "0.25,0.5", "--runs", "4", "--t-end", "25",
        ])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let b_csv = fs::read_to_string(dir.join("sweep_B.csv")).unwrap();
    assert!(b_csv.starts_with("series,x,mean,ci_lo,ci_hi,n\n"));
    assert_eq!(b_csv.lines().count(), 3); // header + two values
    let raw = fs::read_to_string(dir.join("sweep_raw.csv")).unwrap();
    assert_eq!(raw.lines().count(), 1 + 2 * 4);
    assert!(dir.join("sweep_plot.gp").exists());
}

#[test]
fn casestudy_single_experiment_runs() {
    let dir = temp_dir("case_single");
    let scenario = dir.join("tiny.scenario");
    fs::write(
        &scenario,
        "\
scenario = rtbf
experiment = single
sensors = 3
runs = 2
seed = 9
gen_bursts_per_h = 1.0
gen_burst_mean_min = 6
gen_mb_per_min = 1.8
sensor_mb = 60
",
    )
    .unwrap();
    let out = shype()
        .arg("casestudy")
        .arg(&scenario)
        .arg("--out")
        .arg(dir.join("results"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(dir.join("results/single_summary.csv")).unwrap();
    assert!(summary.contains("# scenario rtbf"));
    assert!(summary.contains("total_collected"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("/run"), "stdout: {}", stdout);
}

#[test]
fn casestudy_mtc_experiment_writes_figure_files() {
    let dir = temp_dir("case_mtc");
    let scenario = dir.join("small.scenario");
    fs::write(
        &scenario,
        "\
scenario = all
experiment = mtc
sensors = 3
runs = 2
seed = 9
mtc_values = 10, 30
sensor_mb = 60
gen_bursts_per_h = 1.0
gen_burst_mean_min = 6
gen_mb_per_min = 1.8
",
    )
    .unwrap();
    let out = shype()
        .arg("casestudy")
        .arg(&scenario)
        .arg("--out")
        .arg(dir.join("results"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let dropped = fs::read_to_string(dir.join("results/mtc_total_dropped.csv")).unwrap();
    // Four scenario series times two sweep points plus the header.
    assert_eq!(dropped.lines().count(), 1 + 4 * 2);
    let raw = fs::read_to_string(dir.join("results/mtc_raw.csv")).unwrap();
    assert_eq!(raw.lines().count(), 1 + 4 * 2 * 2);
    assert!(dir.join("results/mtc_total_collected.csv").exists());
}

#[test]
fn seed_env_var_overrides_default() {
    let dir_env = temp_dir("seed_env");
    let dir_flag = temp_dir("seed_flag");
    let out = shype()
        .arg("simulate")
        .arg(exemplar())
        .args(["--t-end", "50"])
        .arg("--out")
        .arg(&dir_env)
        .env("SHYPE_SEED", "123")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let out = shype()
        .arg("simulate")
        .arg(exemplar())
        .args(["--t-end", "50", "--seed", "123"])
        .arg("--out")
        .arg(&dir_flag)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(
        fs::read(dir_env.join("trajectory.csv")).unwrap(),
        fs::read(dir_flag.join("trajectory.csv")).unwrap()
    );
}

#[test]
fn render_scenario_emits_loadable_source() {
    let dir = temp_dir("render_scn");
    let scenario = dir.join("s.scenario");
    fs::write(&scenario, "scenario = raef\nsensors = 2\n").unwrap();
    let out = shype()
        .arg("render")
        .arg(&scenario)
        .arg("--scenario")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let source = String::from_utf8(out.stdout).unwrap();
    assert!(source.starts_with("hype model ferry_raef"));
    let model = shype::parse::load(&source).unwrap();
    assert!(shype::model::validate(&model).is_valid());
}
