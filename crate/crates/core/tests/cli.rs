//! End-to-end checks of the binary: exit codes, file formats, and
//! reproducibility. Everything runs against temp directories under the
//! cargo target tree.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use hinf_vibration::harness::{simulate, Controller, SimulationPlan, WSignal};
use hinf_vibration::matkit::Matrix;
use hinf_vibration::vibration::SystemSpec;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hinfvib"));
    c.env_remove("HINFVIB_OUTPUT");
    c
}

fn fresh_dir(tag: &str) -> PathBuf {
    let p = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(format!("cli-{tag}"));
    let _ = fs::remove_dir_all(&p);
    fs::create_dir_all(&p).unwrap();
    p
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process was signalled")
}

const BENCH_TOML: &str = r#"
[plant]
a = [[0.0, 1.0], [-0.27, -2.8]]
b2 = [[0.0], [1.0]]
k = [[0.0, 0.0], [0.5, 0.0]]
gamma = 3.0
epsilon = 0.05
"#;

const SCALAR_TOML: &str = r#"
[plant]
a = [[-1.0]]
b1 = [[1.0]]
b2 = [[1.0]]
l = [[1.0]]
gamma = 1.5
epsilon = 0.1

[simulate]
controller = "zero"
disturbance = "bump"
amplitude = 1.0
center = 1.0
width = 0.5
horizon = 8.0
step = 0.001
x0 = [0.5]
"#;

fn write_config(dir: &PathBuf, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&bin().arg("--help").output().unwrap()), 0);
    assert_eq!(code(&bin().arg("--version").output().unwrap()), 0);
}

#[test]
fn usage_errors_exit_three() {
    assert_eq!(code(&bin().output().unwrap()), 3);
    assert_eq!(code(&bin().args(["gamma-star", "--no-such-flag"]).output().unwrap()), 3);
}

#[test]
fn missing_plant_exits_three_without_artifacts() {
    let dir = fresh_dir("missing-plant");
    let out_dir = dir.join("out");
    let out = bin()
        .args(["gamma-star", "--output"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
    assert!(!out_dir.join("gamma_star.csv").exists());
    assert!(!out_dir.join("gamma_star.meta").exists());
}

#[test]
fn malformed_config_exits_three() {
    let dir = fresh_dir("bad-toml");
    let cfg = dir.join("config.toml");
    fs::write(&cfg, "[plant\na = oops").unwrap();
    let out = bin()
        .args(["gamma-star", "--config"])
        .arg(&cfg)
        .args(["--output"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
}

#[test]
fn unknown_config_key_exits_three() {
    let dir = fresh_dir("unknown-key");
    let cfg = dir.join("config.toml");
    fs::write(&cfg, "[plant]\na = [[-1.0]]\nb2 = [[1.0]]\nzz = 1\n").unwrap();
    let out = bin()
        .args(["gamma-star", "--config"])
        .arg(&cfg)
        .args(["--output"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("zz"), "stderr should name the bad key: {stderr}");
}

#[test]
fn infeasible_gamma_exits_one() {
    let dir = fresh_dir("infeasible");
    let cfg = write_config(&dir, BENCH_TOML);
    let out = bin()
        .args(["expand", "--config"])
        .arg(&cfg)
        .args(["--gamma", "2.0", "--output"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 1, "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unattainable_bisection_exits_one() {
    let dir = fresh_dir("unattainable");
    let cfg = write_config(&dir, BENCH_TOML);
    let out = bin()
        .args(["gamma-star", "--config"])
        .arg(&cfg)
        .args(["--gamma-max", "2.0", "--output"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn unwritable_output_exits_two() {
    let dir = fresh_dir("unwritable");
    let cfg = write_config(&dir, SCALAR_TOML);
    let out = bin()
        .args(["gamma-star", "--config"])
        .arg(&cfg)
        .args(["--output", "/proc/version/sub"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn output_env_var_selects_the_directory() {
    let dir = fresh_dir("env-output");
    let cfg = write_config(&dir, SCALAR_TOML);
    let out_dir = dir.join("from-env");
    let out = bin()
        .args(["gamma-star", "--config"])
        .arg(&cfg)
        .env("HINFVIB_OUTPUT", &out_dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("gamma_star.csv").exists());
}

#[test]
fn scalar_gamma_star_prints_the_analytic_value() {
    let dir = fresh_dir("scalar-stdout");
    let cfg = write_config(&dir, SCALAR_TOML);
    let out = bin()
        .args(["gamma-star", "--config"])
        .arg(&cfg)
        .args(["--output"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let first = stdout.lines().next().unwrap();
    let value: f64 = first.parse().unwrap();
    assert!((value - 0.5f64.sqrt()).abs() <= 1e-4, "gamma* line was {first}");

    // Lower precision must shorten the printed value accordingly.
    let out = bin()
        .args(["gamma-star", "--config"])
        .arg(&cfg)
        .args(["--digits", "3", "--output"])
        .arg(dir.join("out3"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().next().unwrap(), "0.707");
}

#[test]
fn paper_table_row_format_is_pinned() {
    let dir = fresh_dir("paper-table");
    let out_dir = dir.join("out");
    let out = bin().args(["paper-table", "--output"]).arg(&out_dir).output().unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("paper_table.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "k,gamma_fixture,gamma_pipeline");
    assert_eq!(lines.next().unwrap(), "0.000,3.704,3.704");
    let meta = fs::read_to_string(out_dir.join("paper_table.meta")).unwrap();
    assert!(meta.lines().any(|l| l.starts_with("flag_k_1.250: ")));

    // Comma-decimal rendering quotes every numeric field.
    let alt_dir = dir.join("alt");
    let out = bin()
        .args(["paper-table", "--paper-format", "--output"])
        .arg(&alt_dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(alt_dir.join("paper_table.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    assert_eq!(row, "\"0,000\",\"3,704\",\"3,704\"");
}

#[test]
fn identical_config_and_seed_reproduce_identical_bytes() {
    let dir = fresh_dir("reproducible");
    let body = format!(
        "{BENCH_TOML}\n[simulate]\ncontroller = \"series\"\ndisturbance = \"noise\"\nhorizon = 10.0\nstep = 0.001\n"
    );
    let cfg = dir.join("config.toml");
    fs::write(&cfg, body).unwrap();
    let run = |out_dir: &PathBuf| {
        let out = bin()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .args(["--seed", "42", "--output"])
            .arg(out_dir)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    };
    let first = dir.join("run1");
    let second = dir.join("run2");
    run(&first);
    run(&second);
    for name in ["simulate.csv", "simulate.meta"] {
        let a = fs::read(first.join(name)).unwrap();
        let b = fs::read(second.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn simulate_meta_matches_a_library_rerun() {
    let dir = fresh_dir("meta-roundtrip");
    let cfg = write_config(&dir, SCALAR_TOML);
    let out_dir = dir.join("out");
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--output"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let meta = fs::read_to_string(out_dir.join("simulate.meta")).unwrap();
    let field = |key: &str| -> f64 {
        meta.lines()
            .find_map(|l| l.strip_prefix(&format!("{key}: ")))
            .unwrap_or_else(|| panic!("{key} missing from sidecar"))
            .parse()
            .unwrap()
    };

    let spec = SystemSpec::new(
        Matrix::diag(&[-1.0]),
        Matrix::diag(&[1.0]),
        Matrix::diag(&[1.0]),
        Matrix::diag(&[1.0]),
        Matrix::zeros(1, 1),
        1.5,
        0.1,
    )
    .unwrap();
    let plan = SimulationPlan {
        controller: Controller::Zero,
        disturbance: WSignal::Bump { center: 1.0, width: 0.5, amplitude: 1.0 },
        x0: vec![0.5],
        horizon: 8.0,
        step: 1e-3,
        sample_stride: 0,
    };
    let run = simulate(&spec, &plan).unwrap();
    for (key, want) in [
        ("j_value", run.j_value),
        ("z_energy", run.z_energy),
        ("w_energy", run.w_energy),
        ("gain_estimate", run.gain_estimate),
    ] {
        let got = field(key);
        assert!(
            (got - want).abs() <= 1e-5 * want.abs().max(1e-12),
            "{key}: sidecar {got} vs library {want}"
        );
    }
}
