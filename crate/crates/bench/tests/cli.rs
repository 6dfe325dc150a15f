//! The `hiermap` binary end to end: exit codes, artifacts and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hiermap_bench::commands::read_solve_report;
use hiermap_bench::exit;
use hiermap_bench::report::{trials_from_csv, TRIAL_COLUMNS};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hiermap"))
        .args(args)
        .env_remove("HIERMAP_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL_SWEEP: &str = r#"
[sweep]
n = [32, 48, 64, 96]
d = 16
eta = [1e-4]
trials = 3
seed = 11
rsc_samples = 10

[model]
variant = "coordinate"
lambda = "rule"

[truth]
kind = "hard-sparse"
s = 2
amplitude = 2.0
"#;

#[test]
fn solve_converges_and_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = configs().join("solve.toml");
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), exit::SUCCESS, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_solve_report(&out).unwrap();
    assert!(report.converged);
    assert!(report.grad_inf_norm <= 1e-8);
    assert!(report.rho_hat.unwrap() < 1.0);
    for f in ["solution.csv", "theta.csv", "trace.csv", "problem"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
}

#[test]
fn solve_is_reproducible_and_seed_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("solve.toml");
    let cfg = cfg.to_str().unwrap();
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    for (dir, seed) in dirs.iter().zip(["7", "7", "8"]) {
        let o = run(&["solve", "--config", cfg, "--seed", seed, "--out", dir.to_str().unwrap()]);
        assert_eq!(code(&o), exit::SUCCESS);
    }
    let read = |d: &PathBuf| std::fs::read_to_string(d.join("solution.csv")).unwrap();
    assert_eq!(read(&dirs[0]), read(&dirs[1]));
    assert_ne!(read(&dirs[0]), read(&dirs[2]));
    let report = |d: &PathBuf| read_solve_report(d).unwrap().without_timing();
    assert_eq!(report(&dirs[0]), report(&dirs[1]));
    assert_eq!(report(&dirs[2]).seed, Some(8));
}

#[test]
fn configuration_errors_exit_with_one_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let base = std::fs::read_to_string(configs().join("solve.toml")).unwrap();
    let cases = [
        ("eta = 1e-4", "eta = 0.7", "model.eta"),
        ("seed = 7", "seed = 7\nsigma_typo = 1", "problem.sigma_typo"),
        ("n = 200", "n = -3", "problem.n"),
    ];
    for (i, (from, to, key)) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("bad{i}.toml"), &base.replacen(from, to, 1));
        let o = run(&["solve", "--config", &cfg, "--out", tmp.path().join("x").to_str().unwrap()]);
        assert_eq!(code(&o), exit::CONFIG, "case {key}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(key), "case {key}: {err}");
    }
    assert_eq!(code(&run(&["solve"])), exit::CONFIG);
    assert_eq!(code(&run(&["check", "--suite", "nonsense"])), exit::CONFIG);
    assert_eq!(code(&run(&["solve", "--config", "/nonexistent/file.toml"])), exit::CONFIG);
}

#[test]
fn check_suites_pass_and_write_json() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "check.toml", "[check]\ncases = 50\nseed = 3\n");
    for suite in ["sandwich", "duality", "theta", "gradient", "convexity", "frame"] {
        let o = run(&["check", "--suite", suite, "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
        assert_eq!(code(&o), exit::SUCCESS, "suite {suite}: {}", String::from_utf8_lossy(&o.stdout));
        assert!(tmp.path().join(format!("check_{suite}.json")).exists());
    }
}

#[test]
fn sweep_writes_reports_independent_of_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sweep.toml", SMALL_SWEEP);
    let mut all = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(format!("t{threads}"));
        let o = run(&["sweep", "--config", &cfg, "--threads", threads, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), exit::SUCCESS, "{}", String::from_utf8_lossy(&o.stderr));
        let csv = std::fs::read_to_string(out.join("trials.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), TRIAL_COLUMNS.join(","));
        let trials = trials_from_csv(&csv).unwrap();
        assert_eq!(trials.len(), 12);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        assert!(json["fits"]["slope"].as_f64().unwrap() < 0.0);
        assert!(out.join("plot_data.csv").exists());
        all.push(trials.iter().map(|t| t.without_timing()).collect::<Vec<_>>());
    }
    assert_eq!(all[0], all[1]);
}

#[test]
fn sweep_rejects_a_fixed_model_eta() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL_SWEEP.replace("lambda = \"rule\"", "lambda = \"rule\"\neta = 0.1");
    let cfg = write_config(tmp.path(), "sweep.toml", &text);
    let o = run(&["sweep", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), exit::CONFIG);
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.eta"));
}

#[test]
fn rates_reports_certified_trials() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("rates.toml"))
        .unwrap()
        .replace("n = 100000", "n = 20000")
        .replace("trials = 10", "trials = 2");
    let cfg = write_config(tmp.path(), "rates.toml", &text);
    let out = tmp.path().join("rates");
    let o = run(&["rates", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), exit::SUCCESS, "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("rates.json")).unwrap()).unwrap();
    assert_eq!(json["violations"].as_array().unwrap().len(), 0);
    assert_eq!(trials_from_csv(&std::fs::read_to_string(out.join("trials.csv")).unwrap()).unwrap().len(), 2);
}
