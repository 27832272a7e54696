//! End-to-end tests of the `cohrx` binary.

use std::path::Path;
use std::process::{Command, Output};

fn cohrx(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cohrx")).args(args).current_dir(dir).env_remove("COHRX_OUT_DIR").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

/// Short closed-loop link used by most tests.
const SHORT: &str = "scenario = \"fig7-closed\"\nduration_symbols = 20000\n";

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn help_and_version_exit_zero() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&cohrx(&["--help"], d.path())), 0);
    assert_eq!(code(&cohrx(&["--version"], d.path())), 0);
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&cohrx(&["no-such-command"], d.path())), 1);
    assert_eq!(code(&cohrx(&["run-link", "--scenario", "fig9"], d.path())), 1);
    let bad = write(d.path(), "bad.toml", "[laser]\nlinewdth = 1.0\n");
    let o = cohrx(&["run-link", "--config", &bad], d.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("linewdth"));
    assert_eq!(code(&cohrx(&["run-link", "--emit", "csv,png"], d.path())), 1);
}

#[test]
fn frequency_offset_in_closed_loop_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "f.toml", &format!("{SHORT}[laser]\noffset = 1e6\n"));
    let o = cohrx(&["run-link", "--config", &cfg, "--out", "o"], d.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("SSB-mixer"));
}

#[test]
fn run_link_writes_artifacts_and_locks() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "short.toml", SHORT);
    let o = cohrx(&["run-link", "--config", &cfg, "--out", "o"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("status=locked"));
    for f in ["constellation.csv", "constellation.svg", "eye.csv", "eye.svg", "traces.csv", "vctrl.svg", "vpd.svg", "metrics.json"] {
        let p = d.path().join("o").join(format!("short_{f}"));
        let text = std::fs::read_to_string(&p).unwrap_or_else(|_| panic!("missing {f}"));
        assert!(text.contains("config_sha256"), "{f} lacks provenance");
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("o/short_metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["metrics"]["status"], "locked");
    assert_eq!(metrics["config"]["duration_symbols"], 20000);
    assert!(metrics["config"]["loop"]["kp"].as_f64().unwrap() > 0.0);
}

#[test]
fn lock_failure_exits_two() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "weak.toml", &format!("{SHORT}[design]\nauto = false\n[loop]\nkp = 5.0\nki = 0.0\n"));
    let o = cohrx(&["run-link", "--config", &cfg, "--out", "o"], d.path());
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    // Artifacts are still written for diagnosis.
    assert!(d.path().join("o/weak_metrics.json").exists());
}

#[test]
fn oscillating_loop_exits_three() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "hot.toml",
        &format!("{SHORT}[design]\nauto = false\n[loop]\nkp = 1e6\nki = 3e12\nauto_polarity = false\n"),
    );
    let o = cohrx(&["run-link", "--config", &cfg, "--out", "o", "--emit", "json"], d.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn open_loop_completes_and_reports_rotation() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "open.toml", "scenario = \"fig7-open\"\n");
    let o = cohrx(&["run-link", "--config", &cfg, "--out", "o", "--emit", "json"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("o/open_metrics.json")).unwrap()).unwrap();
    assert_eq!(m["metrics"]["status"], "open-loop");
    assert!(m["metrics"]["circular_variance"].as_f64().unwrap() > 0.5);
}

#[test]
fn emit_selects_formats_and_env_sets_directory() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cohrx"))
        .args(["characterize-ps", "--emit", "json"])
        .current_dir(d.path())
        .env("COHRX_OUT_DIR", "env-out")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let names: Vec<String> =
        std::fs::read_dir(d.path().join("env-out")).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["fig4a_ps.json"]);
}

#[test]
fn outputs_table_in_config_selects_formats() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "ps.toml", "scenario = \"fig4a\"\n[outputs]\ncsv = true\njson = false\nsvg = false\n");
    assert_eq!(code(&cohrx(&["characterize-ps", "--config", &cfg, "--out", "o"], d.path())), 0);
    let names: Vec<String> =
        std::fs::read_dir(d.path().join("o")).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["ps_ps.csv"]);
}

#[test]
fn characterize_ps_reports_the_null() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&cohrx(&["characterize-ps", "--out", "o"], d.path())), 0);
    let rows = csv_rows(&d.path().join("o/fig4a_ps.csv"));
    assert_eq!(rows.len(), 1201);
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), 1.0);
    let (v, p): (f64, f64) = rows
        .iter()
        .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap()))
        .min_by(|a: &(f64, f64), b| a.1.total_cmp(&b.1))
        .unwrap();
    assert!((v - 6.0).abs() < 0.05 && p < 1e-4);
}

#[test]
fn sweep_of_empty_list_is_empty() {
    let d = tempfile::tempdir().unwrap();
    let o = cohrx(&["sweep", "--param", "laser.linewidth", "--values", "", "--out", "o"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(csv_rows(&d.path().join("o/fig7-closed_sweep.csv")).is_empty());
}

#[test]
fn sweep_rejects_unresolvable_path() {
    let d = tempfile::tempdir().unwrap();
    let o = cohrx(&["sweep", "--param", "laser.colour", "--values", "1", "--out", "o"], d.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn seed_sweep_varies_metrics_with_identical_config() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "short.toml", SHORT);
    let o = cohrx(&["sweep", "--config", &cfg, "--param", "seed", "--values", "1,2,3,4,5", "--out", "o"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&d.path().join("o/short_sweep.csv"));
    assert_eq!(rows.len(), 5);
    let evm: Vec<&str> = rows.iter().map(|r| r[2].as_str()).collect();
    assert!(evm.windows(2).any(|w| w[0] != w[1]), "{evm:?}");
    assert!(rows.iter().all(|r| r[10] == rows[0][10]));
    assert_eq!(rows.iter().map(|r| r[9].as_str()).collect::<Vec<_>>(), ["1", "2", "3", "4", "5"]);
}

#[test]
fn linewidth_sweep_does_not_reduce_residual() {
    // A path mismatch decorrelates the signal and LO phase noise, so the
    // linewidth reaches the loop.
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "lw.toml", &format!("{SHORT}[channel]\npath_mismatch = 2.0\n"));
    let o = cohrx(&["sweep", "--config", &cfg, "--param", "laser.linewidth", "--values", "0,10e3,100e3", "--out", "o"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&d.path().join("o/lw_sweep.csv"));
    let residual: Vec<f64> = rows.iter().map(|r| r[6].parse().unwrap()).collect();
    assert!(residual.windows(2).all(|w| w[1] >= w[0]) && residual[2] > residual[0], "{residual:?}");
}

#[test]
fn dumped_config_loads_back_unchanged() {
    let d = tempfile::tempdir().unwrap();
    let a = cohrx(&["dump-config", "--scenario", "fig7-equalized", "--seed", "7"], d.path());
    assert_eq!(code(&a), 0);
    let text = String::from_utf8(a.stdout).unwrap();
    let path = write(d.path(), "dump.toml", &text);
    let b = cohrx(&["dump-config", "--config", &path], d.path());
    assert_eq!(code(&b), 0, "{}", String::from_utf8_lossy(&b.stderr));
    let body = |s: &str| s.lines().skip(1).map(str::to_owned).collect::<Vec<_>>();
    assert_eq!(body(&text), body(&String::from_utf8(b.stdout).unwrap()));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "short.toml", SHORT);
    for out in ["a", "b"] {
        assert_eq!(code(&cohrx(&["run-link", "--config", &cfg, "--seed", "9", "--out", out], d.path())), 0);
    }
    for f in ["constellation.csv", "eye.csv", "traces.csv", "metrics.json", "eye.svg"] {
        let name = format!("short_{f}");
        assert_eq!(std::fs::read(d.path().join("a").join(&name)).unwrap(), std::fs::read(d.path().join("b").join(&name)).unwrap(), "{name}");
    }
}

#[test]
fn list_scenarios_names_all_builtins() {
    let d = tempfile::tempdir().unwrap();
    let o = cohrx(&["list-scenarios"], d.path());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["fig4a", "fig4b", "fig6", "fig7-open", "fig7-closed", "fig7-equalized"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
    }
}
