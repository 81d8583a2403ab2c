use std::path::Path;
use std::process::{Command, Output};

use lru_core::init::glorot_dense;
use lru_core::rng;
use serde_json::Value;

fn lru(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lru"))
        .args(args)
        .arg("--output-dir")
        .arg(out)
        .env_remove("LRU_THREADS")
        .output()
        .expect("spawn lru")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn summary(dir: &Path, stem: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json"))).unwrap()).unwrap()
}

fn csv_header(dir: &Path, stem: &str) -> String {
    let text = std::fs::read_to_string(dir.join(format!("{stem}.csv"))).unwrap();
    text.lines().next().unwrap().to_string()
}

#[test]
fn gain_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = lru(
        &[
            "gain", "--r-min", "0.9", "--r-max", "0.99", "--n", "64", "--len", "2000", "--trials", "3", "--seed", "4",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_header(dir.path(), "gain-4"), "run,gain_mc,gain_formula");
    let s = summary(dir.path(), "gain-4");
    assert_eq!(s["seed"], 4);
    assert_eq!(s["config"]["ring"]["r_max"], 0.99);
    assert_eq!(s["config"]["task"]["params"]["trials"], 3);
    assert_eq!(s["config"]["task"]["params"]["mode"], "white_noise");
    assert_eq!(s["rows"], 3);
    let f = s["metrics"]["gain_formula"].as_f64().unwrap();
    assert!((f - 13.2646).abs() < 1e-3);
}

#[test]
fn scan_check_exit_code_tracks_agreement() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&lru(&["scan-check", "--len", "257"], dir.path())), 0);
    let s = summary(dir.path(), "scan-check-0");
    assert!(s["metrics"]["max_rel_dev"].as_f64().unwrap() < 1e-10);
    let impossible = lru(
        &["scan-check", "--len", "257", "--task.params.tolerance", "-1"],
        dir.path(),
    );
    assert_eq!(code(&impossible), 2);
}

#[test]
fn dense_one_by_one_radius_is_the_entry() {
    let dir = tempfile::tempdir().unwrap();
    let o = lru(&["spectrum", "--dense", "--n", "1", "--seed", "9"], dir.path());
    assert_eq!(code(&o), 0);
    let a = glorot_dense(1, &mut rng::root(9)).unwrap();
    let r = summary(dir.path(), "spectrum-9")["metrics"]["gelfand_radius"]
        .as_f64()
        .unwrap();
    assert!((r - a.data[0].abs()).abs() < 1e-12);
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&lru(&["fourier"], p)), 1);
    assert_eq!(code(&lru(&["gain", "--config", "/nonexistent/run.json"], p)), 1);
    assert_eq!(code(&lru(&["gain", "--ring.radius", "0.5"], p)), 1);
    assert_eq!(code(&lru(&["gain", "--r-min", "0.9", "--r-max", "0.5"], p)), 1);
    assert_eq!(code(&lru(&["train-powers", "--n", "3"], p)), 1);
    let bad = p.join("bad.json");
    std::fs::write(&bad, r#"{"ring": {"r_min": 0.1}, "extra": 1}"#).unwrap();
    let o = lru(&["gain", "--config", bad.to_str().unwrap()], p);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("extra"));
}

#[test]
fn help_exits_zero() {
    let o = Command::new(env!("CARGO_BIN_EXE_lru")).arg("--help").output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("scan-check"));
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let args = [
        "gain",
        "--r-min",
        "0.5",
        "--r-max",
        "0.9",
        "--n",
        "32",
        "--len",
        "500",
        "--trials",
        "2",
        "--threads",
        "1",
    ];
    assert_eq!(code(&lru(&args, &first)), 0);
    let echo = summary(&first, "gain-0")["config"].clone();
    let cfg = dir.path().join("echo.json");
    std::fs::write(&cfg, serde_json::to_string(&echo).unwrap()).unwrap();
    assert_eq!(code(&lru(&["gain", "--config", cfg.to_str().unwrap()], &second)), 0);
    let read = |d: &Path| std::fs::read_to_string(d.join("gain-0.csv")).unwrap();
    assert_eq!(read(&first), read(&second));
}

#[test]
fn file_then_flags_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 5, "ring": {"r_min": 0.2, "r_max": 0.6}, "task": {"name": "spectrum", "params": {"n": 50}}}"#,
    )
    .unwrap();
    let o = lru(
        &["spectrum", "--config", cfg.to_str().unwrap(), "--ring.r_max", "0.7"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(dir.path(), "spectrum-5");
    assert_eq!(s["config"]["ring"]["r_min"], 0.2);
    assert_eq!(s["config"]["ring"]["r_max"], 0.7);
    assert_eq!(s["rows"], 50);
    assert!(s["metrics"]["max_modulus"].as_f64().unwrap() <= 0.7);

    let wrong = lru(&["gain", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&wrong), 1);
}

#[test]
fn threads_env_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let run = |env: &str| {
        Command::new(env!("CARGO_BIN_EXE_lru"))
            .args(["zoh-compare", "--output-dir"])
            .arg(dir.path())
            .env("LRU_THREADS", env)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("2")), 0);
    assert_eq!(summary(dir.path(), "zoh-compare-0")["config"]["threads"], 2);
    assert_eq!(code(&run("zero")), 1);
}

#[test]
fn bench_scan_length_one_completes() {
    let dir = tempfile::tempdir().unwrap();
    let o = lru(
        &["bench-scan", "--len", "1", "--n", "4", "--task.params.threads", "[1]"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_header(dir.path(), "bench-scan-0"), "len,threads,mode,median_ns");
    assert_eq!(summary(dir.path(), "bench-scan-0")["rows"], 2);
}

#[test]
fn small_experiments_run() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&lru(&["leakage"], p)), 0);
    let s = summary(p, "leakage-0");
    assert!(s["metrics"]["offband_ratio_after"].as_f64().unwrap() > 0.05);
    assert!(s["metrics"]["identity_max_rel_err"].as_f64().unwrap() < 1e-6);

    assert_eq!(code(&lru(&["impulse", "--len", "512"], p)), 0);
    assert_eq!(csv_header(p, "impulse-0"), "k,channel_0,channel_1,channel_2");

    assert_eq!(
        code(&lru(
            &[
                "grad-check",
                "--model.depth",
                "1",
                "--model.h",
                "4",
                "--n",
                "4",
                "--len",
                "8"
            ],
            p
        )),
        0
    );
    assert!(summary(p, "grad-check-0")["metrics"]["max_rel_err"].as_f64().unwrap() < 1e-5);

    let conv = [
        "train-conv",
        "--n",
        "4",
        "--len",
        "20",
        "--task.params.steps",
        "10",
        "--task.params.lr_grid",
        "[1e-3]",
        "--task.params.seeds",
        "[0]",
    ];
    assert_eq!(code(&lru(&conv, p)), 0);
    assert_eq!(summary(p, "train-conv-0")["rows"], 2);

    assert_eq!(code(&lru(&["train-powers", "--task.params.seeds", "[0]"], p)), 0);
    assert_eq!(summary(p, "train-powers-0")["rows"], 3);
}
