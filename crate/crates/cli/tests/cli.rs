use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bornforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bornforge"))
        .args(args)
        .env_remove("BORNFORGE_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn train_into(dir: &Path, threads: &str) -> Output {
    let out = dir.to_str().unwrap();
    bornforge(&[
        "train",
        "--n",
        "2",
        "--cost",
        "mmd",
        "--epochs",
        "5",
        "--seed",
        "3",
        "--threads",
        threads,
        "--out",
        out,
    ])
}

#[test]
fn train_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_into(dir.path(), "2");
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["config.json", "record.json", "trace.csv", "dataset.txt"] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("epoch,cost_train,cost_test,tv"));
    assert_eq!(lines.count(), 6);
}

#[test]
fn trace_is_identical_across_runs_and_thread_counts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(code(&train_into(a.path(), "1")), 0);
    assert_eq!(code(&train_into(b.path(), "4")), 0);
    for name in ["trace.csv", "dataset.txt"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn saved_config_reproduces_the_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(code(&train_into(a.path(), "2")), 0);
    let cfg = a.path().join("config.json");
    let out = bornforge(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        b.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read(a.path().join("trace.csv")).unwrap(),
        fs::read(b.path().join("trace.csv")).unwrap()
    );
}

#[test]
fn compile_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = bornforge(&[
        "compile",
        "--n",
        "2",
        "--cost",
        "sinkhorn",
        "--epochs",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("compile.json").is_file());
    assert!(!fs::read_to_string(dir.path().join("dataset.txt"))
        .unwrap()
        .is_empty());
}

#[test]
fn bench_and_oracle_check_pass() {
    let out = bornforge(&["bench", "--n", "2", "--pairs", "20", "--seed", "7"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let out = bornforge(&["oracle-check", "--n", "2", "--seed", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn failures_map_to_distinct_exit_codes() {
    assert_eq!(code(&bornforge(&["train", "--no-such-flag"])), 2);
    assert_eq!(
        code(&bornforge(&["train", "--n", "30", "--cost", "mmd"])),
        3
    );
    assert_eq!(code(&bornforge(&["oracle-check", "--n", "9"])), 4);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"n": 2, "cost": "mmd", "epochs": "many"}"#).unwrap();
    let out = bornforge(&["train", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochs"));

    let missing = dir.path().join("absent.json");
    assert_eq!(
        code(&bornforge(&[
            "train",
            "--config",
            missing.to_str().unwrap()
        ])),
        5
    );
}
