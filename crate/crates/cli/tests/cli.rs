use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use toepgrad::metrics::TRIAL_CSV_HEADER;
use toepgrad::scenarios::batch_file;
use toepgrad::CaratheodoryModel;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toepgrad"))
        .args(args)
        .current_dir(dir)
        .env_remove("TOEPGRAD_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn gen_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "gen",
            "--scenario",
            "ar3",
            "--p",
            "6",
            "--m",
            "30",
            "--seed",
            "4",
            "--out",
            "x.bin",
        ],
    );
    let batch = batch_file::read(&d.join("x.bin")).unwrap();
    assert_eq!((batch.p, batch.m(), batch.seed), (6, 30, 4));

    let stdout = ok(
        d,
        &[
            "estimate",
            "--input",
            "x.bin",
            "--algo",
            "gd2",
            "--k-factor",
            "3",
            "--max-iters",
            "500",
            "--out",
            "m.json",
            "--trace",
            "t.csv",
        ],
    );
    assert!(stdout.starts_with("gd2: K=18"), "{stdout}");
    let model = CaratheodoryModel::from_json(&fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    assert_eq!((model.p(), model.k()), (6, 18));
    let trace = fs::read_to_string(d.join("t.csv")).unwrap();
    assert!(trace.starts_with("iter,nll,"));
    assert!(trace.lines().count() > 1);
}

#[test]
fn crb_reports_bound_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(
        dir.path(),
        &["crb", "--scenario", "atom", "--m", "200", "--out", "crb.csv"],
    );
    let bound: f64 = stdout
        .lines()
        .next()
        .unwrap()
        .split_whitespace()
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((bound - 106.5).abs() < 0.5, "{bound}");
    let table = fs::read_to_string(dir.path().join("crb.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "index,parameter,variance");
    assert_eq!(lines.len(), 1 + 29);
    assert!(lines[1].starts_with("0,c0,"));
    assert!(lines[2].starts_with("1,re_c1,"));
    assert!(lines[3].starts_with("2,im_c1,"));
}

#[test]
fn bench_from_config_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("cfg.json"),
        r#"{"scenario":"ar3","p":4,"m_values":[8,16],"trials":2,"methods":["gd2","gda"],
            "k_factors":[1,2],"output":"b.csv","timing":false,"optimizer":{"max_iters":200}}"#,
    )
    .unwrap();
    ok(d, &["bench", "--config", "cfg.json"]);
    let first = fs::read_to_string(d.join("b.csv")).unwrap();
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines[0], TRIAL_CSV_HEADER);
    assert_eq!(lines.len(), 1 + 2 * 2 * 2 * 2);
    let summary = fs::read_to_string(d.join("b.summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 2 * 2);

    // Drop the last rows and rerun: the missing trials are recomputed.
    let truncated: String = lines[..6].iter().map(|l| format!("{l}\n")).collect();
    fs::write(d.join("b.csv"), truncated).unwrap();
    let stdout = ok(d, &["bench", "--config", "cfg.json"]);
    assert!(stdout.contains("resumed 5 existing rows"), "{stdout}");
    assert_eq!(fs::read_to_string(d.join("b.csv")).unwrap(), first);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("cfg.json"),
        r#"{"scenario":"ar3","p":4,"m_values":[8],"trials":1,"output":"a.csv"}"#,
    )
    .unwrap();
    ok(
        d,
        &[
            "bench",
            "--config",
            "cfg.json",
            "--methods",
            "gda",
            "--k-factors",
            "1",
            "--out",
            "b.csv",
            "--no-timing",
        ],
    );
    assert!(!d.join("a.csv").exists());
    let text = fs::read_to_string(d.join("b.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("ar3,gda,1,8,0,"));
}

#[test]
fn speed_writes_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let stdout = ok(
        d,
        &[
            "speed",
            "--scenario",
            "ar3",
            "--p",
            "4",
            "--m",
            "12",
            "--trials",
            "2",
            "--max-iters",
            "200",
            "--out",
            "s.csv",
        ],
    );
    assert!(stdout.contains("median gd1/gd2 ratios"));
    let pairs = fs::read_to_string(d.join("s.pairs.csv")).unwrap();
    assert_eq!(pairs.lines().count(), 3);
    assert!(pairs.lines().skip(1).all(|l| l.ends_with(",true")));
    assert_eq!(fs::read_to_string(d.join("s.runs.csv")).unwrap().lines().count(), 5);
}

#[test]
fn lipschitz_scan_csv() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(
        dir.path(),
        &["lipschitz-scan", "--n-trials", "10", "--p-set", "4,6", "--out", "l.csv"],
    );
    assert!(stdout.starts_with("10 configs"));
    let text = fs::read_to_string(dir.path().join("l.csv")).unwrap();
    assert_eq!(text.lines().count(), 11);
}

#[test]
fn configuration_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.json"), r#"{"trials":2,"bogus":1}"#).unwrap();
    let cases: [&[&str]; 5] = [
        &["bench", "--config", "bad.json", "--out", "x.csv"],
        &["bench", "--scenario", "ar3", "--trials", "1"],
        &["bench", "--out", "x.csv", "--trials", "0"],
        &["gen", "--m", "0", "--out", "x.bin"],
        &["crb", "--scenario", "ar3", "--p", "0", "--m", "10"],
    ];
    for args in cases {
        let out = run(d, args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("configuration error"), "{args:?}: {err}");
    }
}

#[test]
fn bad_optimizer_settings_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--m", "10", "--out", "x.bin"]);
    for flag in ["--alpha=1.5", "--beta=0", "--eta-w0=-1"] {
        let args = ["estimate", "--input", "x.bin", "--out", "m.json", flag];
        let out = run(d, &args);
        assert_eq!(out.status.code(), Some(1), "{flag}");
    }
}

#[test]
fn missing_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["estimate", "--input", "nope.bin", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.bin"));
}
