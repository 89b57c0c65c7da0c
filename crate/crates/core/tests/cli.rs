use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dualmink::report::{read_field, ReportRow, CSV_COLUMNS};
use serde_json::Value;

fn dualmink(args: &[&str], cfg: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualmink"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn rows(path: &Path) -> Vec<ReportRow> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
    lines.map(|l| ReportRow::parse_csv_line(l).unwrap()).collect()
}

const LADDER: &str = r#"{"grid": {"n": 3, "resolution": 2}, "p": 2, "q": 1,
    "f": {"preset": "equator2"}, "solver": {"enforce_even": true}}"#;

#[test]
fn ladder_writes_reports_and_verify_recomputes_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "ladder.json", LADDER);
    let out = dir.path().join("run");
    let o = dualmink(&["ladder"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = rows(&out.join("report.csv"));
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r.wall_time_s == 0.0));

    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["status"], "ok");
    // defaults are materialized
    assert_eq!(summary["config"]["solver"]["max_iters"], 50);
    assert_eq!(summary["config"]["ladder"]["eps_min"], 1e-5);
    assert_eq!(summary["levels"].as_array().unwrap().len(), 9);
    assert_eq!(summary["cauchy"].as_array().unwrap().len(), 8);

    let text = fs::read_to_string(out.join("solution.txt")).unwrap();
    let stored = read_field(&text, None).unwrap();
    assert_eq!(stored.eps, 1e-5);
    assert!(fs::read_to_string(out.join("mesh.obj")).unwrap().starts_with("v "));

    let vout = dir.path().join("verify");
    let sol = out.join("solution.txt");
    let o = dualmink(&["verify", sol.to_str().unwrap()], &cfg, &vout);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&vout.join("verify.json"));
    let row: ReportRow = serde_json::from_value(v["row"].clone()).unwrap();
    let last = rows.last().unwrap();
    let pairs = [
        (row.plain_sup, last.plain_sup),
        (row.plain_l2, last.plain_l2),
        (row.log_sup, last.log_sup),
        (row.log_l2, last.log_l2),
        (row.min_h, last.min_h),
        (row.c0_lower_bound, last.c0_lower_bound),
        (row.max_h, last.max_h),
        (row.max_grad, last.max_grad),
        (row.max_trace_b, last.max_trace_b),
        (row.psd_margin, last.psd_margin),
        (row.dual_rel_gap, last.dual_rel_gap),
    ];
    for (a, b) in pairs {
        assert!((a - b).abs() <= 1e-14 * b.abs().max(1e-300), "{a} vs {b}");
    }
    assert_eq!(v["convex"], true);
}

#[test]
fn export_mesh_and_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "solve.json",
        r#"{"mode": "solve", "grid": {"n": 3, "resolution": 1}, "p": 3, "q": 1, "f": {"expr": "1 + 0.5 * z^2"}}"#,
    );
    let out = dir.path().join("solve");
    assert!(dualmink(&["solve"], &cfg, &out).status.success());
    assert_eq!(rows(&out.join("report.csv")).len(), 1);

    let cfg2 = config(
        dir.path(),
        "mesh.json",
        r#"{"grid": {"n": 3, "resolution": 1}, "p": 3, "q": 1, "f": {"preset": "constant:1"}}"#,
    );
    let mout = dir.path().join("mesh");
    let sol = out.join("solution.txt");
    let o = dualmink(&["export-mesh", sol.to_str().unwrap()], &cfg2, &mout);
    assert!(o.status.success());
    let obj = fs::read_to_string(mout.join("mesh.obj")).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 42);
    assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 80);

    let cfg3 = config(
        dir.path(),
        "cond.json",
        r#"{"grid": {"n": 3, "resolution": 3}, "p": 2, "q": 1, "f": {"preset": "equator2"}}"#,
    );
    let cout = dir.path().join("cond");
    assert!(dualmink(&["check-conditions"], &cfg3, &cout).status.success());
    let c = json(&cout.join("conditions.json"));
    let levels = c["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 2);
    assert_eq!(levels[1]["grid"]["resolution"], 4);
    let a_lap = levels[1]["condition_i"]["a_lap"].as_f64().unwrap();
    assert!((a_lap - 4.0).abs() < 1e-3);
}

#[test]
fn oracle_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "oracle.json",
        r#"{"grid": {"n": 2, "resolution": 64}, "p": 3, "q": 1, "f": {"expr": "1 + 0.5 * (x^2 - y^2)"}, "oracle": {"size": 64}}"#,
    );
    let out = dir.path().join("o");
    assert!(dualmink(&["oracle"], &cfg, &out).status.success());
    let csv = fs::read_to_string(out.join("oracle.csv")).unwrap();
    assert_eq!(csv.lines().count(), 65);
    let s = json(&out.join("summary.json"));
    assert!((s["min_h"].as_f64().unwrap() - 0.93872924125).abs() < 1e-10);
    assert_eq!(s["c0_lower_ok"], true);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let code = |args: &[&str], json: &str| {
        let cfg = config(dir.path(), "c.json", json);
        dualmink(args, &cfg, &out).status.code().unwrap()
    };
    // negative density, p = q, unknown field, unknown preset, mode mismatch, q >= p without the flag
    let bad = [
        r#"{"grid": {"n": 3, "resolution": 1}, "p": 2, "q": 1, "f": {"expr": "z"}}"#,
        r#"{"grid": {"n": 3, "resolution": 1}, "p": 1, "q": 1, "f": {"preset": "equator2"}}"#,
        r#"{"grid": {"n": 3, "resolution": 1}, "p": 2, "q": 1, "f": {"preset": "equator2"}, "extra": 1}"#,
        r#"{"grid": {"n": 3, "resolution": 1}, "p": 2, "q": 1, "f": {"preset": "nope"}}"#,
        r#"{"mode": "solve", "grid": {"n": 3, "resolution": 1}, "p": 2, "q": 1, "f": {"preset": "equator2"}}"#,
        r#"{"grid": {"n": 3, "resolution": 1}, "p": 1, "q": 2, "f": {"preset": "bump:1"}}"#,
    ];
    for j in bad {
        assert_eq!(code(&["ladder"], j), 2, "{j}");
    }
    // zero density cannot be solved directly
    assert_eq!(
        code(&["solve"], r#"{"grid": {"n": 3, "resolution": 1}, "p": 2, "q": 1, "f": {"preset": "equator2"}}"#),
        2
    );
    // non-convergence still writes the partial report
    let nc = r#"{"grid": {"n": 3, "resolution": 2}, "p": 2, "q": 1, "f": {"preset": "equator2"}, "solver": {"max_iters": 1}}"#;
    assert_eq!(code(&["ladder"], nc), 3);
    assert_eq!(json(&out.join("summary.json"))["status"], "non_convergence");
    assert!(out.join("report.csv").exists());

    let cfg = config(dir.path(), "ok.json", r#"{"grid": {"n": 3, "resolution": 1}, "p": 2, "q": 1, "f": {"preset": "bump:1"}}"#);
    let missing = dualmink(&["verify", "/nonexistent/solution.txt"], &cfg, &out);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn experimental_flag_admits_q_above_p() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "c.json",
        r#"{"grid": {"n": 3, "resolution": 1}, "p": 0.5, "q": 1, "f": {"preset": "bump:0.5"}}"#,
    );
    let out = dir.path().join("x");
    let o = Command::new(env!("CARGO_BIN_EXE_dualmink"))
        .args(["solve", "--experimental", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&out.join("summary.json"))["config"]["experimental"], true);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "ladder.json", LADDER);
    let out = dir.path().join("run");
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let o = Command::new(env!("CARGO_BIN_EXE_dualmink"))
            .env("DUALMINK_THREADS", threads)
            .args(["ladder", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(o.status.success());
        outputs.push((
            fs::read(out.join("report.csv")).unwrap(),
            fs::read(out.join("summary.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}
