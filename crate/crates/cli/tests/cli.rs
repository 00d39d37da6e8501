//! The `smoothcert` binary end to end: exit codes, outputs and determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use smoothcert::certify::ThreatModel;
use smoothcert::pipeline::{load_samples, merge_records, persist_samples, CSV_COLUMNS};

const LINEAR_RUN: &str = r#"
sigma = 0.5
alpha = 0.01
samples = 20000
seed = 7
threats = ["l2", "l1"]

[classifier]
kind = "linear"
w = [1.0, 0.0, 0.0, 0.0]
b = 1.0

[[points]]
id = "a"
x = [-2.0, 0.0, 0.0, 0.0]
label = 1
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_smoothcert"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect()
}

#[test]
fn certify_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", LINEAR_RUN);
    let out = dir.path().join("out");
    let o = run(&["certify", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = fs::read_to_string(out.join("certificates.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("# smoothcert certificates v1"));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header, CSV_COLUMNS);
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 1);
    let cells: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(cells[0], "a");
    assert_eq!(cells[1], "1");
    assert_eq!(cells[2], "true");
    assert!(out.join("run.json").exists());
}

#[test]
fn certify_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", LINEAR_RUN);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(
        run(&[
            "certify",
            "--config",
            s(&cfg),
            "--out",
            s(&a),
            "--jobs",
            "1"
        ])
        .status
        .code(),
        Some(0)
    );
    assert_eq!(
        run(&[
            "certify",
            "--config",
            s(&cfg),
            "--out",
            s(&b),
            "--jobs",
            "3"
        ])
        .status
        .code(),
        Some(0)
    );
    for f in ["certificates.csv", "run.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    // A different seed changes the sample and hence the report.
    let c = dir.path().join("c");
    assert_eq!(
        run(&[
            "certify",
            "--config",
            s(&cfg),
            "--out",
            s(&c),
            "--seed",
            "8"
        ])
        .status
        .code(),
        Some(0)
    );
    assert_ne!(
        fs::read(a.join("certificates.csv")).unwrap(),
        fs::read(c.join("certificates.csv")).unwrap()
    );
}

#[test]
fn certify_without_classifier_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let text = "sigma = 0.5\n[[points]]\nid = \"a\"\nx = [0.0]\nlabel = 0\n";
    let cfg = write(dir.path(), "run.toml", text);
    let out = dir.path().join("out");
    let o = run(&["certify", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("classifier"));
    assert!(!out.exists());
}

#[test]
fn certify_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let unknown = write(
        dir.path(),
        "unknown.toml",
        &format!("bogus = 1\n{LINEAR_RUN}"),
    );
    assert_eq!(
        run(&["certify", "--config", s(&unknown), "--out", s(&out)])
            .status
            .code(),
        Some(1)
    );
    let cfg = write(dir.path(), "run.toml", LINEAR_RUN);
    assert_eq!(
        run(&[
            "certify",
            "--config",
            s(&cfg),
            "--out",
            s(&out),
            "--sigma=-1"
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        run(&["certify", "--config", s(&cfg), "--out", s(&out), "--bogus"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(&["certify", "--out", s(&out)]).status.code(), Some(1));
    assert_eq!(
        run(&[
            "certify",
            "--config",
            s(&cfg),
            "--out",
            s(&out),
            "--threats",
            "l7"
        ])
        .status
        .code(),
        Some(1)
    );
    let missing = dir.path().join("nope.toml");
    assert_eq!(
        run(&["certify", "--config", s(&missing), "--out", s(&out)])
            .status
            .code(),
        Some(1)
    );
    assert!(!out.exists());
}

#[test]
fn certify_reports_per_point_failures_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        &LINEAR_RUN.replace("samples = 20000", "samples = 2000"),
    );
    let batches = dir.path().join("s.json");
    assert_eq!(
        run(&["sample", "--config", s(&cfg), "--out", s(&batches)])
            .status
            .code(),
        Some(0)
    );
    // A second stored point whose subspace mask lies outside its input.
    let mut records = load_samples(&batches).unwrap();
    let mut bad = records[0].clone();
    bad.task.point_id = "bad".into();
    bad.task.requested_threats = vec![ThreatModel::SubspaceL2];
    bad.task.subspace_mask = Some(vec![9]);
    records.push(bad);
    persist_samples(&records, &batches).unwrap();

    let out = dir.path().join("out");
    let o = run(&[
        "certify",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--batches",
        s(&batches),
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad"));
    let csv = fs::read_to_string(out.join("certificates.csv")).unwrap();
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 2);
    assert!(rows
        .iter()
        .any(|r| r.starts_with("bad,") && r.contains("failed")));
    assert!(rows
        .iter()
        .any(|r| r.starts_with("a,") && !r.contains("failed")));
}

#[test]
fn curve_from_a_single_point_is_a_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", LINEAR_RUN);
    let out = dir.path().join("out");
    assert_eq!(
        run(&["certify", "--config", s(&cfg), "--out", s(&out)])
            .status
            .code(),
        Some(0)
    );
    let curves = dir.path().join("curves");
    let o = run(&[
        "curve",
        "--input",
        s(&out.join("certificates.csv")),
        "--out",
        s(&curves),
        "--grid-points",
        "40",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for threat in ["l1", "l2"] {
        let csv = fs::read_to_string(curves.join(format!("curve_{threat}.csv"))).unwrap();
        let rows: Vec<(f64, f64, f64)> = csv
            .lines()
            .skip(1)
            .map(|l| {
                let v: Vec<f64> = l.split(',').map(|c| c.parse().unwrap()).collect();
                (v[0], v[1], v[2])
            })
            .collect();
        assert_eq!(rows.len(), 40);
        for &(_, z, f) in &rows {
            assert!(z == 0.0 || z == 1.0);
            assert!(f == 0.0 || f == 1.0);
            assert!(f >= z);
        }
        assert_eq!(rows[0].1, 1.0);
        assert_eq!(rows.last().unwrap().2, 0.0);
        // One drop per method: a step function.
        for col in [1, 2] {
            let vals: Vec<f64> = rows
                .iter()
                .map(|r| if col == 1 { r.1 } else { r.2 })
                .collect();
            assert_eq!(vals.windows(2).filter(|w| w[0] != w[1]).count(), 1);
        }
        let svg = fs::read_to_string(curves.join(format!("curve_{threat}.svg"))).unwrap();
        assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    }
    // Rendering is deterministic.
    let again = dir.path().join("again");
    run(&[
        "curve",
        "--input",
        s(&out.join("certificates.csv")),
        "--out",
        s(&again),
        "--grid-points",
        "40",
    ]);
    for f in ["curve_l2.csv", "curve_l2.svg"] {
        assert_eq!(
            fs::read(curves.join(f)).unwrap(),
            fs::read(again.join(f)).unwrap()
        );
    }
}

#[test]
fn curve_rejects_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let header = format!("# smoothcert certificates v1\n{}\n", CSV_COLUMNS.join(","));
    let empty = write(dir.path(), "empty.csv", &header);
    let out = dir.path().join("curves");
    let o = run(&["curve", "--input", s(&empty), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    let blank = write(dir.path(), "blank.csv", "");
    assert_eq!(
        run(&["curve", "--input", s(&blank), "--out", s(&out)])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn sample_persists_and_merges() {
    let dir = tempfile::tempdir().unwrap();
    let text = LINEAR_RUN.replace("samples = 20000", "samples = 1000");
    let cfg = write(dir.path(), "run.toml", &text);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert_eq!(
        run(&["sample", "--config", s(&cfg), "--out", s(&a)])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        run(&[
            "sample",
            "--config",
            s(&cfg),
            "--out",
            s(&b),
            "--stream-offset",
            "1"
        ])
        .status
        .code(),
        Some(0)
    );
    let ra = load_samples(&a).unwrap();
    assert_eq!(ra.len(), 1);
    assert_eq!(ra[0].batch.total(), 1000);
    // Reloading and re-persisting reproduces the file byte for byte.
    let again = dir.path().join("a2.json");
    assert_eq!(
        run(&["sample", "--config", s(&cfg), "--out", s(&again)])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(fs::read(&a).unwrap(), fs::read(&again).unwrap());

    let rb = load_samples(&b).unwrap();
    let ab = merge_records([ra.clone(), rb.clone()].concat()).unwrap();
    let ba = merge_records([rb, ra].concat()).unwrap();
    assert_eq!(ab[0].batch.total(), 2000);
    assert_eq!(ab[0].batch.success_count, ba[0].batch.success_count);
    for (x, y) in ab[0].batch.x_sum.iter().zip(&ba[0].batch.x_sum) {
        assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
    }

    // Offline certification from the merged batches.
    let out = dir.path().join("out");
    let o = run(&[
        "certify",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--batches",
        s(&a),
        s(&b),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(
        data_rows(&fs::read_to_string(out.join("certificates.csv")).unwrap()).len(),
        1
    );
}

#[test]
fn sample_rejects_fewer_than_two_draws() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", LINEAR_RUN);
    let out = dir.path().join("s.json");
    let o = run(&[
        "sample",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--samples",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn quick_selftest_passes() {
    let o = run(&["selftest", "--quick"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("all checks passed"));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn selftest_catches_flipped_interval_labels() {
    let o = run(&["selftest", "--quick", "--flip-interval-labels"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_ne!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("FAIL"));
}
