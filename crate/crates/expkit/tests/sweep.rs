use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use sketchlab_expkit::records::{collect_records, RECORDS_FILE};
use sketchlab_expkit::report::{emit_report, MERGED_RECORDS_FILE, STRATEGY_TABLE_FILE};
use sketchlab_expkit::svg::{line_plot, Series};
use sketchlab_expkit::ExperimentRecord;

fn sketchlab(args: &[&str]) -> String {
    let o = Command::new(env!("CARGO_BIN_EXE_sketchlab")).args(args).env_remove("SKETCHLAB_OUT").output().unwrap();
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    walk(dir).into_iter().map(|p| (p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap())).collect()
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn sweep_is_resumable_and_reports_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let color = dir.path().join("shapes");
    let line = dir.path().join("shapes-line");
    let out = dir.path().join("out");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    sketchlab(&["prepare", "--root", &s(&color), "--synthetic", "--per-class", "4", "--test-per-class", "2"]);
    sketchlab(&["prepare", "--root", &s(&color), "--convert", "line"]);
    let args = [
        "sweep", "-q", "--color", &s(&color), "--line", &s(&line), "--out", &s(&out), "--arch", "resnet8",
        "--max-epochs", "1", "--strategies", "ColorOnly,LineToColor", "--fractions", "0.5,0.75,1.0", "--seeds", "0,1",
    ];
    let first = sketchlab(&args);
    assert!(first.contains("completed 12 skipped 0 failed 0"), "{first}");

    let records = collect_records(&out).unwrap();
    let runs: std::collections::BTreeSet<&str> = records.iter().map(|r| r.run_id.as_str()).collect();
    assert_eq!(runs.len(), 12);
    // Every run reports final accuracy in both domains exactly once.
    for domain in ["COLOR", "LINE"] {
        let n = records.iter().filter(|r| r.split == "test" && r.domain == domain && r.metric == "accuracy").count();
        assert_eq!(n, 12, "{domain}");
    }
    let mut keys: Vec<_> = records.iter().map(|r| r.key()).collect();
    keys.sort();
    let before = keys.len();
    keys.dedup();
    assert_eq!(keys.len(), before, "duplicate record keys");

    let snapshot = files(&out);
    let second = sketchlab(&args);
    assert!(second.contains("completed 0 skipped 12 failed 0"), "{second}");
    assert_eq!(files(&out), snapshot, "resumed sweep touched finished runs");

    let report = dir.path().join("report");
    sketchlab(&["report", "--runs", &s(&out), "--out", &s(&report)]);
    let once = files(&report);
    assert!(once.contains_key(MERGED_RECORDS_FILE) && once.contains_key(STRATEGY_TABLE_FILE));
    assert!(once.keys().any(|k| k.ends_with(".svg")));
    sketchlab(&["report", "--runs", &s(&out), "--out", &s(&report)]);
    assert_eq!(files(&report), once);

    let table = String::from_utf8(once[STRATEGY_TABLE_FILE].clone()).unwrap();
    assert_eq!(table.lines().count(), 1 + 2, "{table}");
    assert!(table.lines().skip(1).all(|l| l.split(',').nth(1) == Some("1")), "{table}");
    assert!(!walk(&report).iter().any(|p| p.file_name().unwrap() == RECORDS_FILE));
}

fn acc(strategy: &str, fraction: f64, seed: u64, domain: &str, value: f64) -> ExperimentRecord {
    ExperimentRecord {
        run_id: format!("{strategy}-{fraction}-{seed}"),
        strategy: strategy.into(),
        fraction,
        seed,
        stage: 1,
        split: "test".into(),
        domain: domain.into(),
        metric: "accuracy".into(),
        value,
        timestamp: "2026-01-02T03:04:05Z".into(),
    }
}

#[test]
fn single_record_report() {
    let dir = tempfile::tempdir().unwrap();
    let written = emit_report(&[acc("ColorOnly", 1.0, 0, "COLOR", 64.0)], dir.path()).unwrap();
    assert!(written.iter().all(|p| p.is_file()));
    let table = fs::read_to_string(dir.path().join(STRATEGY_TABLE_FILE)).unwrap();
    assert_eq!(table, "strategy,fraction,runs,color_acc\nColorOnly,1,1,64.00\n");
    for p in written.iter().filter(|p| p.extension().is_some_and(|e| e == "svg")) {
        let svg = fs::read_to_string(p).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(!svg.contains("NaN") && !svg.contains("inf"), "{}", p.display());
    }
}

#[test]
fn report_ignores_input_order() {
    let mut records = Vec::new();
    for (i, s) in ["ColorOnly", "LineToColor"].iter().enumerate() {
        for seed in 0..3 {
            records.push(acc(s, 0.5, seed, "COLOR", 50.0 + i as f64 + seed as f64));
            records.push(acc(s, 0.5, seed, "LINE", 40.0 + seed as f64));
        }
    }
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    emit_report(&records, a.path()).unwrap();
    records.reverse();
    emit_report(&records, b.path()).unwrap();
    assert_eq!(files(a.path()), files(b.path()));
    let table = fs::read_to_string(a.path().join(STRATEGY_TABLE_FILE)).unwrap();
    assert!(table.contains("ColorOnly,0.5,3,51.00,41.00"), "{table}");
    assert!(table.contains("LineToColor,0.5,3,52.00,41.00"), "{table}");
    assert!(emit_report(&[], a.path()).is_err());
}

#[test]
fn svg_is_deterministic_and_escaped() {
    let series = vec![
        Series { name: "a<b".into(), points: vec![(0.1, 50.0), (1.0, 70.0)] },
        Series { name: "flat".into(), points: vec![(0.5, 60.0)] },
        Series { name: "empty".into(), points: vec![] },
    ];
    let one = line_plot("t & u", "fraction", "accuracy", &series, &[65.0]);
    assert_eq!(one, line_plot("t & u", "fraction", "accuracy", &series, &[65.0]));
    assert!(one.contains("a&lt;b") && one.contains("t &amp; u"));
    assert!(!one.contains("NaN"));
}
