use proptest::prelude::*;
use sketchlab_expkit::records::{collect_records, read_records, write_records, CSV_HEADER, RECORDS_FILE};
use sketchlab_expkit::ExperimentRecord;

fn record() -> impl Strategy<Value = ExperimentRecord> {
    (
        "[0-9a-f]{16}",
        prop::sample::select(vec!["ColorOnly", "LineToColor", "Draw>ColorOnly", "distill:vgg8<-LineToColor@0.5", "a,b \"q\""]),
        0.001f64..=1.0,
        any::<u64>(),
        0usize..3,
        prop::sample::select(vec!["train", "val", "test"]),
        prop::sample::select(vec!["COLOR", "LINE"]),
        "[a-z_]{1,12}(@[0-9]{1,3})?",
        -1e9f64..1e9,
    )
        .prop_map(|(run_id, strategy, fraction, seed, stage, split, domain, metric, value)| ExperimentRecord {
            run_id,
            strategy: strategy.into(),
            fraction,
            seed,
            stage,
            split: split.into(),
            domain: domain.into(),
            metric,
            value,
            timestamp: "2026-01-02T03:04:05Z".into(),
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]
    #[test]
    fn csv_round_trip(records in prop::collection::vec(record(), 0..20)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(RECORDS_FILE);
        write_records(&path, &records).unwrap();
        prop_assert_eq!(read_records(&path).unwrap(), records);
    }
}

fn sample(metric: &str, value: f64) -> ExperimentRecord {
    ExperimentRecord {
        run_id: "0123456789abcdef".into(),
        strategy: "ColorOnly".into(),
        fraction: 0.5,
        seed: 3,
        stage: 0,
        split: "test".into(),
        domain: "COLOR".into(),
        metric: metric.into(),
        value,
        timestamp: "2026-01-02T03:04:05Z".into(),
    }
}

#[test]
fn header_is_first_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(RECORDS_FILE);
    write_records(&path, &[sample("acc", 71.5)]).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.next(), Some("0123456789abcdef,ColorOnly,0.5,3,0,test,COLOR,acc,71.5,2026-01-02T03:04:05Z"));
    assert_eq!(lines.next(), None);
}

#[test]
fn non_finite_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(RECORDS_FILE);
    for v in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
        assert!(write_records(&path, &[sample("acc", 1.0), sample("loss", v)]).is_err());
        assert!(!path.exists());
    }
}

#[test]
fn wrong_header_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(RECORDS_FILE);
    std::fs::write(&path, "run,strategy\nx,y\n").unwrap();
    assert!(read_records(&path).is_err());
}

#[test]
fn collects_nested_files_in_path_order() {
    let dir = tempfile::tempdir().unwrap();
    write_records(&dir.path().join("runs/b").join(RECORDS_FILE), &[sample("b", 2.0)]).unwrap();
    write_records(&dir.path().join("runs/a").join(RECORDS_FILE), &[sample("a", 1.0)]).unwrap();
    std::fs::write(dir.path().join("runs/notes.csv"), "ignored").unwrap();
    let all = collect_records(dir.path()).unwrap();
    assert_eq!(all.iter().map(|r| r.metric.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    assert!(collect_records(&dir.path().join("missing")).is_err());
}

#[test]
fn base_metric_drops_epoch() {
    assert_eq!(sample("val_acc@12", 0.0).base_metric(), "val_acc");
    assert_eq!(sample("acc", 0.0).base_metric(), "acc");
}
