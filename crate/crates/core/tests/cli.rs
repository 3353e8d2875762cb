use std::path::Path;
use std::process::{Command, Output};

use spdmil::harness::report::read_report;
use spdmil::harness::{emit_report, format_percent, load_dataset, Format, Manifest, ManifestEntry};
use spdmil::{Error, Label, Recording};

fn spdmil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spdmil")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const FAST: &[&str] = &[
    "--methods",
    "mi-adaptive,mean-cov",
    "--bands",
    "3-50Hz",
    "--c-values",
    "1,100",
    "--sigma-values",
    "1,10",
];

#[test]
fn synth_run_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = dir.path().join("cohort");
    let out = spdmil(&["synth", "--out", p(&cohort), "--positives", "3", "--negatives", "3", "--seed", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["manifest.json", "truth.json", "cohort.json", "s000.csv", "s005.csv"] {
        assert!(cohort.join(f).is_file(), "missing {f}");
    }

    let json = dir.path().join("report.json");
    let csv = dir.path().join("report.csv");
    let (manifest, truth) = (cohort.join("manifest.json"), cohort.join("truth.json"));
    let mut args = vec![
        "run",
        "--manifest",
        p(&manifest),
        "--truth",
        p(&truth),
        "--out",
        p(&json),
        "--csv",
        p(&csv),
    ];
    args.extend_from_slice(FAST);
    let out = spdmil(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let report = read_report(&json).unwrap();
    assert_eq!(report.provenance.subjects, 6);
    assert!(report.segmentation.is_some());
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("method,3-50Hz"));
    assert!(lines.next().unwrap().starts_with("mi-adaptive,"));

    let out = spdmil(&["report", p(&json), "--format", "csv"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);

    // JSON re-emits byte for byte
    let again = dir.path().join("again.json");
    emit_report(&report, &again, Format::Json).unwrap();
    assert_eq!(std::fs::read(&json).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"methods": ["mi-adaptive"], "no_such_field": 1}"#).unwrap();
    let manifest = dir.path().join("manifest.json");
    std::fs::write(&manifest, r#"{"dataset_name": "x", "subjects": []}"#).unwrap();
    let out = spdmil(&["run", "--manifest", p(&manifest), "--config", p(&cfg)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_field"));

    let out = spdmil(&["run", "--manifest", p(&manifest), "--overlap", "1.5"]);
    assert_eq!(code(&out), 2);
    let out = spdmil(&["run", "--manifest", p(&manifest), "--methods", "svm-of-doom"]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&spdmil(&["frobnicate"])), 2);
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = spdmil(&["run", "--manifest", p(&dir.path().join("absent.json"))]);
    assert_eq!(code(&out), 3);

    std::fs::write(dir.path().join("a.csv"), "x,y\n1,2\n3,oops\n").unwrap();
    let manifest = Manifest {
        dataset_name: "broken".into(),
        channel_exclusions: vec![],
        subjects: vec![ManifestEntry {
            subject_id: "a".into(),
            label: Label::Positive,
            recording_path: "a.csv".into(),
            sample_rate: 128.0,
        }],
    };
    manifest.write(&dir.path().join("manifest.json")).unwrap();
    let out = spdmil(&["run", "--manifest", p(&dir.path().join("manifest.json"))]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("a.csv:3"));

    let out = spdmil(&["report", p(&dir.path().join("manifest.json"))]);
    assert_eq!(code(&out), 3);
}

#[test]
fn numerical_errors_map_to_4() {
    let e = Error::Numerical("Karcher mean stalled".into()).context("band alpha, method mean-cov");
    assert_eq!(e.exit_code(), 4);
    assert_eq!(Error::Config("x".into()).exit_code(), 2);
    assert_eq!(Error::Data("x".into()).exit_code(), 3);
}

#[test]
fn excluded_reference_channels_leave_nineteen() {
    let names: Vec<String> = [
        "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3", "Cz", "C4", "T4", "T5", "P3", "Pz", "P4", "T6", "O1",
        "O2", "A1", "A2", "G",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    assert_eq!(names.len(), 22);
    let samples = (0..22).map(|c| (0..64).map(|t| ((c * 7 + t) % 11) as f64).collect()).collect();
    let rec = Recording::new("s", Label::Negative, 64.0, names, samples).unwrap();
    let dir = tempfile::tempdir().unwrap();
    rec.write_csv_file(&dir.path().join("s.csv")).unwrap();
    let manifest = Manifest {
        dataset_name: "eeg".into(),
        channel_exclusions: vec!["A1".into(), "A2".into(), "G".into()],
        subjects: vec![ManifestEntry {
            subject_id: "s".into(),
            label: Label::Negative,
            recording_path: "s.csv".into(),
            sample_rate: 64.0,
        }],
    };
    manifest.write(&dir.path().join("m.json")).unwrap();
    let loaded = load_dataset(&dir.path().join("m.json")).unwrap();
    let r = &loaded.recordings[0];
    assert_eq!(r.channels(), 19);
    assert!(!r.channel_names.iter().any(|n| n == "A1" || n == "A2" || n == "G"));
    assert_eq!(r.samples[18], rec.samples[18]);
}

#[test]
fn percentages_use_two_decimals() {
    assert_eq!(format_percent(39.0 / 43.0), "90.70");
    assert_eq!(format_percent(1.0), "100.00");
    assert_eq!(format_percent(0.0), "0.00");
}
