use std::fs;
use std::path::Path;

use chimeric_cli::config::RunConfig;
use chimeric_cli::pipeline::{load_data, run_with_data, EvaluationReport};
use chimeric_cli::report::{emit_report, read_report, ReportFormat};
use chimeric_cli::synthetic::{generate, BUNDLED_SEED};

const FORMATS: [ReportFormat; 3] = [ReportFormat::Json, ReportFormat::CsvTables, ReportFormat::Markdown];

fn bundled_report() -> EvaluationReport {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic/config.toml");
    let config = RunConfig::load(&path).unwrap();
    run_with_data(&config, &load_data(&config).unwrap()).unwrap()
}

#[test]
fn same_report_gives_identical_bytes() {
    let report = bundled_report();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for f in FORMATS {
        let pa = emit_report(&report, f, a.path()).unwrap();
        let pb = emit_report(&report, f, b.path()).unwrap();
        assert_eq!(pa.len(), pb.len());
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
        }
    }
}

#[test]
fn json_round_trips() {
    let report = bundled_report();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&report, ReportFormat::Json, dir.path()).unwrap();
    assert_eq!(read_report(&files[0]).unwrap(), report);
}

#[test]
fn empty_comparisons_still_emit_tables() {
    let mut report = bundled_report();
    report.comparisons.clear();
    let dir = tempfile::tempdir().unwrap();
    for f in FORMATS {
        assert!(!emit_report(&report, f, dir.path()).unwrap().is_empty());
    }
    let tests = fs::read_to_string(dir.path().join("paired_tests.csv")).unwrap();
    assert_eq!(tests.lines().count(), 1, "header only");
    let md = fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(md.contains("No comparisons."));
}

#[test]
fn unwritable_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("occupied");
    fs::write(&file, "x").unwrap();
    assert!(emit_report(&bundled_report(), ReportFormat::Json, &file.join("sub")).is_err());
}

#[test]
fn bundled_data_matches_generator() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), BUNDLED_SEED).unwrap();
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic");
    for name in ["hub.csv", "truth.csv", "human.jsonl", "config.toml"] {
        assert!(
            fs::read(dir.path().join(name)).unwrap() == fs::read(bundled.join(name)).unwrap(),
            "{name} is stale; rerun the generate_synthetic example"
        );
    }
}
