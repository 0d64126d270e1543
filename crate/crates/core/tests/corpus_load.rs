use std::fs;

use argmine::corpus::{load_corpus, LoadOptions, NormalizeError, SplitName};
use argmine::testkit::{synthetic_splits, write_corpus};

#[test]
fn written_fixture_loads_back_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (test, train) = synthetic_splits(20, 11);
    let files = write_corpus(dir.path(), &[&test, &train]).unwrap();
    let loaded =
        load_corpus(&files.essay_dir, &files.annotations, Some(&files.manifest), &LoadOptions::default()).unwrap();

    assert!(loaded.report.row_errors.is_empty(), "{:?}", loaded.report.row_errors);
    assert!(loaded.report.orphaned_rows.is_empty(), "{:?}", loaded.report.orphaned_rows);
    assert!(loaded.report.essay_errors.is_empty());
    assert_eq!(loaded.split(SplitName::Test).unwrap(), &test);
    assert_eq!(loaded.split(SplitName::Train).unwrap(), &train);
    let summary = loaded.report.summary(SplitName::Test).unwrap();
    assert_eq!((summary.essays, summary.spans), (20, test.span_count()));
    assert!(loaded.split(SplitName::Validation).is_none());
}

#[test]
fn without_manifest_everything_goes_to_the_default_split() {
    let dir = tempfile::tempdir().unwrap();
    let (test, train) = synthetic_splits(5, 3);
    let files = write_corpus(dir.path(), &[&test, &train]).unwrap();
    let loaded = load_corpus(&files.essay_dir, &files.annotations, None, &LoadOptions::default()).unwrap();
    assert_eq!(loaded.splits.len(), 1);
    assert_eq!(loaded.splits[0].name, SplitName::Test);
    assert_eq!(loaded.splits[0].essays.len(), 9);
}

#[test]
fn bad_rows_and_missing_files_are_reported_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let (test, _) = synthetic_splits(3, 5);
    let files = write_corpus(dir.path(), &[&test]).unwrap();
    let mut table = fs::read_to_string(&files.annotations).unwrap();
    table.push_str("X1,T0000,some text,Banter,Adequate\n");
    table.push_str("X2,T0000,never appears anywhere zzz,Claim,Adequate\n");
    table.push_str("X3,GONE,whatever,Claim,Effective\n");
    fs::write(&files.annotations, table).unwrap();
    let mut manifest = fs::read_to_string(&files.manifest).unwrap();
    manifest.push_str("GONE,test\n");
    fs::write(&files.manifest, manifest).unwrap();

    let loaded =
        load_corpus(&files.essay_dir, &files.annotations, Some(&files.manifest), &LoadOptions::default()).unwrap();
    let r = &loaded.report;
    assert_eq!(r.row_errors.len(), 1);
    assert_eq!(r.row_errors[0].discourse_id, "X1");
    assert!(r.orphaned_rows.iter().any(|o| o.discourse_id == "X2"));
    assert!(r.orphaned_rows.iter().any(|o| o.discourse_id == "X3" && o.reason == "missing essay file"));
    assert_eq!(r.essay_errors.len(), 1);
    assert_eq!(loaded.split(SplitName::Test).unwrap(), &test);
}

#[test]
fn missing_inputs_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_corpus(&dir.path().join("nope"), &dir.path().join("a.csv"), None, &LoadOptions::default()).is_err());
    fs::write(dir.path().join("a.csv"), "essay_id,discourse_text\n").unwrap();
    let err = load_corpus(dir.path(), &dir.path().join("a.csv"), None, &LoadOptions::default()).unwrap_err();
    assert!(err.to_string().contains("discourse_id"));
}

#[test]
fn normalization_reprojects_gold_spans() {
    let dir = tempfile::tempdir().unwrap();
    let (test, _) = synthetic_splits(6, 9);
    let files = write_corpus(dir.path(), &[&test]).unwrap();
    let upper = |t: &str| -> Result<String, NormalizeError> { Ok(t.to_uppercase()) };
    let options = LoadOptions { normalizer: &upper, ..LoadOptions::default() };
    let loaded = load_corpus(&files.essay_dir, &files.annotations, Some(&files.manifest), &options).unwrap();
    let split = loaded.split(SplitName::Test).unwrap();
    for (got, want) in split.essays.iter().zip(&test.essays) {
        assert_eq!(got.essay.text(), want.essay.text().to_uppercase());
        assert_eq!(got.gold_ranges(), want.gold_ranges());
    }
}
