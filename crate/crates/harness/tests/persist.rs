use gradbound_harness::persist::{persist, read_records, RecordKind, ResultRecord};
use serde_json::json;

fn record(i: u32) -> ResultRecord {
    ResultRecord::new(RecordKind::Bound, &json!({ "rhs": 1.5, "i": i }), "abc").unwrap()
}

#[test]
fn two_records_two_lines() {
    let dir = tempfile::tempdir().unwrap();
    let paths = persist(&[record(0), record(1)], dir.path()).unwrap();
    assert_eq!(paths, vec![dir.path().join("bound.jsonl")]);
    let text = std::fs::read_to_string(&paths[0]).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.ends_with('\n'));
    let back = read_records(&paths[0]).unwrap();
    assert_eq!(back[1].payload["i"], 1);
    assert_eq!(back[0].schema_version, 1);
}

#[test]
fn reruns_append_with_distinct_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    persist(&[record(0)], dir.path()).unwrap();
    let before = std::fs::read_to_string(dir.path().join("bound.jsonl")).unwrap();
    persist(&[record(0)], dir.path()).unwrap();
    let after = std::fs::read_to_string(dir.path().join("bound.jsonl")).unwrap();
    assert!(after.starts_with(&before));
    let recs = read_records(&dir.path().join("bound.jsonl")).unwrap();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0].payload, recs[1].payload);
    assert_ne!(recs[0].timestamp, recs[1].timestamp);
}

#[test]
fn kinds_go_to_separate_files() {
    let dir = tempfile::tempdir().unwrap();
    let v = ResultRecord::new(RecordKind::Verify, &json!({ "pass": true }), "h").unwrap();
    let paths = persist(&[record(0), v, record(1)], dir.path()).unwrap();
    assert_eq!(paths.len(), 2);
    assert_eq!(read_records(&dir.path().join("verify.jsonl")).unwrap().len(), 1);
    assert_eq!(read_records(&dir.path().join("bound.jsonl")).unwrap().len(), 2);
}

#[test]
fn concurrent_writers_do_not_interleave() {
    let dir = tempfile::tempdir().unwrap();
    std::thread::scope(|s| {
        for t in 0..8 {
            let d = dir.path();
            s.spawn(move || {
                for i in 0..25 {
                    persist(&[record(t * 100 + i)], d).unwrap();
                }
            });
        }
    });
    assert_eq!(read_records(&dir.path().join("bound.jsonl")).unwrap().len(), 200);
}

#[test]
fn unwritable_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    std::fs::write(&file, "x").unwrap();
    assert!(matches!(
        persist(&[record(0)], &file.join("sub")),
        Err(gradbound_harness::HarnessError::Io { .. })
    ));
}
