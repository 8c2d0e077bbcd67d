use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn framer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_framer")).args(args).output().unwrap()
}

fn corpus(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/corpus")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("framer-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn run_passing_trace_exits_zero() {
    let out = framer(&["run", &corpus("basic.trace")]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("result") && text.contains("PASS"));
}

#[test]
fn expect_mismatch_exits_one() {
    let path = scratch("mismatch.trace");
    fs::write(&path, "alloc a 4\nlet p = ptr a\nload p 4\nexpect oob\n").unwrap();
    let out = framer(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn parse_error_exits_two() {
    let path = scratch("bad.trace");
    fs::write(&path, "alloc a 4\nload nope 1\n").unwrap();
    let out = framer(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 2"));
}

#[test]
fn json_reports_are_byte_identical() {
    let a = scratch("a.json");
    let b = scratch("b.json");
    for path in [&a, &b] {
        let out = framer(&[
            "fuzz", "--seed", "3", "--objects", "200", "--run", "--placement", "gaps", "--spare-bits", "8", "-q",
            "--json", path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let ja = fs::read(&a).unwrap();
    assert_eq!(ja, fs::read(&b).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&ja).unwrap();
    assert_eq!(v["config"]["spare_bits"], 8);
    assert!(v["events"].as_array().unwrap().len() > 200);
}

#[test]
fn fuzz_output_is_reproducible_and_runnable() {
    let one = framer(&["fuzz", "--seed", "11", "--objects", "50"]).stdout;
    let two = framer(&["fuzz", "--seed", "11", "--objects", "50"]).stdout;
    assert_eq!(one, two);
    let path = scratch("fuzz.trace");
    fs::write(&path, &one).unwrap();
    let out = framer(&["run", path.to_str().unwrap(), "-q"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn study_writes_csv() {
    let path = scratch("study.csv");
    let out = framer(&[
        "study", "--sizes", "uniform:1:4096", "--seeds", "2", "--objects", "200", "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(&path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "spare_bits,seed,objects,large_framed_fraction,small_sized_large_framed_fraction,table_resident_bytes,overhead_ratio"
    );
    assert_eq!(lines.count(), 4);
}
