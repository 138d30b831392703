use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdoh-eventkit")).args(args).current_dir(cwd).output().unwrap()
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = run(&["synth", "--seed", "7", "--docs", "3", "--output-dir", out], tmp.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = tree(&tmp.path().join("a"));
    assert!(a.contains_key("corpus/manifest.csv"));
    assert_eq!(a, tree(&tmp.path().join("b")));
}

#[test]
fn identity_scoring_and_validation() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run(&["synth", "--docs", "12", "--output-dir", "s"], tmp.path()).status.success());
    let o = run(&["score", "--gold", "s/corpus", "--pred", "s/corpus", "--output-dir", "sc"], tmp.path());
    assert!(o.status.success());
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("sc/score.json")).unwrap()).unwrap();
    assert_eq!(rep["overall"]["f1"].as_f64(), Some(1.0));
    assert!(tmp.path().join("sc/alignment.json").is_file());

    let o = run(&["validate", "--corpus", "s/corpus", "--output-dir", "v"], tmp.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 violations"));
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("run.json"), r#"{"seed": 3, "output_dir": "from-config"}"#).unwrap();
    let o = run(&["--config", "run.json", "synth", "--docs", "2"], tmp.path());
    assert!(o.status.success());
    assert!(tmp.path().join("from-config/corpus/manifest.csv").is_file());
    let o = run(&["--config", "run.json", "synth", "--docs", "2", "--output-dir", "flag"], tmp.path());
    assert!(o.status.success());
    assert!(tmp.path().join("flag/corpus/manifest.csv").is_file());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["predict", "--corpus", "x"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));

    assert_eq!(run(&["score", "--frobnicate"], tmp.path()).status.code(), Some(2));

    let o = run(&["note-labels", "--corpus", "missing"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not exist"));
    assert!(!tmp.path().join("out").exists());

    let o = run(&["--version"], tmp.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("checkpoint format v1"));
}
