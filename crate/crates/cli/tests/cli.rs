use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "model": "mini_alex",
  "dataset": {"train_scenes": 2, "test_scenes": 1, "train_per_class": 40, "test_per_class": 20},
  "train": {"epochs": 1},
  "k": 10
}"#;

fn activscope(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_activscope"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn without_timing(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timing");
    v
}

#[test]
fn missing_model_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"k": 5}"#).unwrap();
    let out = activscope(dir.path(), &["synth", "--config", "c.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("error[config]") && err.contains("`model`"), "{err}");
}

#[test]
fn bad_invocations_exit_with_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        activscope(dir.path(), &["exp1", "--no-such-flag"]).status.code(),
        Some(2)
    );
    assert_eq!(activscope(dir.path(), &["nonsense"]).status.code(), Some(2));
    assert_eq!(
        activscope(dir.path(), &["extract", "--tap", "fc9"]).status.code(),
        Some(2)
    );
    let out = activscope(dir.path(), &["train", "--config", "absent.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("absent.json"));
    fs::write(dir.path().join("c.json"), r#"{"model": "mini_alex", "bogus": 1}"#).unwrap();
    assert_eq!(
        activscope(dir.path(), &["synth", "--config", "c.json"]).status.code(),
        Some(2)
    );
}

#[test]
fn viz_writes_a_gallery_of_the_requested_depth() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), SMALL).unwrap();
    let out = activscope(dir.path(), &["viz", "--config", "c.json", "--k", "100"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let gallery: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/gallery/gallery.json")).unwrap()).unwrap();
    assert_eq!(gallery["k"], 100);
    assert_eq!(gallery["channels"].as_array().unwrap().len(), 32);
    assert_eq!(gallery["patch_size"], serde_json::json!([64, 64]));
}

#[test]
fn stages_are_reproducible_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), SMALL).unwrap();
    for out in ["a", "b"] {
        let run = activscope(dir.path(), &["exp1", "--config", "c.json", "--out", out, "--seed", "3"]);
        assert!(run.status.success(), "{}", stderr(&run));
    }
    let seq = activscope(
        dir.path(),
        &[
            "exp1",
            "--config",
            "c.json",
            "--out",
            "c",
            "--seed",
            "3",
            "--sequential",
        ],
    );
    assert!(seq.status.success(), "{}", stderr(&seq));
    let report = |o: &str| without_timing(&dir.path().join(o).join("exp1/report.json"));
    assert_eq!(report("a"), report("b"));
    assert_eq!(report("a"), report("c"));
    assert_eq!(report("a")["seed"], 3);
    for file in ["model/cnn.asm", "features/test_fc1.afm", "data/test/manifest.jsonl"] {
        let read = |o: &str| fs::read(dir.path().join(o).join(file)).unwrap();
        assert_eq!(read("a"), read("b"), "{file}");
    }

    let clash = activscope(dir.path(), &["exp1", "--config", "c.json", "--out", "a", "--seed", "4"]);
    assert_eq!(clash.status.code(), Some(2));

    let summary = activscope(dir.path(), &["report", "--out", "a"]);
    assert!(summary.status.success());
    assert!(fs::read_to_string(dir.path().join("a/report.txt"))
        .unwrap()
        .contains("== exp1 =="));
}

#[test]
fn exp4_accepts_a_hand_written_tag_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.json"),
        SMALL.replace("\"k\": 10", "\"k\": 10, \"selection_size\": 4, \"seeds\": [1]"),
    )
    .unwrap();
    let tags: serde_json::Map<String, serde_json::Value> = (0..32)
        .map(|c| {
            (
                c.to_string(),
                serde_json::json!(if c < 6 { "tumor" } else { "unrecognizable" }),
            )
        })
        .collect();
    let file = serde_json::json!({"model_name": "mini_alex", "tap": "gap", "tags": tags});
    fs::write(dir.path().join("tags.json"), file.to_string()).unwrap();
    let out = activscope(dir.path(), &["exp4", "--config", "c.json", "--tags", "tags.json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = without_timing(&dir.path().join("out/exp4/report.json"));
    assert_eq!(report["k"], 4);
    assert_eq!(report["warnings"], serde_json::json!([]));
    assert_eq!(report["rows"][1]["channels"], serde_json::json!([[0, 1, 2, 3]]));
}
