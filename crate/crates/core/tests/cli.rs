use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value as Json;

fn sged(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sged")).args(args).env_remove("SGED_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_kind(o: &Output) -> String {
    let line = String::from_utf8(o.stderr.clone()).unwrap();
    let record: Json = serde_json::from_str(line.trim()).unwrap_or_else(|_| panic!("not a JSON record: {line}"));
    record["error"]["kind"].as_str().unwrap().to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate(dir: &Path, preset: &str, seed: &str) {
    let o = sged(&["generate", "--preset", preset, "--seed", seed, "--queries", "50", "--out", p(dir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn ged_of_identical_files_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path(), "css", "1");
    let scene = tmp.path().join("test/scenes/s00000.json");
    let o = sged(&["ged", p(&scene), p(&scene), "--cost", "css"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "0.0\n");

    let other = tmp.path().join("test/scenes/s00001.json");
    let o = sged(&["ged", p(&scene), p(&other), "--cost", "css", "--matching"]);
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 10);
    assert_eq!(lines[1], "0\t0");
}

#[test]
fn eval_prints_a_recall_table() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path(), "crir", "7");
    let out = tmp.path().join("eval");
    let test = tmp.path().join("test");
    let o = sged(&["eval", "--dataset", p(&test), "--programs", "gold", "--k", "1", "--seed", "7", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = stdout(&o);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "template\tadd\tremove\tmake\toverall");
    assert_eq!(rows.len(), 7);
    assert!(rows[6].starts_with("overall\t"));
    assert_eq!(fs::read_to_string(out.join("recall.tsv")).unwrap(), table);
    assert_eq!(fs::read_to_string(out.join("rankings.jsonl")).unwrap().lines().count(), 50);
}

#[test]
fn bad_reward_is_a_usage_error() {
    let o = sged(&["train", "--reward", "banana"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "usage");
    let o = sged(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_config_and_missing_files_fail_with_records() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "[cost]\nedge_substitution = -1.0\n").unwrap();
    let o = sged(&["--config", p(&cfg), "ged", "a.json", "b.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "config");

    let o = sged(&["ged", "/nonexistent/a.json", "/nonexistent/b.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_kind(&o), "io");
}

#[test]
fn flags_override_config_and_manifest_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "preset = \"css\"\nseed = 3\n[generate]\nqueries = 20\ndb_scenes = 30\n").unwrap();
    let first = tmp.path().join("first");
    let o = sged(&["--config", p(&cfg), "generate", "--seed", "9", "--out", p(&first)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = fs::read_to_string(first.join("run_manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 9"), "{manifest}");

    let second = tmp.path().join("second");
    let o = sged(&["--config", p(&first.join("run_manifest.toml")), "generate", "--out", p(&second)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["train/queries.jsonl", "test/queries.jsonl", "train/manifest.json", "test/scenes/s00003.json"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_env_var_is_the_default() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("g");
    let o = Command::new(env!("CARGO_BIN_EXE_sged"))
        .args(["generate", "--queries", "5", "--db-scenes", "5", "--out", p(&out)])
        .env("SGED_SEED", "42")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(fs::read_to_string(out.join("run_manifest.toml")).unwrap().contains("seed = 42"));
}

#[test]
fn exec_applies_a_program() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path(), "crir", "2");
    let test = tmp.path().join("test");
    let first = fs::read_to_string(test.join("queries.jsonl")).unwrap();
    let row: Json = serde_json::from_str(first.lines().find(|l| l.contains("\"remove\"")).unwrap()).unwrap();
    let input = test.join("scenes").join(format!("{}.json", row["input"].as_str().unwrap()));
    let target = test.join("scenes").join(format!("{}.json", row["target"].as_str().unwrap()));
    let out = tmp.path().join("exec");
    let o = sged(&["exec", p(&input), "--program", row["gold"].as_str().unwrap(), "--trace", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Json = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["mode"], "normal");
    assert!(report["fault"].is_null());
    let edited = out.join("scene.json");
    let d = sged(&["ged", p(&edited), p(&target)]);
    assert_eq!(stdout(&d), "0.0\n");

    let o = sged(&["exec", p(&input), "--program", "location[TL]"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_kind(&o), "input");
}

#[test]
fn train_writes_model_and_curve() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path(), "css", "4");
    let out = tmp.path().join("train");
    let train = tmp.path().join("train_data");
    fs::rename(tmp.path().join("train"), &train).unwrap();
    let o = sged(&["train", "--dataset", p(&train), "--reward", "binary", "--iters", "10", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let curve = fs::read_to_string(out.join("curve.tsv")).unwrap();
    assert!(curve.starts_with("iteration\tmean_reward\tvalidation_reward\n0\t-\t"));
    let model = out.join("model.json");
    let test = tmp.path().join("test");
    let o = sged(&["eval", "--dataset", p(&test), "--programs", &format!("policy:{}", p(&model))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = sged(&["train", "--dataset", p(&train), "--preset", "crir"]);
    assert_eq!(error_kind(&o), "config");
}
