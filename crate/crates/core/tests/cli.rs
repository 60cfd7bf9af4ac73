use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use moral_lens::embedding::{write_embedding_file, write_manifest, DatasetManifest, ManifestRow};
use moral_lens::head::{read_checkpoint, write_checkpoint, Checkpoint};
use moral_lens::trainer::initial_head;
use moral_lens::{ClassifierHead, EmbeddingRecord, EncoderProfile, HeadConfig, Label, Split, TrainConfig};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_moral-lens"));
    cmd.env_remove("MORAL_LENS_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Labeled 512-d records across train and test splits.
fn write_dataset(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    let records: Vec<EmbeddingRecord> = (0..n)
        .map(|i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let v = (0..512).map(|k| sign * ((k % 7) as f32 - 3.0) / 10.0 + (i * k % 5) as f32 / 50.0).collect();
            EmbeddingRecord::new(format!("r{i}"), v)
                .with_label(Label::from(i % 2 == 0))
                .with_split(if i < n * 3 / 4 { Split::Train } else { Split::Test })
                .with_source("ethics")
        })
        .collect();
    let emb = dir.join("data.clem");
    let man = dir.join("data.jsonl");
    write_embedding_file(&records, &emb).unwrap();
    write_manifest(&DatasetManifest::from_records(&records).unwrap(), &man).unwrap();
    (man, emb)
}

fn write_head(dir: &Path, d_in: usize, b2: f64) -> PathBuf {
    let config = HeadConfig::for_input(d_in);
    let head = ClassifierHead::from_parts(
        config,
        vec![0.0; d_in * d_in],
        vec![0.0; d_in],
        vec![0.0; d_in],
        b2,
    )
    .unwrap();
    let path = dir.join(format!("head-{b2}.clmh"));
    write_checkpoint(&Checkpoint::new(head, &serde_json::json!({"profile": "fixed"})).unwrap(), &path).unwrap();
    path
}

#[test]
fn train_writes_profile_sized_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (man, emb) = write_dataset(dir.path(), 16);
    let out = dir.path().join("model.clmh");
    let o = run(&[
        "train", "--manifest", s(&man), "--embeddings", s(&emb), "--profile", "vitb32", "--seed", "7", "--out",
        s(&out), "--epochs", "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let bytes = std::fs::read(&out).unwrap();
    assert_eq!(&bytes[..4], b"CLMH");
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 512);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("model.clmh.report.json")).unwrap()).unwrap();
    assert_eq!(report["epoch_losses"].as_array().unwrap().len(), 2);
    assert_eq!(report["seed"], 7);

    let meta = read_checkpoint(&out).unwrap().metadata_json().unwrap();
    assert_eq!(meta["profile"], "vitb32");
}

#[test]
fn train_is_reproducible_and_reads_seed_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let (man, emb) = write_dataset(dir.path(), 12);
    let paths: Vec<PathBuf> = (0..3).map(|i| dir.path().join(format!("m{i}.clmh"))).collect();
    for (i, p) in paths.iter().enumerate() {
        let mut cmd = bin();
        cmd.args(["train", "--manifest", s(&man), "--embeddings", s(&emb), "--epochs", "1", "--out", s(p)]);
        if i < 2 {
            cmd.args(["--seed", "3"]);
        } else {
            cmd.env("MORAL_LENS_SEED", "3");
        }
        let o = cmd.output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let first = std::fs::read(&paths[0]).unwrap();
    assert_eq!(first, std::fs::read(&paths[1]).unwrap());
    assert_eq!(first, std::fs::read(&paths[2]).unwrap());
}

#[test]
fn zero_epochs_checkpoint_is_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let (man, emb) = write_dataset(dir.path(), 8);
    let out = dir.path().join("init.clmh");
    let o = run(&[
        "train", "--manifest", s(&man), "--embeddings", s(&emb), "--seed", "11", "--epochs", "0", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stored = read_checkpoint(&out).unwrap().head.flat_params();
    let config = TrainConfig::for_profile(EncoderProfile::Vitb32, None, 11).unwrap();
    let expected: Vec<f64> = initial_head(&config)
        .unwrap()
        .flat_params()
        .iter()
        .map(|&p| p as f32 as f64)
        .collect();
    assert_eq!(stored, expected);
}

#[test]
fn missing_manifest_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let o = run(&["train", "--manifest", s(&missing), "--embeddings", "x.clem", "--out", "m.clmh"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains(s(&missing)), "{err}");
    assert!(err.starts_with("error[io]:"), "{err}");
    assert!(o.stdout.is_empty());
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let (man, emb) = write_dataset(dir.path(), 8);
    let o = run(&[
        "train", "--manifest", s(&man), "--embeddings", s(&emb), "--out", "m.clmh", "--lr", "0.1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[usage]:"));
    let o = run(&["train", "--manifest", s(&man), "--embeddings", s(&emb), "--out", "m.clmh", "--profile", "vitl14"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dimension"));
}

#[test]
fn score_filter_threshold_on_zero_head() {
    let dir = tempfile::tempdir().unwrap();
    let (man, emb) = write_dataset(dir.path(), 8);
    let model = write_head(dir.path(), 512, 0.0);
    for (flag, positives) in [(vec!["--threshold", "0.9"], 0), (vec!["--preset", "filter"], 0), (vec![], 8)] {
        let mut args = vec!["score", "--model", s(&model), "--manifest", s(&man), "--embeddings", s(&emb)];
        args.extend(flag);
        let o = run(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let lines: Vec<serde_json::Value> = String::from_utf8(o.stdout)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 8);
        assert!(lines.iter().all(|l| l["probability"] == 0.5));
        assert_eq!(lines.iter().filter(|l| l["verdict"] == 1).count(), positives);
        assert_eq!(lines[0]["id"], "r0");
    }
}

#[test]
fn eval_from_scores_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let (man, emb) = write_dataset(dir.path(), 40);
    let model = dir.path().join("m.clmh");
    let o = run(&[
        "train", "--manifest", s(&man), "--embeddings", s(&emb), "--epochs", "3", "--seed", "1", "--out", s(&model),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let scores = dir.path().join("scores.jsonl");
    let o = run(&[
        "score", "--model", s(&model), "--manifest", s(&man), "--embeddings", s(&emb), "--out", s(&scores),
    ]);
    assert!(o.status.success() && o.stdout.is_empty());

    let direct = run(&[
        "eval", "--model", s(&model), "--embeddings", s(&emb), "--manifest", s(&man), "--dataset", "ethics",
    ]);
    let replay = run(&["eval", "--scores", s(&scores), "--manifest", s(&man), "--dataset", "ethics"]);
    assert!(direct.status.success(), "{}", stderr(&direct));
    assert!(replay.status.success(), "{}", stderr(&replay));
    assert_eq!(direct.stdout, replay.stdout);
    let report: serde_json::Value = serde_json::from_slice(&direct.stdout).unwrap();
    assert_eq!(report["count"], 10);
    assert_eq!(report["split"], "test");
    assert_eq!(report["alpha"], 0.2);

    let table = run(&[
        "eval", "--model", s(&model), "--embeddings", s(&emb), "--manifest", s(&man), "--format", "table",
        "--contents", "text",
    ]);
    let text = String::from_utf8(table.stdout).unwrap();
    assert!(text.contains("vitb32") && text.contains("text"), "{text}");
}

#[test]
fn video_constant_clip_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_head(dir.path(), 4, 4f64.ln());
    let records: Vec<EmbeddingRecord> = (0..5)
        .map(|i| EmbeddingRecord::new(format!("f{i}"), vec![i as f32; 4]))
        .collect();
    let emb = dir.path().join("frames.clem");
    write_embedding_file(&records, &emb).unwrap();
    let rows: Vec<ManifestRow> = (0..5)
        .map(|i| {
            let mut row = ManifestRow::new(format!("f{i}"), Split::Unlabeled, "video");
            row.clip_id = Some(if i < 3 { "a".into() } else { "b".into() });
            row.timestamp = Some(i as f64);
            row
        })
        .collect();
    let man = dir.path().join("frames.jsonl");
    write_manifest(&DatasetManifest::new(rows).unwrap(), &man).unwrap();
    let csv = dir.path().join("t.csv");

    let o = run(&[
        "video", "--model", s(&model), "--manifest", s(&man), "--embeddings", s(&emb), "--csv", s(&csv),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let clips: Vec<serde_json::Value> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(clips.len(), 2);
    assert_eq!(clips[0]["clip_id"], "a");
    assert_eq!(clips[0]["samples"].as_array().unwrap().len(), 3);
    assert_eq!(clips[0]["verdict"], 1);
    assert!((clips[0]["mean"].as_f64().unwrap() - 0.8).abs() < 1e-6);

    let o = run(&[
        "video", "--model", s(&model), "--manifest", s(&man), "--embeddings", s(&emb), "--threshold", "0.85",
    ]);
    let first: serde_json::Value =
        serde_json::from_str(String::from_utf8(o.stdout).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["verdict"], 0);

    let csv = std::fs::read_to_string(csv).unwrap();
    assert!(csv.starts_with("clip_id,t,p_raw,p_smooth\na,0,"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn aggregate_benchmark_categories() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("s.jsonl");
    let lines = [
        r#"{"id":"1","probability":0.9,"verdict":1,"category":"Armed Robbery"}"#,
        r#"{"id":"2","probability":0.86,"verdict":1,"category":"burglary"}"#,
        r#"{"id":"3","probability":0.4,"verdict":0,"category":"jaywalking"}"#,
        r#"{"id":"4","probability":0.2,"verdict":0,"category":null}"#,
    ];
    std::fs::write(&scores, lines.join("\n")).unwrap();
    let o = run(&["aggregate", "--scores", s(&scores)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["total"], 3);
    let felony = report["super_categories"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "felony")
        .unwrap();
    assert!((felony["value"].as_f64().unwrap() - 0.88).abs() < 1e-12);

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, r#"{"id":"1","probability":0.9,"verdict":1,"category":"littering"}"#).unwrap();
    let o = run(&["aggregate", "--scores", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[validation]:"));
}

#[test]
fn inspect_dumps_headers() {
    let dir = tempfile::tempdir().unwrap();
    let (_, emb) = write_dataset(dir.path(), 4);
    let o = run(&["inspect", s(&emb)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!((v["format"].as_str(), v["dim"].as_u64(), v["count"].as_u64()), (Some("CLEM"), Some(512), Some(4)));
    assert_eq!(v["payload_complete"], true);

    let model = write_head(dir.path(), 3, 0.0);
    let v: serde_json::Value = serde_json::from_slice(&run(&["inspect", s(&model)]).stdout).unwrap();
    assert_eq!(v["format"], "CLMH");
    assert_eq!(v["parameters"], 3 * 3 + 3 + 3 + 1);
    assert_eq!(v["metadata"]["profile"], "fixed");

    let junk = dir.path().join("junk");
    std::fs::write(&junk, b"hello").unwrap();
    let o = run(&["inspect", s(&junk)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[format]:"));
}
