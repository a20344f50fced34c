use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use opcode_nb::bench::{parse_csv, Mode};
use opcode_nb::engine::{read_predictions, ModelBundle};

fn opnb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opnb"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = opnb(args);
    assert!(
        out.status.success(),
        "opnb {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = p(dir.path(), "corpus.jsonl");
    let train = p(dir.path(), "train.jsonl");
    let test = p(dir.path(), "test.jsonl");
    let bundle = p(dir.path(), "bundle.json");
    let preds = p(dir.path(), "preds.jsonl");
    let preds_seq = p(dir.path(), "preds_seq.jsonl");
    let report = p(dir.path(), "report.csv");

    ok(&[
        "gen",
        "--groups",
        "4",
        "--per-class",
        "12",
        "--vocab",
        "32",
        "--divergence",
        "1.0",
        "--seed",
        "3",
        "--out",
        &corpus,
    ]);
    assert_eq!(fs::read_to_string(&corpus).unwrap().lines().count(), 96);

    ok(&[
        "split", "--in", &corpus, "--ratio", "2:1", "--seed", "5", "--train", &train, "--test", &test,
    ]);
    assert_eq!(fs::read_to_string(&train).unwrap().lines().count(), 64);
    assert_eq!(fs::read_to_string(&test).unwrap().lines().count(), 32);

    ok(&[
        "train",
        "--in",
        &train,
        "--k",
        "10",
        "--alpha",
        "1",
        "--group-kb",
        "5",
        "--max-kb",
        "500",
        "--min-per-class",
        "6",
        "--out",
        &bundle,
    ]);
    let b = ModelBundle::read_json(fs::File::open(&bundle).unwrap()).unwrap();
    assert_eq!(b.trained_ids.len(), 4);
    assert_eq!(b.meta.k, 10);

    ok(&[
        "classify",
        "--bundle",
        &bundle,
        "--in",
        &test,
        "--lanes",
        "3",
        "--parallel",
        "--out",
        &preds,
    ]);
    ok(&[
        "classify",
        "--bundle",
        &bundle,
        "--in",
        &test,
        "--sequential",
        "--out",
        &preds_seq,
    ]);
    assert_eq!(fs::read(&preds).unwrap(), fs::read(&preds_seq).unwrap());
    let recs = read_predictions(fs::read(&preds).unwrap().as_slice()).unwrap();
    assert_eq!(recs.len(), 32);

    let out = ok(&["score", "--bundle", &preds, "--truth", &test]);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["accuracy"], 1.0);
    assert_eq!(summary["per_class"]["malware"]["recall"], 1.0);

    ok(&[
        "bench",
        "--train",
        &train,
        "--test",
        &test,
        "--k",
        "4,8",
        "--batch-multiple",
        "16",
        "--batch-counts",
        "1,2",
        "--lanes",
        "2",
        "--reps",
        "3",
        "--out",
        &report,
    ]);
    let text = fs::read_to_string(&report).unwrap();
    let parsed = parse_csv(text.as_bytes()).unwrap();
    assert_eq!(parsed.rows.len(), 2 * 2 * 2);
    for r in parsed.rows.iter().filter(|r| r.mode == Mode::Parallel) {
        let seq = parsed.row(r.k, r.batch_size, Mode::Sequential).unwrap();
        assert_eq!(
            r.speedup,
            Some(seq.elapsed_ns_median as f64 / r.elapsed_ns_median as f64)
        );
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = p(dir.path(), "x.json");

    // usage error
    assert_eq!(opnb(&["train"]).status.code(), Some(1));
    assert_eq!(opnb(&["bogus"]).status.code(), Some(1));
    assert_eq!(opnb(&["--help"]).status.code(), Some(0));

    // missing file
    let missing = p(dir.path(), "nope.jsonl");
    assert_eq!(
        opnb(&["train", "--in", &missing, "--out", &out_path]).status.code(),
        Some(3)
    );

    // integrity error
    let dup = p(dir.path(), "dup.jsonl");
    fs::write(
        &dup,
        "{\"id\":\"a\",\"label\":\"malware\",\"size_bytes\":1,\"opcodes\":{}}\n{\"id\":\"a\",\"label\":\"benign\",\"size_bytes\":1,\"opcodes\":{}}\n",
    )
    .unwrap();
    let out = opnb(&["train", "--in", &dup, "--out", &out_path]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"a\""));

    // config error
    let out = opnb(&[
        "split", "--in", &dup, "--ratio", "2-1", "--train", &out_path, "--test", &out_path,
    ]);
    assert_eq!(out.status.code(), Some(1));
    let out = opnb(&["train", "--in", &dup, "--group-kb", "3", "--out", &out_path]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn classify_with_empty_bundle_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = p(dir.path(), "c.jsonl");
    let bundle = p(dir.path(), "b.json");
    // one benign only: no trainable group
    fs::write(
        &corpus,
        "{\"id\":\"a\",\"label\":\"benign\",\"size_bytes\":1,\"opcodes\":{\"mov\":1}}\n",
    )
    .unwrap();
    ok(&["train", "--in", &corpus, "--out", &bundle]);
    let out = opnb(&[
        "classify",
        "--bundle",
        &bundle,
        "--in",
        &corpus,
        "--out",
        &p(dir.path(), "o.jsonl"),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
