use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privlabel")).current_dir(dir).args(args).output().unwrap()
}

/// Stdout followed by stderr.
fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap() + &String::from_utf8(out.stderr).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().unwrap()
}

#[test]
fn staged_workflow_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let flights = fixtures().join("flights.tsv");
    ok(d, &["ingest", "--input", flights.to_str().unwrap(), "--out", "corpus.jsonl"]);
    ok(d, &["split", "--input", "corpus.jsonl", "--ratios", "0.7,0.1,0.2", "--seed", "3", "--out-dir", "splits"]);
    ok(d, &["fit-codec", "--input", "splits/pretrain.jsonl", "--dim", "64", "--prior-weight", "0.15", "--out", "codec.json"]);
    let released = ok(
        d,
        &[
            "rewrite", "--input", "splits/crowdsourcing.jsonl", "--pipeline", "dp_only", "--codec", "codec.json",
            "--epsilon", "3333", "--versions", "3", "--seed", "4", "--out", "rw.jsonl",
        ],
    );
    assert!(released.contains("total epsilon 9999"), "{released}");
    ok(d, &["export-hits", "--rewritten", "rw.jsonl", "--out", "hits.jsonl"]);
    let hits = fs::read_to_string(d.join("hits.jsonl")).unwrap();
    assert_eq!(hits.lines().count(), 160 * 3);
    assert!(!hits.contains("target"));

    ok(d, &["simulate", "--hits", "hits.jsonl", "--lexicon", "atis", "--per-version", "3", "--seed", "2", "--out", "ann.jsonl"]);
    ok(d, &["import-annotations", "--hits", "hits.jsonl", "--input", "ann.jsonl", "--out", "imported.jsonl"]);
    assert_eq!(fs::read(d.join("ann.jsonl")).unwrap(), fs::read(d.join("imported.jsonl")).unwrap());

    for method in ["mv", "t:0", "mace", "mv_mv", "mace_mv", "mace_t0"] {
        ok(d, &["aggregate", "--annotations", "ann.jsonl", "--method", method, "--out", "labels.jsonl"]);
        let report: serde_json::Value =
            serde_json::from_str(&ok(d, &["eval", "f1", "--pred", "labels.jsonl", "--gold", "splits/crowdsourcing.jsonl", "--json"]))
                .unwrap();
        let f1 = report["f1"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&f1));
    }
    let sig = ok(d, &["eval", "sig", "--pred-a", "labels.jsonl", "--pred-b", "labels.jsonl", "--gold", "splits/crowdsourcing.jsonl"]);
    assert!(sig.contains("1.0000,false"), "{sig}");
    let hist = ok(d, &["eval", "copied", "--gold", "splits/crowdsourcing.jsonl", "--rewritten", "rw.jsonl", "--version", "v2"]);
    assert!(hist.starts_with("bucket,count,fraction\n0,"));
    ok(d, &["eval", "indicator", "--gold", "splits/crowdsourcing.jsonl", "--lexicon", "atis"]);
    ok(d, &["eval", "terms", "--gold", "splits/crowdsourcing.jsonl", "--k", "5"]);
    let share = ok(d, &["eval", "share", "--gold", "splits/crowdsourcing.jsonl"]);
    assert!(share.starts_with("target_share\n"));
}

#[test]
fn pii_rewrite_matches_memphis_example() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("c.tsv"), "m1\tnon_target\twhat flights from indianapolis to memphis\n").unwrap();
    fs::write(d.join("loc.txt"), "indianapolis\n").unwrap();
    ok(d, &["rewrite", "--input", "c.tsv", "--pipeline", "pii_only", "--locations", "loc.txt", "--out", "rw.jsonl"]);
    let line = fs::read_to_string(d.join("rw.jsonl")).unwrap();
    assert_eq!(line.trim(), r#"{"item_id":"m1","version_id":"v0","text":"what flights from <LOCATION> to memphis"}"#);
}

#[test]
fn exit_codes_separate_config_from_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("c.tsv"), "a\ttarget\thow much is it\n").unwrap();
    fs::write(d.join("bad.tsv"), "a\tmaybe\thello\n").unwrap();
    fs::write(d.join("bad.json"), r#"{"bogus": 1}"#).unwrap();

    assert_eq!(code(d, &["rewrite", "--input", "c.tsv", "--pipeline", "dp_only", "--epsilon", "5", "--out", "x.jsonl"]), 2);
    assert_eq!(code(d, &["split", "--input", "c.tsv", "--ratios", "0.5,0.6,0.2", "--out-dir", "s"]), 2);
    assert_eq!(code(d, &["experiment", "--config", "bad.json", "--out", "e"]), 2);
    assert_eq!(code(d, &["aggregate", "--annotations", "x", "--method", "wat", "--out", "y"]), 2);
    assert_eq!(code(d, &["ingest", "--input", "missing.tsv", "--out", "y.jsonl"]), 3);
    assert_eq!(code(d, &["ingest", "--input", "bad.tsv", "--out", "y.jsonl"]), 3);

    let config = fixtures().join("pipelines.json");
    fs::create_dir(d.join("busy")).unwrap();
    fs::write(d.join("busy/keep"), "").unwrap();
    assert_eq!(code(d, &["experiment", "--config", config.to_str().unwrap(), "--out", "busy"]), 2);
}
