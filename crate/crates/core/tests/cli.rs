use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qaoa_angles::angle_opt::AngleRecord;
use qaoa_angles::evalharness::{FoldAssignment, RatioSample};
use qaoa_angles::features::Encoding;
use qaoa_angles::recommend::{RecommendationOutcome, RecommendationSet};
use qaoa_angles::rqaoa::RqaoaTrace;
use qaoa_angles::store::{read_csv, read_json, read_jsonl, CACHE_ENV};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qaoa-angles"))
        .args(args)
        .current_dir(dir)
        .env_remove(CACHE_ENV)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn gen_standard_datasets_writes_300_lines() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "gen",
            "--paper-datasets",
            "--seed",
            "0",
            "--out",
            "inst.jsonl",
        ],
    );
    let text = fs::read_to_string(dir.path().join("inst.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 300);
    assert!(dir.path().join("inst.jsonl.config.json").exists());

    ok(
        dir.path(),
        &[
            "gen",
            "--paper-datasets",
            "--seed",
            "0",
            "--out",
            "again.jsonl",
        ],
    );
    assert_eq!(
        text,
        fs::read_to_string(dir.path().join("again.jsonl")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.csv"), "").unwrap();
    let out = run(
        dir.path(),
        &["report-ecdf", "--samples", "empty.csv", "--out", "e.csv"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    let out = run(dir.path(), &["gen", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(
        dir.path(),
        &["solve-exact", "--instances", "missing.jsonl", "--out", "x"],
    );
    assert_eq!(out.status.code(), Some(1));
    let out = run(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));

    // schema mismatch is a domain error naming the field
    fs::write(
        dir.path().join("bad.jsonl"),
        "{\"schema_version\":7,\"id\":\"x\"}\n",
    )
    .unwrap();
    let out = run(
        dir.path(),
        &["solve-exact", "--instances", "bad.jsonl", "--out", "x"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema_version"));
}

#[test]
fn small_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "gen",
            "--kind",
            "maxcut",
            "--nodes",
            "6,7",
            "--probs",
            "0.5,0.7",
            "--count",
            "5",
            "--seed",
            "3",
            "--out",
            "inst.jsonl",
        ],
    );
    ok(
        d,
        &[
            "solve-exact",
            "--instances",
            "inst.jsonl",
            "--out",
            "exact.jsonl",
        ],
    );
    let build = [
        "build-db",
        "--instances",
        "inst.jsonl",
        "--exact",
        "exact.jsonl",
        "--depths",
        "1,2",
        "--restarts",
        "4",
        "--seed",
        "3",
        "--out",
        "db.jsonl",
    ];
    ok(d, &build);
    let db: Vec<AngleRecord> = read_jsonl(&d.join("db.jsonl")).unwrap();
    assert_eq!(db.len(), 40);
    let first = fs::read(d.join("db.jsonl")).unwrap();
    ok(d, &build);
    assert_eq!(
        first,
        fs::read(d.join("db.jsonl")).unwrap(),
        "resume is idempotent"
    );

    ok(
        d,
        &[
            "encode",
            "--instances",
            "inst.jsonl",
            "--features",
            "--out",
            "feat.jsonl",
        ],
    );
    let feats: Vec<Encoding> = read_jsonl(&d.join("feat.jsonl")).unwrap();
    assert!(feats.len() >= 18 && feats.iter().all(|e| e.vector.len() == 6));
    ok(
        d,
        &[
            "encode",
            "--instances",
            "inst.jsonl",
            "--angles",
            "--angle-db",
            "db.jsonl",
            "--depth",
            "2",
            "--out",
            "ang.jsonl",
        ],
    );
    ok(
        d,
        &[
            "cluster",
            "--encodings",
            "feat.jsonl",
            "--k",
            "3",
            "--out",
            "model.json",
        ],
    );
    let out = run(
        d,
        &[
            "cluster",
            "--encodings",
            "feat.jsonl",
            "--k",
            "3",
            "--rule",
            "centroid",
            "--out",
            "m2.json",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(1),
        "centroids of features are not angles"
    );
    ok(
        d,
        &[
            "recommend",
            "--cluster-model",
            "model.json",
            "--angle-db",
            "db.jsonl",
            "--depth",
            "1",
            "--test",
            "inst.jsonl",
            "--out",
            "outcomes.jsonl",
        ],
    );
    let outcomes: Vec<RecommendationOutcome> = read_jsonl(&d.join("outcomes.jsonl")).unwrap();
    assert_eq!(outcomes.len(), 20);
    assert!(outcomes.iter().all(|o| o.circuit_calls == 3));
    let set: RecommendationSet = read_json(&d.join("outcomes.jsonl.recset.json")).unwrap();
    assert_eq!(set.k(), 3);

    ok(
        d,
        &[
            "eval-cv",
            "--instances",
            "inst.jsonl",
            "--angle-db",
            "db.jsonl",
            "--method",
            "angles",
            "--k",
            "2,3",
            "--depths",
            "1,2",
            "--out",
            "cv.csv",
            "--fold-file",
            "folds.jsonl",
        ],
    );
    let samples: Vec<RatioSample> = read_csv(&d.join("cv.csv")).unwrap();
    assert_eq!(samples.len(), 20 * 2 * 2);
    let folds: Vec<FoldAssignment> = read_jsonl(&d.join("folds.jsonl")).unwrap();
    assert_eq!(folds.len(), 20);
    assert!(d.join("cv.csv.summary.json").exists());
    ok(
        d,
        &[
            "eval-size-split",
            "--instances",
            "inst.jsonl",
            "--angle-db",
            "db.jsonl",
            "--method",
            "features",
            "--depths",
            "1",
            "--out",
            "split.csv",
        ],
    );
    let split: Vec<RatioSample> = read_csv(&d.join("split.csv")).unwrap();
    assert!(split.iter().all(|s| s.instance_id.contains("-n7-")));

    ok(
        d,
        &[
            "report-ecdf",
            "--samples",
            "cv.csv,split.csv",
            "--out",
            "ecdf.csv",
        ],
    );
    let ecdf = fs::read_to_string(d.join("ecdf.csv")).unwrap();
    assert!(ecdf.starts_with("method,t,f"));

    ok(
        d,
        &[
            "rqaoa",
            "--instances",
            "inst.jsonl",
            "--rec-sets",
            "outcomes.jsonl.recset.json",
            "--baseline",
            "random",
            "--exact",
            "exact.jsonl",
            "--out",
            "traces.jsonl",
        ],
    );
    let traces: Vec<RqaoaTrace> = read_jsonl(&d.join("traces.jsonl")).unwrap();
    assert_eq!(traces.len(), 40);
    for t in &traces {
        assert_eq!(t.circuit_calls, 3 * t.eliminations.len());
    }
    let summary = fs::read_to_string(d.join("traces.jsonl.summary.json")).unwrap();
    assert!(summary.contains("attribution"));
}
