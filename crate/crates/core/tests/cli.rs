//! End-to-end runs of the `taxo` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

use transfer_taxonomy::ahp::AffinityMatrix;
use transfer_taxonomy::domain::{EvaluationRecordStore, TaskDictionary};
use transfer_taxonomy::engine::{normalize, solve_affinity};
use transfer_taxonomy::sampler::SamplerConfig;
use transfer_taxonomy::{SolverConfig, Taxonomy};

fn taxo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taxo")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = taxo(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generates a dataset under `dir/data` and normalizes it to `dir/affinity.json`.
fn pipeline(dir: &Path, seed: &str) -> (PathBuf, PathBuf) {
    let data = dir.join("data");
    ok(&["gen-synthetic", "--tasks", "6", "--images", "40", "--seed", seed, "--out", s(&data)]);
    let aff = dir.join("affinity.json");
    ok(&[
        "normalize",
        "--records",
        s(&data.join("records.ndjson")),
        "--dict",
        s(&data.join("dict.json")),
        "--out",
        s(&aff),
    ]);
    (data, aff)
}

#[test]
fn generate_normalize_solve_matches_library_bytes() {
    let tmp = TempDir::new().unwrap();
    let (data, aff) = pipeline(tmp.path(), "3");
    let out = tmp.path().join("tax.json");
    let dot = tmp.path().join("tax.dot");
    ok(&[
        "solve",
        "--affinity",
        s(&aff),
        "--dict",
        s(&data.join("dict.json")),
        "--budget",
        "2",
        "--max-order",
        "2",
        "--out",
        s(&out),
        "--dot",
        s(&dot),
    ]);

    let dict = TaskDictionary::from_json(&fs::read_to_string(data.join("dict.json")).unwrap()).unwrap();
    let store = EvaluationRecordStore::read_ndjson(
        &dict,
        fs::read(data.join("records.ndjson")).unwrap().as_slice(),
        false,
    )
    .unwrap();
    let affinity = normalize(&store, &dict, &SamplerConfig::with_max_order(2)).unwrap();
    assert_eq!(fs::read_to_string(&aff).unwrap(), affinity.to_json());
    let tax = solve_affinity(&affinity, &dict, 2, &SolverConfig::with_budget(2.0)).unwrap();
    let cli = fs::read_to_string(&out).unwrap();
    assert_eq!(cli, tax.to_json());

    // Reloads validate.
    let reloaded = Taxonomy::from_json(&cli).unwrap();
    reloaded.validate(&dict).unwrap();
    AffinityMatrix::from_json(&fs::read_to_string(&aff).unwrap()).unwrap().validate(&dict).unwrap();
    let dot = fs::read_to_string(&dot).unwrap();
    assert!(dot.starts_with("digraph"));
}

#[test]
fn whole_pipeline_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let (_, aff_a) = pipeline(a.path(), "11");
    let (_, aff_b) = pipeline(b.path(), "11");
    for f in ["data/dict.json", "data/records.ndjson", "data/truth.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(fs::read(aff_a).unwrap(), fs::read(aff_b).unwrap());
}

#[test]
fn infeasible_budget_exits_with_code() {
    let tmp = TempDir::new().unwrap();
    let (data, aff) = pipeline(tmp.path(), "1");
    let out = taxo(&[
        "solve",
        "--affinity",
        s(&aff),
        "--dict",
        s(&data.join("dict.json")),
        "--budget",
        "0.5",
        "--max-order",
        "1",
        "--out",
        s(&tmp.path().join("never.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("E:INFEASIBLE:"), "{err}");
    assert!(!tmp.path().join("never.json").exists());
}

#[test]
fn significance_csv_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let (data, aff) = pipeline(tmp.path(), "5");
    let run = |name: &str| {
        let csv = tmp.path().join(format!("{name}.csv"));
        let json = tmp.path().join(format!("{name}.json"));
        ok(&[
            "significance",
            "--affinity",
            s(&aff),
            "--dict",
            s(&data.join("dict.json")),
            "--budget",
            "6",
            "--samples",
            "100",
            "--seed",
            "9",
            "--out",
            s(&json),
            "--csv",
            s(&csv),
        ]);
        (fs::read_to_string(csv).unwrap(), fs::read_to_string(json).unwrap())
    };
    let (c1, j1) = run("a");
    let (c2, j2) = run("b");
    assert_eq!(c1, c2);
    assert_eq!(j1, j2);
    assert_eq!(c1.lines().count(), 101);
    let report: serde_json::Value = serde_json::from_str(&j1).unwrap();
    assert!(report["optimal_objective"].as_f64().unwrap() >= report["max"].as_f64().unwrap());
}

#[test]
fn family_writes_one_file_per_cell() {
    let tmp = TempDir::new().unwrap();
    let (data, aff) = pipeline(tmp.path(), "2");
    let out = tmp.path().join("family");
    ok(&[
        "family",
        "--affinity",
        s(&aff),
        "--dict",
        s(&data.join("dict.json")),
        "--budgets",
        "1..6",
        "--orders",
        "1..2",
        "--out",
        s(&out),
    ]);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 12);
    for o in 1..=2 {
        let mut last = f64::NEG_INFINITY;
        for b in 1..=6 {
            let path = out.join(format!("taxonomy_order{o}_budget{b}.json"));
            let tax = Taxonomy::from_json(&fs::read_to_string(&path).unwrap()).unwrap();
            assert!(tax.objective + 1e-9 >= last);
            last = tax.objective;
        }
    }
}

#[test]
fn localize_and_tree() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    ok(&["gen-synthetic", "--tasks", "5", "--images", "30", "--seed", "4", "--out", s(&data)]);

    // Records of t04 stand in for a novel task against the other four.
    let dict_json = fs::read_to_string(data.join("dict.json")).unwrap();
    let dict: serde_json::Value = serde_json::from_str(&dict_json).unwrap();
    let others: Vec<serde_json::Value> =
        dict["tasks"].as_array().unwrap().iter().filter(|t| t["name"] != "t04").cloned().collect();
    let base = tmp.path().join("base.json");
    fs::write(&base, serde_json::json!({"format_version": 1, "tasks": others}).to_string()).unwrap();
    let records: String = fs::read_to_string(data.join("records.ndjson"))
        .unwrap()
        .lines()
        .filter(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["target"] == "t04" && !v["sources"].as_array().unwrap().iter().any(|s| s == "t04")
        })
        .map(|l| format!("{l}\n"))
        .collect();
    let novel = tmp.path().join("novel.ndjson");
    fs::write(&novel, records).unwrap();
    let out = tmp.path().join("local.json");
    ok(&[
        "localize",
        "--target",
        "t04",
        "--records",
        s(&novel),
        "--dict",
        s(&base),
        "--budget",
        "1",
        "--max-order",
        "1",
        "--out",
        s(&out),
    ]);
    let tax: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(tax["policy"].as_array().unwrap().len(), 1);
    assert_eq!(tax["policy"][0]["target"], "t04");

    let aff = tmp.path().join("affinity.json");
    ok(&[
        "normalize",
        "--records",
        s(&data.join("records.ndjson")),
        "--dict",
        s(&data.join("dict.json")),
        "--out",
        s(&aff),
        "--max-order",
        "1",
    ]);
    let nwk = tmp.path().join("tree.nwk");
    let json = tmp.path().join("tree.json");
    ok(&["tree", "--affinity", s(&aff), "--out", s(&nwk), "--json", s(&json)]);
    let newick = fs::read_to_string(&nwk).unwrap();
    assert!(newick.trim_end().ends_with(';'));
    for t in ["t00", "t01", "t02", "t03", "t04"] {
        assert!(newick.contains(t), "{newick}");
    }
    let tree: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(tree["merges"].as_array().unwrap().len(), 4);
}

#[test]
fn bad_inputs_report_codes() {
    let tmp = TempDir::new().unwrap();
    let dict = tmp.path().join("dict.json");
    fs::write(&dict, r#"{"tasks":[{"name":"a","source":true,"target":true},{"name":"b","source":true,"target":true}]}"#)
        .unwrap();
    let recs = tmp.path().join("r.ndjson");
    let aff = tmp.path().join("aff.json");
    let run = |records: &str| {
        fs::write(&recs, records).unwrap();
        taxo(&["normalize", "--records", s(&recs), "--dict", s(&dict), "--out", s(&aff)])
    };
    let stderr = |o: &Output| String::from_utf8_lossy(&o.stderr).into_owned();

    let o = run("{\"sources\":[\"zzz\"],\"target\":\"a\",\"image\":\"0\",\"score\":1}\n");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("E:UNKNOWN_TASK:"), "{}", stderr(&o));

    let o = run("not json\n");
    assert!(stderr(&o).starts_with("E:SCHEMA:"), "{}", stderr(&o));

    let o = run(concat!(
        "{\"sources\":[\"b\"],\"target\":\"a\",\"image\":\"0\",\"score\":1}\n",
        "{\"sources\":[\"a\"],\"target\":\"a\",\"image\":\"1\",\"score\":1}\n",
    ));
    assert!(stderr(&o).starts_with("E:IMAGESET:"), "{}", stderr(&o));

    let o = taxo(&["solve", "--budget", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("E:SCHEMA:"), "{}", stderr(&o));

    let o = taxo(&["--help"]);
    assert!(o.status.success());
}
