//! HTTP routes exercised in-process.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

use common::full_dictionary;
use transfer_taxonomy::engine::solve_affinity;
use transfer_taxonomy::service::{load_datasets, router, AppState};
use transfer_taxonomy::synth::{gen_synthetic, SyntheticSpec};
use transfer_taxonomy::SolverConfig;

struct Fixture {
    dir: TempDir,
    state: AppState,
    app: Router,
}

fn fixture(max_concurrent: usize) -> Fixture {
    let dir = TempDir::new().unwrap();
    let spec = SyntheticSpec { max_order: 2, ..SyntheticSpec::new(8, 100, 8, 0.05, 1) };
    gen_synthetic(&spec).unwrap().write_dir(&dir.path().join("synth")).unwrap();
    let full = dir.path().join("full");
    std::fs::create_dir_all(&full).unwrap();
    std::fs::write(full.join("dict.json"), full_dictionary().to_json()).unwrap();
    std::fs::create_dir_all(dir.path().join("not-a-dataset")).unwrap();
    let state = AppState::new(load_datasets(dir.path()).unwrap(), max_concurrent);
    let app = router(state.clone(), Some("http://localhost:5173")).unwrap();
    Fixture { dir, state, app }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn parse(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

#[tokio::test]
async fn lists_and_describes_datasets() {
    let f = fixture(4);
    let (status, body) = call(&f.app, "GET", "/datasets", None).await;
    assert_eq!(status, StatusCode::OK);
    let list = parse(&body);
    let ids: Vec<&str> = list["datasets"].as_array().unwrap().iter().map(|d| d["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["full", "synth"]);

    let (status, body) = call(&f.app, "GET", "/datasets/full", None).await;
    assert_eq!(status, StatusCode::OK);
    let meta = parse(&body);
    let tasks = meta["tasks"].as_array().unwrap();
    assert_eq!(tasks.len(), 26);
    assert_eq!(tasks.iter().filter(|t| t["target"] == false).count(), 4);
    assert!(tasks.iter().all(|t| t["source"] == true));
    assert_eq!(meta["available_orders"], json!([1]));
    assert_eq!(meta["has_records"], false);

    let (_, body) = call(&f.app, "GET", "/datasets/synth", None).await;
    let meta = parse(&body);
    assert_eq!(meta["available_orders"], json!([1, 2]));
    assert_eq!(meta["affinity"]["edges_per_order"]["1"], 8 * 8);

    let (status, body) = call(&f.app, "GET", "/datasets/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(parse(&body)["error"]["code"], "NOT_FOUND");
}

#[tokio::test]
async fn affinity_and_tree_routes() {
    let f = fixture(4);
    let (status, body) = call(&f.app, "GET", "/datasets/synth/affinity", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(parse(&body)["targets"].as_object().unwrap().len(), 8);

    let (status, body) = call(&f.app, "GET", "/datasets/synth/tree", None).await;
    assert_eq!(status, StatusCode::OK);
    let tree = parse(&body);
    assert!(tree["newick"].as_str().unwrap().ends_with(';'));
    assert_eq!(tree["dendrogram"]["merges"].as_array().unwrap().len(), 7);

    // No affinity, no tree.
    let (status, _) = call(&f.app, "GET", "/datasets/full/tree", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn solve_matches_cli_bytes() {
    let f = fixture(4);
    let (status, body) = call(&f.app, "POST", "/datasets/synth/solve", Some(json!({"budget": 2, "max_order": 2}))).await;
    assert_eq!(status, StatusCode::OK);

    let data = f.dir.path().join("synth");
    let aff = f.dir.path().join("aff.json");
    let out = f.dir.path().join("tax.json");
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    let run = |args: &[String]| {
        let o = Command::new(env!("CARGO_BIN_EXE_taxo")).args(args).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run(&["normalize".into(), "--records".into(), s(&data.join("records.ndjson")), "--dict".into(), s(&data.join("dict.json")), "--out".into(), s(&aff)]);
    run(&[
        "solve".into(),
        "--affinity".into(),
        s(&aff),
        "--dict".into(),
        s(&data.join("dict.json")),
        "--budget".into(),
        "2".into(),
        "--max-order".into(),
        "2".into(),
        "--out".into(),
        s(&out),
    ]);
    assert_eq!(body, std::fs::read_to_string(out).unwrap());
}

#[tokio::test]
async fn solve_errors_carry_codes() {
    let f = fixture(4);
    let (status, body) = call(&f.app, "POST", "/datasets/synth/solve", Some(json!({"budget": 0.5}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let err = parse(&body);
    assert_eq!(err["error"]["code"], "INFEASIBLE");
    assert!(err["error"]["message"].as_str().unwrap().starts_with("E:INFEASIBLE:"));

    let (status, body) = call(&f.app, "POST", "/datasets/synth/solve", Some(json!({"budget": 2, "importance": {"zzz": 1.0}}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(parse(&body)["error"]["code"], "UNKNOWN_TASK");

    let (status, body) = call(&f.app, "POST", "/datasets/synth/solve", Some(json!({"budget": 2, "beam": 3}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(parse(&body)["error"]["code"], "SCHEMA");

    let (status, _) = call(&f.app, "POST", "/datasets/nope/solve", Some(json!({"budget": 2}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn budget_sweep_is_monotone_and_repeatable() {
    let f = fixture(4);
    let mut last = f64::NEG_INFINITY;
    for b in 1..=8 {
        let req = json!({"budget": b, "max_order": 2});
        let (status, body) = call(&f.app, "POST", "/datasets/synth/solve", Some(req.clone())).await;
        assert_eq!(status, StatusCode::OK);
        let (_, again) = call(&f.app, "POST", "/datasets/synth/solve", Some(req)).await;
        assert_eq!(body, again);
        let obj = parse(&body)["objective"].as_f64().unwrap();
        assert!(obj + 1e-9 >= last);
        last = obj;
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_identical_requests_agree() {
    let f = fixture(16);
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let app = f.app.clone();
            tokio::spawn(async move {
                call(&app, "POST", "/datasets/synth/solve", Some(json!({"budget": 3, "max_order": 2}))).await
            })
        })
        .collect();
    let mut bodies = Vec::new();
    for h in handles {
        let (status, body) = h.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        bodies.push(body);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test]
async fn saturated_pool_answers_busy() {
    let f = fixture(1);
    let held = f.state.try_reserve_solve().unwrap();
    let (status, body) = call(&f.app, "POST", "/datasets/synth/solve", Some(json!({"budget": 3}))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(parse(&body)["error"]["code"], "BUSY");
    drop(held);
    let (status, _) = call(&f.app, "POST", "/datasets/synth/solve", Some(json!({"budget": 3}))).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn significance_is_deterministic_and_dominated() {
    let f = fixture(4);
    let req = json!({"budget": 8, "max_order": 2, "samples": 300, "seed": 4});
    let (status, body) = call(&f.app, "POST", "/datasets/synth/significance", Some(req.clone())).await;
    assert_eq!(status, StatusCode::OK);
    let (_, again) = call(&f.app, "POST", "/datasets/synth/significance", Some(req)).await;
    assert_eq!(body, again);
    let report = parse(&body);
    assert_eq!(report["random_objectives"].as_array().unwrap().len(), 300);
    let opt = report["optimal_objective"].as_f64().unwrap();
    assert!(report["random_objectives"].as_array().unwrap().iter().all(|v| v.as_f64().unwrap() <= opt + 1e-9));

    // The optimum reported equals the solve route's.
    let (_, tax) = call(&f.app, "POST", "/datasets/synth/solve", Some(json!({"budget": 8, "max_order": 2}))).await;
    assert_eq!(parse(&tax)["objective"].as_f64().unwrap(), opt);

    let (status, body) = call(&f.app, "POST", "/datasets/synth/significance", Some(json!({"budget": 0.5, "samples": 10}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(parse(&body)["error"]["code"], "INFEASIBLE");
}

#[tokio::test]
async fn significance_streams_progress_then_report() {
    let f = fixture(4);
    let req = json!({"budget": 8, "samples": 250, "seed": 4, "stream": true});
    let (status, body) = call(&f.app, "POST", "/datasets/synth/significance", Some(req)).await;
    assert_eq!(status, StatusCode::OK);
    let lines: Vec<Value> = body.lines().map(parse).collect();
    let progress: Vec<u64> = lines[..lines.len() - 1].iter().map(|l| l["progress"].as_u64().unwrap()).collect();
    assert_eq!(progress, [100, 200, 250]);
    assert!(lines[..lines.len() - 1].iter().all(|l| l["total"] == 250));
    let report = &lines.last().unwrap()["report"];
    assert_eq!(report["sample_count"], 250);

    // Same samples as the non-streaming form.
    let (_, plain) = call(&f.app, "POST", "/datasets/synth/significance", Some(json!({"budget": 8, "samples": 250, "seed": 4}))).await;
    assert_eq!(&parse(&plain), report);

    let (status, _) = call(&f.app, "POST", "/datasets/synth/significance", Some(json!({"budget": 0.5, "samples": 10, "stream": true}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn ten_thousand_samples_within_ten_seconds() {
    let f = fixture(4);
    let start = Instant::now();
    let (status, body) = call(&f.app, "POST", "/datasets/synth/significance", Some(json!({"budget": 8, "max_order": 2, "samples": 10000}))).await;
    let elapsed = start.elapsed();
    assert_eq!(status, StatusCode::OK);
    assert_eq!(parse(&body)["sample_count"], 10000);
    assert!(elapsed.as_secs_f64() < 10.0, "{elapsed:?}");
}

#[tokio::test]
async fn cors_allows_the_configured_origin() {
    let f = fixture(4);
    let req = Request::builder()
        .method("GET")
        .uri("/datasets")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = f.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "http://localhost:5173");
}

#[test]
fn solve_route_agrees_with_library() {
    let f = fixture(1);
    let datasets = load_datasets(f.dir.path()).unwrap();
    let d = &datasets["synth"];
    let tax = solve_affinity(&d.affinity, &d.dict, 1, &SolverConfig::with_budget(3.0)).unwrap();
    let rt = tokio::runtime::Runtime::new().unwrap();
    let (_, body) = rt.block_on(call(&f.app, "POST", "/datasets/synth/solve", Some(json!({"budget": 3}))));
    assert_eq!(body, tax.to_json());
}
