//! Acceptance criteria for the primary component. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any fail.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sensorchain_api::{router, AppState};
use sensorchain_cli::{cmd_evaluate, EvaluateArgs, FitArgs};
use sensorchain_core::dataset::{prepare, FeatureKind, FeatureMatrix, PrepareConfig};
use sensorchain_core::experiment::sample_records;
use sensorchain_core::ledger::{
    create_genesis, load, persist, reseal, validate_chain, ChainState, LedgerError,
};
use sensorchain_core::metrics::evaluate;
use sensorchain_core::nn::{
    adam_step, backward, init_network, AdamState, LayerParams, ModelParameters, TrainConfig,
    DEFAULT_HIDDEN,
};
use sensorchain_core::peer::{run_scenario, Scenario};
use sensorchain_core::MetricsFile;
use serde_json::{json, Value};
use support::*;
use tower::ServiceExt;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn gradient_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut nets, mut worst, mut params) = (0, 0.0f64, 0);
    while nets < 25 {
        let p = random_net(&mut rng, 200);
        let Some((xs, ys)) = batch_away_from_kinks(&mut rng, &p, 6, 1e-3) else {
            continue;
        };
        let analytic = flatten(&backward(&p, &FeatureMatrix::from_rows(&xs, &ys)).map_err(|e| e.to_string())?);
        let numeric = fd_gradient(&p, &xs, &ys, 1e-6);
        ensure!(analytic.len() == numeric.len(), "gradient length mismatch");
        for (a, n) in analytic.iter().zip(&numeric) {
            worst = worst.max(rel_err(*a, *n, 1e-6));
        }
        params += analytic.len();
        nets += 1;
    }
    ensure!(worst <= 1e-4, "max relative error {worst:.3e} > 1e-4");
    Ok(format!("{nets} nets, {params} parameters, max rel err {worst:.2e}"))
}

fn optimizer_contract() -> Outcome {
    let cfg = TrainConfig::default();
    let mut p = init_network(6, &[7, 5], 3).map_err(|e| e.to_string())?;
    let bits = |p: &ModelParameters| flatten(p).iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let before = bits(&p);
    let zeros = p.zeros_like();
    let mut state = AdamState::new(&p);
    for _ in 0..5 {
        adam_step(&mut p, &zeros, &mut state, &cfg).map_err(|e| e.to_string())?;
    }
    ensure!(bits(&p) == before, "zero gradient moved a parameter");

    let mut worst = 0.0f64;
    for g in [4.0, -0.37, 1e-3, 250.0] {
        let mut q = ModelParameters {
            layers: vec![
                LayerParams { inputs: 1, outputs: 1, weights: vec![1.0], biases: vec![0.0] },
                LayerParams { inputs: 1, outputs: 1, weights: vec![0.0], biases: vec![0.0] },
            ],
        };
        let mut grad = q.zeros_like();
        grad.layers[0].weights[0] = g;
        let mut s = AdamState::new(&q);
        adam_step(&mut q, &grad, &mut s, &cfg).map_err(|e| e.to_string())?;
        // after one step m̂ = g and v̂ = g²
        let m_hat = (1.0 - cfg.beta1) * g / (1.0 - cfg.beta1);
        let v_hat = (1.0 - cfg.beta2) * g * g / (1.0 - cfg.beta2);
        let expected = 1.0 - cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        worst = worst.max((q.layers[0].weights[0] - expected).abs());
    }
    ensure!(worst <= 1e-9, "first step off by {worst:.3e}");
    Ok(format!("zero gradient bit-exact over 5 steps, first step max err {worst:.1e}"))
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=1000);
        let scale = 10f64.powi(rng.gen_range(-3..4));
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) * scale + 50.0).collect();
        let p: Vec<f64> = y.iter().map(|v| v + rng.gen_range(-1.0..1.0) * scale * 0.3).collect();
        let got = evaluate(&y, &p).map_err(|e| e.to_string())?;
        let want = naive_metrics(&y, &p);
        for (g, w) in [(got.mae, want.mae), (got.mse, want.mse), (got.rmse, want.rmse), (got.evs, want.evs)] {
            worst = worst.max(rel_err(g, w, 1e-300));
        }
    }
    ensure!(worst <= 1e-9, "max relative deviation from oracle {worst:.3e}");
    let actual = [60.0, 53.0, 80.0, 70.0, 61.0, 74.0, 69.0];
    let predicted = [57.15, 63.34, 60.95, 57.98, 58.30, 62.39, 63.84];
    let r = evaluate(&actual, &predicted).map_err(|e| e.to_string())?;
    for (name, got, want) in [("MAE", r.mae, 9.1043), ("MSE", r.mse, 113.018), ("RMSE", r.rmse, 10.631)] {
        ensure!((got - want).abs() <= 1e-3, "worked example: {name} {got} vs {want}");
    }
    Ok(format!(
        "100 vectors, max rel dev {worst:.1e}; MAE {:.4} MSE {:.3} RMSE {:.3}",
        r.mae, r.mse, r.rmse
    ))
}

fn comparative() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let metrics_out = dir.path().join("metrics.json");
    let args = EvaluateArgs {
        csv: None,
        model: None,
        metrics_out: metrics_out.clone(),
        models_dir: None,
        fit: FitArgs {
            seed: 42,
            test_fraction: 0.2,
            epochs: 500,
            batch_size: 32,
            learning_rate: 1e-3,
            hidden: DEFAULT_HIDDEN.to_vec(),
        },
    };
    let started = Instant::now();
    cmd_evaluate(&args).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let text = std::fs::read_to_string(&metrics_out).map_err(|e| e.to_string())?;
    let metrics: MetricsFile = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let rmse = |name: &str| metrics.get(name).map(|r| r.rmse).ok_or(format!("{name} missing from metrics JSON"));
    let (dnn, gbt, linear) = (rmse("dnn")?, rmse("gbt")?, rmse("linear")?);
    ensure!(metrics.models.len() == 3, "expected three models, got {}", metrics.models.len());
    let summary = format!("RMSE dnn {dnn:.3} gbt {gbt:.3} (x1.10 = {:.3}) linear {linear:.3}", gbt * 1.10);
    ensure!(dnn <= gbt * 1.10, "{summary}: dnn above the GBT bound");
    ensure!(dnn <= linear, "{summary}: dnn above linear");
    ensure!(elapsed < Duration::from_secs(300), "took {:.0} s", elapsed.as_secs_f64());
    Ok(format!("{summary}; evaluate took {:.1} s", elapsed.as_secs_f64()))
}

fn check_features(m: &FeatureMatrix, what: &str) -> Result<usize, String> {
    let groups = m.indicator_columns();
    ensure!(!groups.is_empty(), "{what}: no one-hot columns");
    for i in 0..m.rows() {
        let row = m.row(i);
        for (j, v) in row.iter().enumerate() {
            ensure!(v.is_finite(), "{what} row {i} col {j} missing");
            ensure!((0.0..=1.0).contains(v), "{what} row {i} col {j} = {v}");
            if m.feature_kinds[j] == FeatureKind::Indicator {
                ensure!(*v == 0.0 || *v == 1.0, "{what} row {i} col {j} indicator {v}");
            }
        }
        let ones: f64 = row[groups.clone()].iter().sum();
        ensure!(ones == 1.0, "{what} row {i} one-hot sum {ones}");
        ensure!(m.y[i].is_finite(), "{what} row {i} target missing");
    }
    Ok(m.rows())
}

fn preprocessing() -> Outcome {
    let records = sample_records();
    let missing = records
        .iter()
        .filter(|r| {
            [r.water_temperature, r.turbidity, r.transducer_depth, r.wave_height, r.wave_period]
                .iter()
                .any(Option::is_none)
        })
        .count();
    let data = prepare(&records, &PrepareConfig::default()).map_err(|e| e.to_string())?;
    let rows = check_features(&data.train, "train")? + check_features(&data.test, "test")?;
    ensure!(rows == records.len(), "{rows} rows prepared from {}", records.len());
    Ok(format!(
        "{rows} rows x {} features checked, {missing} raw rows had missing values",
        data.train.cols
    ))
}

fn tamper_evidence() -> Outcome {
    let keys = test_keys();
    let auth = keys.authority_set();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let chain = build_chain(&keys, 49, &mut rng);
    ensure!(chain.len() == 50, "chain length {}", chain.len());
    let (mut detected, mut exact) = (0, 0);
    for trial in 0..1000 {
        let mut blocks = chain.clone().into_blocks();
        let i = rng.gen_range(0..blocks.len() - 1);
        let field = BLOCK_FIELDS[rng.gen_range(0..BLOCK_FIELDS.len())];
        mutate_field(&mut blocks[i], field, &mut rng);
        let resealed = trial % 2 == 1 && !matches!(field, "signature" | "hash" | "creator_key_id");
        if resealed {
            reseal(&mut blocks[i], &keys);
        }
        let own_link = matches!(field, "index" | "prev_hash") || (i == 0 && field == "network_id");
        let expect = if resealed && !own_link { i + 1 } else { i } as u64;
        if let Err(LedgerError::TamperDetected { index, .. }) =
            validate_chain(&ChainState::from_blocks_unchecked(blocks), &auth)
        {
            detected += 1;
            exact += usize::from(index == expect);
        }
    }
    ensure!(detected == 1000, "detected {detected}/1000");
    ensure!(exact == 1000, "{exact}/1000 blamed the expected block");
    Ok("detected 1000/1000, half of them with re-signed blocks; every trial blamed the expected block".into())
}

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/testdata/scenarios")
}

fn convergence() -> Outcome {
    let started = Instant::now();
    let mut notes = Vec::new();
    for (name, length) in [("fault_free", 11), ("offline_then_sync", 4)] {
        let script = std::fs::read_to_string(scenario_dir().join(format!("{name}.json"))).map_err(|e| e.to_string())?;
        let trace = run_scenario(&Scenario::from_json(&script).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let golden = std::fs::read_to_string(scenario_dir().join(format!("{name}.trace.json"))).map_err(|e| e.to_string())?;
        let rendered = serde_json::to_string_pretty(&trace).map_err(|e| e.to_string())? + "\n";
        ensure!(rendered == golden, "{name}: trace differs from golden file");
        let last = trace.snapshots.last().ok_or("empty trace")?;
        ensure!(last.nodes.len() == 5, "{name}: {} nodes", last.nodes.len());
        ensure!(
            last.nodes.iter().all(|n| n.online && n.length == length && n.head_hash == last.nodes[0].head_hash),
            "{name}: heads differ at the end"
        );
        ensure!(trace.converged, "{name}: not converged");
        if name == "offline_then_sync" {
            let before = &trace.snapshots[trace.snapshots.len() - 2];
            ensure!(last.event == "sync", "last event is {}", last.event);
            ensure!(before.nodes.iter().any(|n| n.length < length), "no node lagged before the sync round");
        }
        notes.push(format!("{name}: 5 heads equal at length {length}"));
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {:.2} s", elapsed.as_secs_f64());
    Ok(format!("{}; golden traces match ({:.2} s)", notes.join(", "), elapsed.as_secs_f64()))
}

fn persistence() -> Outcome {
    let keys = test_keys();
    let auth = keys.authority_set();
    let chain = build_chain(&keys, 99, &mut ChaCha8Rng::seed_from_u64(7));
    let mut buf = Vec::new();
    persist(&chain, &mut buf).map_err(|e| e.to_string())?;
    let loaded = load(buf.as_slice(), &auth).map_err(|e| e.to_string())?;
    ensure!(loaded == chain && loaded.len() == 100, "round trip changed the chain");
    validate_chain(&loaded, &auth).map_err(|e| e.to_string())?;

    let text = String::from_utf8(buf.clone()).map_err(|e| e.to_string())?;
    let line_starts: Vec<usize> = std::iter::once(0).chain(text.match_indices('\n').map(|(i, _)| i + 1)).collect();
    let line_of = |pos: usize| line_starts.partition_point(|&s| s <= pos) - 1;
    let positions = value_byte_positions(&text);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut wrong_line = 0;
    for &pos in &positions {
        let mut edited = buf.clone();
        let original = edited[pos];
        let mut b = original;
        while b == original {
            b = b"0123456789abcdefABCDEF.-x \"\\"[rng.gen_range(0..28)];
        }
        edited[pos] = b;
        match load(edited.as_slice(), &auth) {
            Err(LedgerError::CorruptChainFile { index, .. }) => wrong_line += usize::from(index as usize != line_of(pos)),
            other => return Err(format!("edit at byte {pos} not rejected: {other:?}")),
        }
    }
    ensure!(wrong_line == 0, "{wrong_line} edits blamed the wrong block");
    Ok(format!(
        "100 blocks round-trip; all {} value bytes edited, every edit rejected at its own block",
        positions.len()
    ))
}

async fn call(app: &axum::Router, req: Request<Body>) -> Result<(StatusCode, Value), String> {
    let resp = app.clone().oneshot(req).await.map_err(|e| e.to_string())?;
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), 1 << 20).await.map_err(|e| e.to_string())?;
    Ok((status, serde_json::from_slice(&bytes).unwrap_or(Value::Null)))
}

fn post_block(id: &str, bl: f64) -> Request<Body> {
    Request::post("/api/blocks")
        .header(header::CONTENT_TYPE, "application/json")
        .header(header::AUTHORIZATION, "Bearer acceptance")
        .body(Body::from(
            json!({"network_id": id, "predicted_battery_life": bl, "date_of_prediction": "2024-07-04"}).to_string(),
        ))
        .expect("request builds")
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).expect("request builds")
}

async fn api_consistency_async() -> Outcome {
    let keys = test_keys();
    let chain = ChainState::new(create_genesis(&keys, 0), &keys.authority_set()).map_err(|e| e.to_string())?;
    let state = Arc::new(AppState::new(chain, keys, 3, None, Some("acceptance".into())));
    let app = router(Arc::clone(&state), &[]);

    let (status, created) = call(&app, post_block("Montrose Beach", 64.25)).await?;
    ensure!(status == StatusCode::CREATED, "POST returned {status}");
    let (_, listed) = call(&app, get("/api/blocks?network_id=Montrose%20Beach")).await?;
    ensure!(listed["blocks"] == json!([created["block"]]), "GET did not return the posted block");

    let tasks: Vec<_> = (0..20)
        .map(|i| {
            let app = app.clone();
            tokio::spawn(async move { call(&app, post_block(&format!("beach-{}", i % 3), 55.0 + i as f64)).await })
        })
        .collect();
    let mut indices = BTreeSet::new();
    for t in tasks {
        let (status, body) = t.await.map_err(|e| e.to_string())??;
        ensure!(status == StatusCode::CREATED, "concurrent POST returned {status}");
        indices.insert(body["block"]["index"].as_u64().ok_or("no index")?);
    }
    ensure!(indices == (2..=21).collect(), "indices {indices:?}");
    let (_, status) = call(&app, get("/api/chain")).await?;
    ensure!(status["length"] == 22 && status["valid"] == true, "chain status {status}");
    validate_chain(&state.chain(), &state.authorities).map_err(|e| e.to_string())?;
    let mut seen = 0;
    for id in ["beach-0", "beach-1", "beach-2"] {
        let (_, listed) = call(&app, get(&format!("/api/blocks?network_id={id}"))).await?;
        seen += listed["blocks"].as_array().map_or(0, Vec::len);
    }
    ensure!(seen == 20, "{seen} of 20 concurrent blocks visible");
    Ok("POST then GET returns the block; 20 concurrent POSTs got indices 2..=21 and a valid chain".into())
}

fn api_consistency() -> Outcome {
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(api_consistency_async())
}

fn main() {
    let criteria: [Check; 9] = [
        ("gradient oracle", gradient_oracle),
        ("optimizer contract", optimizer_contract),
        ("metrics oracle", metrics_oracle),
        ("comparative claim", comparative),
        ("preprocessing", preprocessing),
        ("tamper evidence", tamper_evidence),
        ("replication convergence", convergence),
        ("persistence round trip", persistence),
        ("api consistency", api_consistency),
    ];
    let only = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, check) in criteria {
        if only.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail} [{secs:.1} s]"),
            Err(reason) => {
                failed += 1;
                println!("[FAIL] {name}: {reason} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
