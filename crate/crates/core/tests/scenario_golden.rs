//! Golden traces for the scripted peer scenarios in `testdata/scenarios`.
//! Set `UPDATE_GOLDEN=1` to rewrite the `.trace.json` files after an intended change.

mod support;

use std::path::{Path, PathBuf};

use sensorchain_core::peer::{run_scenario, Scenario, ScenarioTrace};
use support::replay_lengths;

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/scenarios")
}

fn run(name: &str) -> (serde_json::Value, ScenarioTrace) {
    let path = dir().join(format!("{name}.json"));
    let text = std::fs::read_to_string(&path).unwrap();
    let scenario = Scenario::from_json(&text).unwrap();
    let trace = run_scenario(&scenario).unwrap();
    check_golden(&dir().join(format!("{name}.trace.json")), &trace);
    (serde_json::from_str(&text).unwrap(), trace)
}

fn check_golden(path: &Path, trace: &ScenarioTrace) {
    let rendered = serde_json::to_string_pretty(trace).unwrap() + "\n";
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(path, &rendered).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e} (run with UPDATE_GOLDEN=1 to create)", path.display()));
    assert_eq!(rendered, expected, "trace differs from {}", path.display());
}

fn events(script: &serde_json::Value) -> (usize, Vec<serde_json::Value>) {
    match script {
        serde_json::Value::Array(evs) => (5, evs.clone()),
        obj => (
            obj["nodes"].as_u64().unwrap_or(5) as usize,
            obj["events"].as_array().unwrap().clone(),
        ),
    }
}

/// Compares every snapshot's per-node length and online flag with the replay model.
fn assert_matches_replay(script: &serde_json::Value, trace: &ScenarioTrace) {
    let (n, evs) = events(script);
    let expected = replay_lengths(n, &evs);
    assert_eq!(expected.len(), trace.snapshots.len());
    for (step, (want, snap)) in expected.iter().zip(&trace.snapshots).enumerate() {
        for (w, got) in want.iter().zip(&snap.nodes) {
            assert_eq!((w.online, w.length), (got.online, got.length), "step {step} {}", got.node_id);
        }
    }
}

#[test]
fn fault_free_ten_broadcasts() {
    let started = std::time::Instant::now();
    let (script, trace) = run("fault_free");
    assert_matches_replay(&script, &trace);
    let last = trace.snapshots.last().unwrap();
    assert_eq!(last.nodes.len(), 5);
    assert!(last.nodes.iter().all(|n| n.length == 11 && n.head_hash == last.nodes[0].head_hash));
    assert!(trace.converged);
    assert!(started.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn offline_node_catches_up_in_one_sync_round() {
    let (script, trace) = run("offline_then_sync");
    assert_matches_replay(&script, &trace);
    let before_sync = &trace.snapshots[trace.snapshots.len() - 2];
    assert_eq!(before_sync.nodes[3].length, 1);
    let last = trace.snapshots.last().unwrap();
    assert_eq!(last.event, "sync");
    assert!(last.nodes.iter().all(|n| n.length == 4 && n.head_hash == last.nodes[0].head_hash));
    assert!(trace.converged);
}

#[test]
fn divergence_reported_only_for_offline_nodes() {
    let (script, trace) = run("offline_at_end");
    assert_matches_replay(&script, &trace);
    assert!(trace.converged);
    assert_eq!(trace.divergent_offline, vec!["node-4".to_string()]);
    let forged = trace.snapshots.iter().find(|s| s.event == "broadcast_forged").unwrap();
    let delivery = forged.delivery.as_ref().unwrap();
    assert_eq!((delivery.accepted, delivery.rejected, delivery.unreachable), (0, 4, 1));
}
