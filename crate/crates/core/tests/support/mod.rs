//! Independent reference implementations used as test oracles. Nothing here calls
//! the code under test except to build inputs.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sensorchain_core::ledger::{
    append, create_block, create_genesis, AuthorityKeys, AuthoritySet, BlockContent, ChainState,
    PredictionBlock,
};
use sensorchain_core::nn::{LayerParams, ModelParameters};

// ---- network ----

/// Plain-loop forward pass. Returns the prediction and every pre-activation.
pub fn naive_forward(p: &ModelParameters, x: &[f64]) -> (f64, Vec<f64>) {
    let mut act = x.to_vec();
    let mut pres = Vec::new();
    let n = p.layers.len();
    for (l, layer) in p.layers.iter().enumerate() {
        let mut next = vec![0.0; layer.outputs];
        for o in 0..layer.outputs {
            let mut z = layer.biases[o];
            for i in 0..layer.inputs {
                z += layer.weights[o * layer.inputs + i] * act[i];
            }
            pres.push(z);
            next[o] = if l + 1 == n { z } else { z.max(0.0) };
        }
        act = next;
    }
    (act[0], pres)
}

pub fn naive_loss(p: &ModelParameters, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (naive_forward(p, x).0 - y).powi(2))
        .sum::<f64>()
        / xs.len() as f64
}

/// Random network with at most `max_params` parameters.
pub fn random_net(rng: &mut ChaCha8Rng, max_params: usize) -> ModelParameters {
    loop {
        let input = rng.gen_range(1..=5);
        let depth = rng.gen_range(1..=3);
        let mut dims = vec![input];
        dims.extend((0..depth).map(|_| rng.gen_range(1..=8)));
        dims.push(1);
        let count: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if count > max_params {
            continue;
        }
        let layers = dims
            .windows(2)
            .map(|w| LayerParams {
                inputs: w[0],
                outputs: w[1],
                weights: (0..w[0] * w[1]).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                biases: (0..w[1]).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            })
            .collect();
        return ModelParameters { layers };
    }
}

/// A batch whose pre-activations all stay at least `margin` away from the ReLU kink,
/// so central differences are meaningful.
pub fn batch_away_from_kinks(
    rng: &mut ChaCha8Rng,
    p: &ModelParameters,
    rows: usize,
    margin: f64,
) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let dim = p.layers[0].inputs;
    let mut xs = Vec::new();
    let mut tries = 0;
    while xs.len() < rows {
        tries += 1;
        if tries > 10_000 {
            return None;
        }
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, pres) = naive_forward(p, &x);
        if pres.iter().all(|z| z.abs() >= margin) {
            xs.push(x);
        }
    }
    let ys = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Some((xs, ys))
}

fn param_mut(q: &mut ModelParameters, l: usize, bias: bool, k: usize) -> &mut f64 {
    if bias {
        &mut q.layers[l].biases[k]
    } else {
        &mut q.layers[l].weights[k]
    }
}

/// Central finite differences of `naive_loss`, laid out like `flatten`.
pub fn fd_gradient(p: &ModelParameters, xs: &[Vec<f64>], ys: &[f64], h: f64) -> Vec<f64> {
    let mut q = p.clone();
    let mut out = Vec::new();
    for l in 0..p.layers.len() {
        for bias in [false, true] {
            let len = if bias { p.layers[l].biases.len() } else { p.layers[l].weights.len() };
            for k in 0..len {
                let orig = *param_mut(&mut q, l, bias, k);
                *param_mut(&mut q, l, bias, k) = orig + h;
                let up = naive_loss(&q, xs, ys);
                *param_mut(&mut q, l, bias, k) = orig - h;
                let down = naive_loss(&q, xs, ys);
                *param_mut(&mut q, l, bias, k) = orig;
                out.push((up - down) / (2.0 * h));
            }
        }
    }
    out
}

pub fn flatten(g: &ModelParameters) -> Vec<f64> {
    g.layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
        .collect()
}

/// |a − n| / max(|a|, |n|, floor): relative error that tolerates exact zeros.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

// ---- metrics ----

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub struct NaiveMetrics {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub evs: f64,
}

pub fn naive_metrics(y: &[f64], p: &[f64]) -> NaiveMetrics {
    let n = y.len() as f64;
    let e: Vec<f64> = y.iter().zip(p).map(|(a, b)| a - b).collect();
    let mae = compensated_sum(e.iter().map(|v| v.abs())) / n;
    let mse = compensated_sum(e.iter().map(|v| v * v)) / n;
    let e_mean = compensated_sum(e.iter().copied()) / n;
    let y_mean = compensated_sum(y.iter().copied()) / n;
    let var_e = compensated_sum(e.iter().map(|v| (v - e_mean).powi(2))) / n;
    let var_y = compensated_sum(y.iter().map(|v| (v - y_mean).powi(2))) / n;
    let evs = if var_y > 0.0 {
        1.0 - var_e / var_y
    } else if var_e == 0.0 {
        1.0
    } else {
        0.0
    };
    NaiveMetrics {
        mae,
        mse,
        rmse: mse.sqrt(),
        evs,
    }
}

// ---- ledger ----

pub fn test_keys() -> AuthorityKeys {
    AuthorityKeys::from_seed("authority", [11u8; 32])
}

/// Genesis plus `extra` blocks with varied, non-round values.
pub fn build_chain(keys: &AuthorityKeys, extra: usize, rng: &mut ChaCha8Rng) -> ChainState {
    let auth = keys.authority_set();
    let mut chain = ChainState::new(create_genesis(keys, 1_700_000_000), &auth).unwrap();
    let beaches = ["Calumet Beach", "Rainbow Beach", "Montrose Beach", "63rd Street Beach"];
    for i in 0..extra {
        let content = BlockContent {
            network_id: beaches[rng.gen_range(0..beaches.len())].to_string(),
            predicted_battery_life: rng.gen_range(50.0..80.0),
            date_of_prediction: format!("2024-{:02}-{:02}", rng.gen_range(1..=12), rng.gen_range(1..=28)),
        };
        let block = create_block(&content, &chain, keys, &auth, 1_700_000_000 + 60 * (i as i64 + 1)).unwrap();
        chain = append(&chain, block, &auth).unwrap();
    }
    chain
}

pub const BLOCK_FIELDS: [&str; 9] = [
    "index",
    "network_id",
    "predicted_battery_life",
    "date_of_prediction",
    "created_at",
    "prev_hash",
    "creator_key_id",
    "signature",
    "hash",
];

fn flip_hex(s: &mut String, rng: &mut ChaCha8Rng) {
    let mut bytes = s.clone().into_bytes();
    let i = rng.gen_range(0..bytes.len());
    let digits = b"0123456789abcdef";
    let mut d = digits[rng.gen_range(0..16)];
    while d == bytes[i] {
        d = digits[rng.gen_range(0..16)];
    }
    bytes[i] = d;
    *s = String::from_utf8(bytes).unwrap();
}

/// Changes `field` of `block` to a different value.
pub fn mutate_field(block: &mut PredictionBlock, field: &str, rng: &mut ChaCha8Rng) {
    match field {
        "index" => block.index = block.index.wrapping_add(rng.gen_range(1..5)),
        "network_id" => block.network_id.push(rng.gen_range('a'..='z')),
        "predicted_battery_life" => {
            let before = block.predicted_battery_life;
            while block.predicted_battery_life == before {
                block.predicted_battery_life = before + rng.gen_range(-5.0..5.0);
            }
        }
        "date_of_prediction" => {
            let before = block.date_of_prediction.clone();
            while block.date_of_prediction == before {
                block.date_of_prediction = format!("2025-{:02}-{:02}", rng.gen_range(1..=12), rng.gen_range(1..=28));
            }
        }
        "created_at" => block.created_at += rng.gen_range(1..10_000),
        "prev_hash" => flip_hex(&mut block.prev_hash, rng),
        "creator_key_id" => block.creator_key_id.push('x'),
        "signature" => flip_hex(&mut block.signature, rng),
        "hash" => flip_hex(&mut block.hash, rng),
        other => panic!("unknown field {other}"),
    }
}

/// Byte offsets that sit inside a JSON value (string contents or number digits).
pub fn value_byte_positions(text: &str) -> Vec<usize> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut expect_value = false;
    while i < bytes.len() {
        match bytes[i] {
            b':' => expect_value = true,
            b'"' => {
                let start = i + 1;
                let mut end = start;
                while bytes[end] != b'"' {
                    end += 1;
                }
                if expect_value {
                    out.extend(start..end);
                    expect_value = false;
                }
                i = end;
            }
            b'-' | b'0'..=b'9' if expect_value => {
                let start = i;
                while matches!(bytes[i], b'-' | b'+' | b'.' | b'e' | b'E' | b'0'..=b'9') {
                    i += 1;
                }
                out.extend(start..i);
                expect_value = false;
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    out
}

pub fn authority(keys: &AuthorityKeys) -> AuthoritySet {
    keys.authority_set()
}

// ---- peer replay ----

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayNode {
    pub online: bool,
    pub length: usize,
}

/// Length-only model of the replication protocol for honest, single-authority
/// scripts: a broadcast extends every online node that is current and resyncs
/// lagging online nodes to the authority length; a sync raises a node to the
/// longest online peer.
pub fn replay_lengths(nodes: usize, events: &[serde_json::Value]) -> Vec<Vec<ReplayNode>> {
    let mut state = vec![ReplayNode { online: true, length: 1 }; nodes];
    let mut authority_len = 1;
    let mut out = vec![state.clone()];
    for ev in events {
        let node = ev.get("node").and_then(|v| v.as_u64()).map(|v| v as usize);
        match ev["event"].as_str().unwrap() {
            "broadcast" => {
                authority_len += 1;
                let lagging: Vec<usize> = (0..nodes)
                    .filter(|&i| state[i].online && state[i].length + 1 < authority_len)
                    .collect();
                for s in state.iter_mut().filter(|s| s.online && s.length + 1 == authority_len) {
                    s.length = authority_len;
                }
                for i in lagging {
                    let best = (0..nodes).filter(|&j| j != i && state[j].online).map(|j| state[j].length).max();
                    state[i].length = state[i].length.max(best.unwrap_or(0));
                }
            }
            "broadcast_forged" => {}
            "set_offline" => state[node.unwrap()].online = false,
            "set_online" => state[node.unwrap()].online = true,
            "sync" => {
                let targets: Vec<usize> = match node {
                    Some(i) => vec![i],
                    None => (0..nodes).collect(),
                };
                for i in targets {
                    if !state[i].online {
                        continue;
                    }
                    let best = (0..nodes).filter(|&j| j != i && state[j].online).map(|j| state[j].length).max();
                    state[i].length = state[i].length.max(best.unwrap_or(0));
                }
            }
            other => panic!("unknown event {other}"),
        }
        out.push(state.clone());
    }
    out
}
