//! Shared inputs for the benchmarks.

use sensorchain_core::dataset::{prepare, PrepareConfig, PreparedData};
use sensorchain_core::experiment::sample_records;
use sensorchain_core::ledger::{append, create_block, create_genesis, AuthorityKeys, BlockContent, ChainState};

/// The bundled sample with the default split.
pub fn sample_data() -> PreparedData {
    prepare(&sample_records(), &PrepareConfig::default()).expect("bundled sample prepares")
}

pub fn bench_keys() -> AuthorityKeys {
    AuthorityKeys::from_seed("bench", [3u8; 32])
}

/// Genesis plus `extra` blocks.
pub fn chain(keys: &AuthorityKeys, extra: usize) -> ChainState {
    let auth = keys.authority_set();
    let mut chain = ChainState::new(create_genesis(keys, 1_700_000_000), &auth).expect("genesis is valid");
    for i in 0..extra {
        let content = BlockContent {
            network_id: format!("beach-{}", i % 6),
            predicted_battery_life: 55.0 + (i % 20) as f64 * 0.75,
            date_of_prediction: "2024-05-17".into(),
        };
        let block = create_block(&content, &chain, keys, &auth, 1_700_000_000 + i as i64).expect("block is valid");
        chain = append(&chain, block, &auth).expect("append succeeds");
    }
    chain
}
