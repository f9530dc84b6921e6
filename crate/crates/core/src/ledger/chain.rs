use std::sync::Arc;

use super::block::{is_hex_digest, parse_date, BlockContent, PredictionBlock, GENESIS_NETWORK_ID, ZERO_HASH};
use super::keys::{AuthorityKeys, AuthoritySet};
use super::{LedgerError, ValidationError};

/// An immutable chain value. Appending produces a new value and leaves this one intact.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    blocks: Arc<Vec<PredictionBlock>>,
}

impl ChainState {
    /// Starts a chain from a genesis block that passes `validate_block`.
    pub fn new(genesis: PredictionBlock, authorities: &AuthoritySet) -> Result<ChainState, LedgerError> {
        validate_block(&genesis, None, authorities)?;
        Ok(ChainState {
            blocks: Arc::new(vec![genesis]),
        })
    }

    /// Wraps blocks without any checks. Used for loading suspect data and for tests;
    /// run `validate_chain` before trusting the result.
    pub fn from_blocks_unchecked(blocks: Vec<PredictionBlock>) -> ChainState {
        ChainState {
            blocks: Arc::new(blocks),
        }
    }

    pub fn blocks(&self) -> &[PredictionBlock] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<PredictionBlock> {
        Arc::unwrap_or_clone(self.blocks)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn head(&self) -> Option<&PredictionBlock> {
        self.blocks.last()
    }

    pub fn genesis(&self) -> Option<&PredictionBlock> {
        self.blocks.first()
    }

    pub fn head_hash(&self) -> &str {
        self.head().map_or("", |b| b.hash.as_str())
    }
}

fn seal(mut block: PredictionBlock, keys: &AuthorityKeys) -> PredictionBlock {
    block.creator_key_id = keys.key_id().to_string();
    block.signature = keys.sign_hex(&block.signing_bytes());
    block.hash = block.compute_hash();
    block
}

/// Re-signs and re-hashes a block in place with the given key.
pub fn reseal(block: &mut PredictionBlock, keys: &AuthorityKeys) {
    *block = seal(block.clone(), keys);
}

pub fn create_genesis(keys: &AuthorityKeys, created_at: i64) -> PredictionBlock {
    seal(
        PredictionBlock {
            index: 0,
            network_id: GENESIS_NETWORK_ID.to_string(),
            predicted_battery_life: 0.0,
            date_of_prediction: "1970-01-01".to_string(),
            created_at,
            prev_hash: ZERO_HASH.to_string(),
            creator_key_id: String::new(),
            signature: String::new(),
            hash: String::new(),
        },
        keys,
    )
}

/// Builds and signs the successor of the chain head. The block is not appended.
pub fn create_block(
    content: &BlockContent,
    chain: &ChainState,
    keys: &AuthorityKeys,
    authorities: &AuthoritySet,
    created_at: i64,
) -> Result<PredictionBlock, LedgerError> {
    if content.network_id.trim().is_empty() {
        return Err(LedgerError::InvalidNetworkId);
    }
    if !content.predicted_battery_life.is_finite() {
        return Err(LedgerError::NonFiniteValue);
    }
    if parse_date(&content.date_of_prediction).is_none() {
        return Err(LedgerError::BadDate(content.date_of_prediction.clone()));
    }
    if !authorities.contains(keys.key_id()) {
        return Err(LedgerError::UnauthorizedKey(keys.key_id().to_string()));
    }
    let head = chain.head().ok_or(LedgerError::EmptyChain)?;
    Ok(seal(
        PredictionBlock {
            index: head.index + 1,
            network_id: content.network_id.clone(),
            predicted_battery_life: content.predicted_battery_life,
            date_of_prediction: content.date_of_prediction.clone(),
            created_at,
            prev_hash: head.hash.clone(),
            creator_key_id: String::new(),
            signature: String::new(),
            hash: String::new(),
        },
        keys,
    ))
}

/// Checks one block against its predecessor (`None` for genesis). Checks run in order:
/// hash, signature, index linkage, prev-hash linkage, date, finite value.
pub fn validate_block(
    block: &PredictionBlock,
    predecessor: Option<&PredictionBlock>,
    authorities: &AuthoritySet,
) -> Result<(), ValidationError> {
    if !is_hex_digest(&block.hash, 32) || block.compute_hash() != block.hash {
        return Err(ValidationError::HashMismatch);
    }
    match authorities.verify(&block.creator_key_id, &block.signing_bytes(), &block.signature) {
        None => return Err(ValidationError::UnknownAuthority(block.creator_key_id.clone())),
        Some(false) => return Err(ValidationError::SignatureInvalid),
        Some(true) => {}
    }
    match predecessor {
        None => {
            if block.index != 0 {
                return Err(ValidationError::LinkageBroken(format!(
                    "block without predecessor has index {}",
                    block.index
                )));
            }
            if block.prev_hash != ZERO_HASH {
                return Err(ValidationError::LinkageBroken("genesis prev_hash is not zero".into()));
            }
            if block.network_id != GENESIS_NETWORK_ID {
                return Err(ValidationError::LinkageBroken("genesis network_id mismatch".into()));
            }
        }
        Some(prev) => {
            if block.index != prev.index + 1 {
                return Err(ValidationError::LinkageBroken(format!(
                    "index {} does not follow {}",
                    block.index, prev.index
                )));
            }
            if block.prev_hash != prev.hash {
                return Err(ValidationError::LinkageBroken(format!(
                    "prev_hash does not match hash of block {}",
                    prev.index
                )));
            }
        }
    }
    if parse_date(&block.date_of_prediction).is_none() {
        return Err(ValidationError::BadDate(block.date_of_prediction.clone()));
    }
    if !block.predicted_battery_life.is_finite() {
        return Err(ValidationError::NonFiniteValue);
    }
    Ok(())
}

/// Full scan from genesis; reports the first block whose hash, signature or linkage fails.
pub fn validate_chain(chain: &ChainState, authorities: &AuthoritySet) -> Result<(), LedgerError> {
    let blocks = chain.blocks();
    if blocks.is_empty() {
        return Err(LedgerError::EmptyChain);
    }
    for (i, block) in blocks.iter().enumerate() {
        let prev = i.checked_sub(1).map(|p| &blocks[p]);
        validate_block(block, prev, authorities)
            .map_err(|reason| LedgerError::TamperDetected { index: i as u64, reason })?;
    }
    Ok(())
}

/// Validates the whole chain and the new block, then returns the extended chain.
pub fn append(
    chain: &ChainState,
    block: PredictionBlock,
    authorities: &AuthoritySet,
) -> Result<ChainState, LedgerError> {
    validate_chain(chain, authorities)?;
    validate_block(&block, chain.head(), authorities)?;
    let mut blocks = Vec::with_capacity(chain.len() + 1);
    blocks.extend_from_slice(chain.blocks());
    blocks.push(block);
    Ok(ChainState {
        blocks: Arc::new(blocks),
    })
}

/// All non-genesis blocks carrying `network_id`, in chain order.
pub fn query_by_network_id(chain: &ChainState, network_id: &str) -> Vec<PredictionBlock> {
    chain
        .blocks()
        .iter()
        .filter(|b| !b.is_genesis() && b.network_id == network_id)
        .cloned()
        .collect()
}
