//! Permissioned hash-chained ledger of battery-life predictions.
//!
//! Every block is signed by a registered authority key (Ed25519) and carries the
//! SHA-256 digest of its canonical bytes. A block stores the digest of its
//! predecessor, so editing any committed field breaks either that block's hash or
//! the link from its successor.

mod block;
mod chain;
mod keys;
mod store;

pub use block::{
    format_real, is_hex_digest, parse_date, BlockContent, PredictionBlock, BLOCK_TAG,
    GENESIS_NETWORK_ID, ZERO_HASH,
};
pub use chain::{
    append, create_block, create_genesis, query_by_network_id, reseal, validate_block,
    validate_chain, ChainState,
};
pub use keys::{AuthorityKeys, AuthoritySet, KeyFile};
pub use store::{block_to_line, load, load_path, persist, persist_path, read_blocks};

use thiserror::Error;

/// Why a single block failed validation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ValidationError {
    #[error("stored hash does not match block contents")]
    HashMismatch,
    #[error("signature does not verify")]
    SignatureInvalid,
    #[error("creator key {0:?} is not a registered authority")]
    UnknownAuthority(String),
    #[error("linkage broken: {0}")]
    LinkageBroken(String),
    #[error("date {0:?} is not an ISO-8601 calendar date")]
    BadDate(String),
    #[error("predicted battery life is not finite")]
    NonFiniteValue,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LedgerError {
    #[error("invalid block: {0}")]
    Invalid(#[from] ValidationError),
    #[error("tamper detected at block {index}: {reason}")]
    TamperDetected { index: u64, reason: ValidationError },
    #[error("date {0:?} is not an ISO-8601 calendar date (YYYY-MM-DD)")]
    BadDate(String),
    #[error("predicted battery life must be finite")]
    NonFiniteValue,
    #[error("network id must be non-empty")]
    InvalidNetworkId,
    #[error("key {0:?} is not a registered authority")]
    UnauthorizedKey(String),
    #[error("chain has no genesis block")]
    EmptyChain,
    #[error("corrupt chain file at block {index}: {reason}")]
    CorruptChainFile { index: u64, reason: String },
    #[error("key file: {0}")]
    KeyFile(String),
    #[error("io: {0}")]
    Io(String),
}
