use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Domain-separation tag; the first field of every preimage.
pub const BLOCK_TAG: &str = "sensorchain/block/v1";
pub const GENESIS_NETWORK_ID: &str = "GENESIS";
pub const ZERO_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

/// One ledger entry. Digests and the signature are lowercase hex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBlock {
    pub index: u64,
    pub network_id: String,
    pub predicted_battery_life: f64,
    /// ISO-8601 calendar date, `YYYY-MM-DD`.
    pub date_of_prediction: String,
    /// Unix seconds at creation.
    pub created_at: i64,
    pub prev_hash: String,
    pub creator_key_id: String,
    pub signature: String,
    pub hash: String,
}

/// The three values an operator supplies for a new block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockContent {
    pub network_id: String,
    pub predicted_battery_life: f64,
    pub date_of_prediction: String,
}

/// Shortest decimal string that parses back to the same `f64`, never in exponent form.
pub fn format_real(v: f64) -> String {
    format!("{v}")
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    // chrono accepts some non-padded forms; require the exact 10-character layout
    if s.len() != 10 {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

pub fn is_hex_digest(s: &str, bytes: usize) -> bool {
    s.len() == bytes * 2 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

fn push_field(out: &mut Vec<u8>, field: &str) {
    out.extend_from_slice(&(field.len() as u32).to_be_bytes());
    out.extend_from_slice(field.as_bytes());
}

impl PredictionBlock {
    /// Bytes covered by the signature: every field except `signature` and `hash`,
    /// each as a big-endian u32 length followed by UTF-8 text.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(256);
        push_field(&mut out, BLOCK_TAG);
        push_field(&mut out, &self.index.to_string());
        push_field(&mut out, &self.network_id);
        push_field(&mut out, &format_real(self.predicted_battery_life));
        push_field(&mut out, &self.date_of_prediction);
        push_field(&mut out, &self.created_at.to_string());
        push_field(&mut out, &self.prev_hash);
        push_field(&mut out, &self.creator_key_id);
        out
    }

    /// Hash preimage: the signing bytes followed by the signature field.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = self.signing_bytes();
        push_field(&mut out, &self.signature);
        out
    }

    pub fn compute_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_bytes()))
    }

    pub fn is_genesis(&self) -> bool {
        self.index == 0
    }
}
