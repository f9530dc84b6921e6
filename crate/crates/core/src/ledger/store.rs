use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::block::PredictionBlock;
use super::chain::{validate_chain, ChainState};
use super::keys::AuthoritySet;
use super::LedgerError;

/// One compact JSON object per line with keys in sorted order.
pub fn block_to_line(block: &PredictionBlock) -> String {
    // serde_json's default map is ordered, so going through Value sorts the keys
    let value = serde_json::to_value(block).expect("block serializes");
    serde_json::to_string(&value).expect("value serializes")
}

pub fn persist<W: Write>(chain: &ChainState, mut sink: W) -> Result<(), LedgerError> {
    for block in chain.blocks() {
        writeln!(sink, "{}", block_to_line(block)).map_err(io_err)?;
    }
    sink.flush().map_err(io_err)
}

/// Writes through a temporary sibling file and renames it into place.
pub fn persist_path(chain: &ChainState, path: &Path) -> Result<(), LedgerError> {
    let tmp = path.with_extension("tmp");
    {
        let file = std::fs::File::create(&tmp).map_err(io_err)?;
        let mut w = std::io::BufWriter::new(file);
        persist(chain, &mut w)?;
        w.into_inner()
            .map_err(|e| io_err(e.into_error()))?
            .sync_all()
            .map_err(io_err)?;
    }
    std::fs::rename(&tmp, path).map_err(io_err)
}

fn io_err(e: std::io::Error) -> LedgerError {
    LedgerError::Io(e.to_string())
}

/// Parses blocks without validating them. Each line must be byte-identical to its
/// canonical encoding.
pub fn read_blocks<R: Read>(source: R) -> Result<Vec<PredictionBlock>, LedgerError> {
    let mut blocks = Vec::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line.map_err(|e| LedgerError::CorruptChainFile {
            index: i as u64,
            reason: e.to_string(),
        })?;
        let block: PredictionBlock =
            serde_json::from_str(&line).map_err(|e| LedgerError::CorruptChainFile {
                index: i as u64,
                reason: e.to_string(),
            })?;
        // any byte that does not survive a decode/encode round trip is an edit
        if block_to_line(&block) != line {
            return Err(LedgerError::CorruptChainFile {
                index: i as u64,
                reason: "line is not in canonical form".into(),
            });
        }
        blocks.push(block);
    }
    if blocks.is_empty() {
        return Err(LedgerError::CorruptChainFile {
            index: 0,
            reason: "chain file holds no blocks".into(),
        });
    }
    Ok(blocks)
}

/// Reads and fully re-validates a chain file.
pub fn load<R: Read>(source: R, authorities: &AuthoritySet) -> Result<ChainState, LedgerError> {
    let chain = ChainState::from_blocks_unchecked(read_blocks(source)?);
    match validate_chain(&chain, authorities) {
        Ok(()) => Ok(chain),
        Err(LedgerError::TamperDetected { index, reason }) => Err(LedgerError::CorruptChainFile {
            index,
            reason: reason.to_string(),
        }),
        Err(e) => Err(e),
    }
}

pub fn load_path(path: &Path, authorities: &AuthoritySet) -> Result<ChainState, LedgerError> {
    load(std::fs::File::open(path).map_err(io_err)?, authorities)
}
