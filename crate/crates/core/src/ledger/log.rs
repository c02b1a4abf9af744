//! Flat block log: `b"ALRB"`, version byte, then `[u32 len][block]*`.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use super::block::Block;
use super::chain::Chain;
use super::{LedgerError, Verdict, VerifyFailure};
use crate::crypto::Membership;

pub const LOG_MAGIC: &[u8; 4] = b"ALRB";
pub const LOG_VERSION: u8 = 0x01;
const HEADER_LEN: usize = 5;

pub fn encode_log(blocks: &[Block]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + blocks.len() * 512);
    out.extend_from_slice(LOG_MAGIC);
    out.push(LOG_VERSION);
    for b in blocks {
        append_record(&mut out, b);
    }
    out
}

fn append_record(out: &mut Vec<u8>, block: &Block) {
    let bytes = block.encode();
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(&bytes);
}

/// Per-block byte ranges `(start_of_length_prefix, start_of_body, end)`,
/// in height order.
pub fn record_spans(bytes: &[u8]) -> Result<Vec<(usize, usize, usize)>, LedgerError> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != LOG_MAGIC || bytes[4] != LOG_VERSION {
        return Err(LedgerError::CorruptLog { offset: 0 });
    }
    let mut spans = Vec::new();
    let mut pos = HEADER_LEN;
    while pos < bytes.len() {
        if bytes.len() - pos < 4 {
            return Err(LedgerError::CorruptLog { offset: pos });
        }
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        let body = pos + 4;
        if bytes.len() - body < len {
            return Err(LedgerError::CorruptLog { offset: pos });
        }
        spans.push((pos, body, body + len));
        pos = body + len;
    }
    Ok(spans)
}

/// Decodes a log without verifying hashes or signatures.
pub fn decode_log(bytes: &[u8]) -> Result<Vec<Block>, LedgerError> {
    let mut blocks = Vec::new();
    let spans = record_spans(bytes)?;
    for (_, body, end) in spans {
        let block = Block::decode(&bytes[body..end], body)
            .map_err(|e| LedgerError::CorruptLog { offset: e.offset })?;
        blocks.push(block);
    }
    Ok(blocks)
}

/// Writes the committed blocks of `chain`. The pending pool is not persisted.
pub fn persist(chain: &Chain, path: impl AsRef<Path>) -> Result<(), LedgerError> {
    let tmp = path.as_ref().with_extension("tmp");
    std::fs::write(&tmp, encode_log(chain.blocks()))?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Chain, LedgerError> {
    let bytes = std::fs::read(path)?;
    Ok(Chain::from_blocks(decode_log(&bytes)?))
}

/// Decodes and verifies raw log bytes.
///
/// A record that fails to decode is reported as `Invalid(k, Corrupt)` where
/// `k` is its position; a malformed header is reported at height 1.
pub fn verify_log_bytes(bytes: &[u8], members: &Membership) -> Verdict {
    if bytes.len() < HEADER_LEN || &bytes[..4] != LOG_MAGIC || bytes[4] != LOG_VERSION {
        return Verdict::Invalid {
            height: 1,
            reason: VerifyFailure::Corrupt,
        };
    }
    let mut blocks = Vec::new();
    let mut pos = HEADER_LEN;
    while pos < bytes.len() {
        let height = blocks.len() as u64 + 1;
        if bytes.len() - pos < 4 {
            return first_failure(blocks, height, members);
        }
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        let body = pos + 4;
        if bytes.len() - body < len {
            return first_failure(blocks, height, members);
        }
        match Block::decode(&bytes[body..body + len], body) {
            Ok(b) => blocks.push(b),
            Err(_) => return first_failure(blocks, height, members),
        }
        pos = body + len;
    }
    Chain::from_blocks(blocks).verify(members)
}

/// Verdict for an intact prefix followed by an undecodable record at `height`.
fn first_failure(prefix: Vec<Block>, height: u64, members: &Membership) -> Verdict {
    match Chain::from_blocks(prefix).verify(members) {
        Verdict::Ok => Verdict::Invalid {
            height,
            reason: VerifyFailure::Corrupt,
        },
        earlier => earlier,
    }
}

/// Append-only writer used by a live node to mirror commits to disk.
pub struct LogWriter {
    file: File,
}

impl LogWriter {
    /// Creates (truncating) a log at `path` and writes `existing` blocks.
    pub fn create(path: impl AsRef<Path>, existing: &[Block]) -> Result<Self, LedgerError> {
        let mut file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)?;
        file.write_all(&encode_log(existing))?;
        file.flush()?;
        Ok(LogWriter { file })
    }

    pub fn append(&mut self, block: &Block) -> Result<(), LedgerError> {
        let mut buf = Vec::new();
        append_record(&mut buf, block);
        self.file.write_all(&buf)?;
        self.file.flush()?;
        Ok(())
    }
}
