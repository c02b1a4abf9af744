use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SimError, SimRng};
use crate::crypto::Membership;
use crate::ledger::{record_spans, verify_log_bytes, Verdict};
use crate::platform::load_membership;

/// Bit flipped by [`tamper_demo`]. Flipping the low bit keeps ASCII text
/// ASCII, so a payload edit still decodes and is caught by hashing.
pub const TAMPER_MASK: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TamperOutcome {
    pub height: u64,
    /// Offset within the block's encoding.
    pub offset: usize,
    /// Offset within the log file.
    pub file_offset: usize,
    pub before: u8,
    pub after: u8,
    pub verdict: Verdict,
}

/// Flips one bit of block `height` at `offset` bytes into its encoding,
/// rewrites the log and verifies it. Applying the same call twice restores
/// the original bytes.
pub fn tamper_demo(log: &Path, height: u64, offset: usize) -> Result<TamperOutcome, SimError> {
    let mut bytes =
        std::fs::read(log).map_err(|e| SimError::Io(format!("{}: {e}", log.display())))?;
    let spans = record_spans(&bytes)?;
    let blocks = spans.len() as u64;
    if height == 0 || height > blocks {
        return Err(SimError::HeightOutOfRange { height, blocks });
    }
    let (_, body, end) = spans[height as usize - 1];
    if offset >= end - body {
        return Err(SimError::OffsetOutOfRange {
            height,
            offset,
            len: end - body,
        });
    }
    let file_offset = body + offset;
    let before = bytes[file_offset];
    bytes[file_offset] ^= TAMPER_MASK;
    std::fs::write(log, &bytes).map_err(|e| SimError::Io(format!("{}: {e}", log.display())))?;
    let members = load_membership(log)?;
    Ok(TamperOutcome {
        height,
        offset,
        file_offset,
        before,
        after: bytes[file_offset],
        verdict: verify_log_bytes(&bytes, &members),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub probes: u64,
    /// Probes reported `Invalid` at or below the mutated height.
    pub detected: u64,
}

/// Applies `probes` random single-byte mutations to a copy of `bytes`, one
/// at a time, and counts how many verification catches at or below the
/// mutated block.
pub fn probe_log(
    bytes: &[u8],
    members: &Membership,
    probes: usize,
    rng: &mut SimRng,
) -> Result<ProbeSummary, SimError> {
    let spans = record_spans(bytes)?;
    let mut summary = ProbeSummary::default();
    if spans.is_empty() {
        return Ok(summary);
    }
    let mut copy = bytes.to_vec();
    for _ in 0..probes {
        let k = rng.index(spans.len());
        let (start, _, end) = spans[k];
        let at = start + rng.index(end - start);
        let mask = rng.range(1, 255) as u8;
        copy[at] ^= mask;
        let caught = matches!(verify_log_bytes(&copy, members), Verdict::Invalid { height, .. } if height <= k as u64 + 1);
        copy[at] ^= mask;
        summary.probes += 1;
        summary.detected += caught as u64;
    }
    Ok(summary)
}
