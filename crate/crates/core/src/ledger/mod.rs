//! Append-only, hash-chained block store.
//!
//! Blocks link through `prev_hash`, commit to their transactions through
//! `tx_digest`, and carry a quorum of validator votes. Any single edit to a
//! committed byte is caught by [`Chain::verify`] at or before the edited height.

mod block;
mod chain;
pub mod codec;
mod gate;
mod log;
mod tx;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use block::{compute_block_hash, compute_tx_digest, Block, Vote, GENESIS_PREV_HASH};
pub use chain::{Chain, HistoryFilter, LocatedTx};
pub use gate::{seat_labels, CommitGate, GateViolation};
pub use log::{
    decode_log, encode_log, load, persist, record_spans, verify_log_bytes, LogWriter, LOG_MAGIC,
    LOG_VERSION,
};
pub use tx::{
    canonical_encode, BookingCancelled, InventoryAdjusted, PaymentCaptured, RefundIssued,
    ReviewSubmitted, TicketIssued, TransactionRecord, TxKind, TxPayload,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("transaction {0} already pending or committed")]
    DuplicateTransaction(String),
    #[error("signature of transaction {0} does not verify")]
    BadSignature(String),
    #[error("transaction id {0} does not match its content")]
    TxIdMismatch(String),
    #[error("no pending transactions to seal")]
    EmptyPool,
    #[error("malformed hash {0:?}")]
    InvalidHash(String),
    #[error("block rejected at height {height}: {reason}")]
    Rejected { height: u64, reason: VerifyFailure },
    #[error("corrupt log at byte {offset}")]
    CorruptLog { offset: usize },
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for LedgerError {
    fn from(e: std::io::Error) -> Self {
        LedgerError::Io(e.to_string())
    }
}

/// Machine-readable reason a block fails verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerifyFailure {
    /// A stored hash (tx id, tx digest or block hash) does not recompute.
    HashMismatch,
    /// `prev_hash` does not equal the preceding block hash.
    LinkMismatch,
    HeightMismatch,
    /// A transaction or vote signature fails, or the signer is unknown.
    BadSignature,
    InsufficientVotes,
    DuplicateTransaction,
    /// The stored bytes do not decode.
    Corrupt,
}

impl fmt::Display for VerifyFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Outcome of chain verification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum Verdict {
    Ok,
    Invalid { height: u64, reason: VerifyFailure },
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, Verdict::Ok)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Ok => f.write_str("Ok"),
            Verdict::Invalid { height, reason } => write!(f, "Invalid({height}, {reason})"),
        }
    }
}
