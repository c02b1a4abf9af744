//! Quorum-vote commitment of sealed blocks over a deterministic simulated
//! network.
//!
//! Each height is decided by a single-decree, leader-driven vote. Ballot 0 of
//! a height goes straight to `Propose → Vote → Commit`; after a timeout or a
//! crashed leader the next ballot first collects promises from a quorum and
//! re-proposes the highest-ballot block any of them accepted, so two
//! different blocks can never both gather a quorum at one height.
//!
//! Everything runs on one logical clock inside [`ClusterWorld`]; identical
//! configuration, seed, submissions and fault plan give identical worlds.

mod fault;
mod message;
mod node;
mod report;
mod world;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fault::{Fault, MessageMatch};
pub use message::{ConsensusMessage, MessageBody, MessageKind};
pub use node::{NodeState, NodeStatus, RejectReason};
pub use report::AvailabilityReport;
pub use world::{
    tally, ClusterWorld, SafetyViolation, TallyOutcome, TxStatus, VoteRecord, WorldEvent,
};

use crate::ledger::LedgerError;

fn default_rotation() -> u64 {
    1
}
fn default_timeout() -> u64 {
    20
}
fn default_batch() -> usize {
    1
}
fn default_latency() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuorumConfig {
    pub n_nodes: usize,
    /// Accepting votes needed to commit; defaults to a strict majority.
    #[serde(default)]
    pub quorum: Option<usize>,
    /// Blocks each leader serves before rotation.
    #[serde(default = "default_rotation")]
    pub leader_rotation: u64,
    /// Ticks a ballot may run before it is abandoned.
    #[serde(default = "default_timeout")]
    pub vote_timeout: u64,
    /// Maximum transactions per block.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Message delivery delay in ticks.
    #[serde(default = "default_latency")]
    pub latency: u64,
}

impl QuorumConfig {
    pub fn majority(n_nodes: usize) -> Self {
        QuorumConfig {
            n_nodes,
            quorum: None,
            leader_rotation: default_rotation(),
            vote_timeout: default_timeout(),
            batch_size: default_batch(),
            latency: default_latency(),
        }
    }

    pub fn with_quorum(mut self, quorum: usize) -> Self {
        self.quorum = Some(quorum);
        self
    }

    /// Effective quorum: explicit value or `⌊n/2⌋ + 1`.
    pub fn quorum(&self) -> usize {
        self.quorum.unwrap_or(self.n_nodes / 2 + 1)
    }

    pub fn validate(&self) -> Result<(), ConsensusError> {
        let q = self.quorum();
        if self.n_nodes == 0 || q == 0 || q > self.n_nodes {
            return Err(ConsensusError::InvalidConfig(format!(
                "quorum {q} with {} nodes",
                self.n_nodes
            )));
        }
        if self.leader_rotation == 0
            || self.vote_timeout == 0
            || self.batch_size == 0
            || self.latency == 0
        {
            return Err(ConsensusError::InvalidConfig(
                "rotation, timeout, batch size and latency must be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConsensusError {
    #[error("node {got} is not the leader; expected node {expected}")]
    NotLeader { expected: usize, got: usize },
    #[error("leader node {0} is crashed")]
    LeaderCrashed(usize),
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("fault scheduled at tick {at} but clock is already {now}")]
    FaultInPast { at: u64, now: u64 },
    #[error("votes at height {height} reference different block hashes")]
    MixedBlockHash { height: u64 },
    #[error("a round is already in progress at height {0}")]
    RoundInProgress(u64),
    #[error("invalid cluster configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}
