use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::{Identity, Membership};
use crate::ledger::{Block, Chain, CommitGate, LedgerError, Verdict, VerifyFailure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeStatus {
    Up,
    Crashed,
}

/// Why a node voted against a proposal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    /// Wrong height or previous hash relative to the node's tip.
    ForkMismatch,
    HashMismatch,
    BadSignature,
    DuplicateTransaction,
    /// The node promised a higher ballot for this height.
    StaleBallot,
    /// Applying the block would break an inventory or money invariant.
    GateViolation(String),
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::GateViolation(why) => write!(f, "GateViolation({why})"),
            other => write!(f, "{other:?}"),
        }
    }
}

/// One validator's replica and voting state.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: Identity,
    pub index: usize,
    pub status: NodeStatus,
    pub(crate) chain: Chain,
    pub(crate) gate: CommitGate,
    /// Highest ballot promised per undecided height.
    pub(crate) promised: BTreeMap<u64, u64>,
    /// Last accepted `(ballot, block)` per undecided height.
    pub(crate) accepted: BTreeMap<u64, (u64, Block)>,
    pub(crate) up_ticks: u64,
}

impl NodeState {
    pub(crate) fn new(index: usize) -> Self {
        NodeState {
            id: Identity::node(index),
            index,
            status: NodeStatus::Up,
            chain: Chain::new(),
            gate: CommitGate::new(),
            promised: BTreeMap::new(),
            accepted: BTreeMap::new(),
            up_ticks: 0,
        }
    }

    pub fn is_up(&self) -> bool {
        self.status == NodeStatus::Up
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn height(&self) -> u64 {
        self.chain.height()
    }

    pub fn gate(&self) -> &CommitGate {
        &self.gate
    }

    pub fn promised(&self, height: u64) -> Option<u64> {
        self.promised.get(&height).copied()
    }

    pub fn accepted(&self, height: u64) -> Option<&(u64, Block)> {
        self.accepted.get(&height)
    }

    /// Structural, signature, duplicate and invariant checks of an
    /// uncertified block proposed as this node's next block.
    pub fn validate_proposal(
        &self,
        block: &Block,
        members: &Membership,
    ) -> Result<(), RejectReason> {
        self.chain
            .check_successor(block, members)
            .map_err(|f| match f {
                VerifyFailure::HeightMismatch | VerifyFailure::LinkMismatch => {
                    RejectReason::ForkMismatch
                }
                VerifyFailure::BadSignature => RejectReason::BadSignature,
                VerifyFailure::DuplicateTransaction => RejectReason::DuplicateTransaction,
                VerifyFailure::HashMismatch
                | VerifyFailure::InsufficientVotes
                | VerifyFailure::Corrupt => RejectReason::HashMismatch,
            })?;
        self.gate
            .check_all(&block.transactions)
            .map_err(|v| RejectReason::GateViolation(v.0))
    }

    /// Appends a certified block and forgets voting state at or below it.
    pub(crate) fn append(&mut self, block: Block, members: &Membership) -> Result<(), LedgerError> {
        let height = block.height;
        let txs = block.transactions.clone();
        self.chain.append_committed(block, members)?;
        for tx in &txs {
            self.gate.apply(tx);
        }
        self.promised = self.promised.split_off(&(height + 1));
        self.accepted = self.accepted.split_off(&(height + 1));
        Ok(())
    }

    /// Replaces the local chain with a verified copy of `blocks`.
    pub(crate) fn install(
        &mut self,
        blocks: Vec<Block>,
        members: &Membership,
    ) -> Result<(), LedgerError> {
        let chain = Chain::from_blocks(blocks);
        if let Verdict::Invalid { height, reason } = chain.verify(members) {
            return Err(LedgerError::Rejected { height, reason });
        }
        let tip = chain.height();
        self.gate = CommitGate::replay(chain.blocks());
        self.chain = chain;
        self.promised = self.promised.split_off(&(tip + 1));
        self.accepted = self.accepted.split_off(&(tip + 1));
        Ok(())
    }
}
