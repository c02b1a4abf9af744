use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::block::{Block, GENESIS_PREV_HASH};
use super::tx::{TransactionRecord, TxKind, TxPayload};
use super::{LedgerError, Verdict, VerifyFailure};
use crate::crypto::{Identity, Membership};

/// Committed blocks plus the writer's uncommitted pool.
#[derive(Debug, Clone, Default)]
pub struct Chain {
    blocks: Vec<Block>,
    pending: Vec<TransactionRecord>,
    committed_ids: HashSet<String>,
}

impl PartialEq for Chain {
    fn eq(&self, other: &Self) -> bool {
        self.blocks == other.blocks && self.pending == other.pending
    }
}

/// Conjunctive filter for [`Chain::query_history`]. Unset fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryFilter {
    pub pnr: Option<String>,
    pub customer: Option<String>,
    pub flight: Option<String>,
    pub kind: Option<TxKind>,
    /// Inclusive logical-time range.
    pub time_range: Option<(u64, u64)>,
}

impl HistoryFilter {
    pub fn pnr(pnr: impl Into<String>) -> Self {
        HistoryFilter {
            pnr: Some(pnr.into()),
            ..Default::default()
        }
    }
}

/// A committed transaction together with its position on the chain.
#[derive(Debug, Clone, Copy)]
pub struct LocatedTx<'a> {
    pub height: u64,
    pub index: usize,
    pub block_hash: &'a str,
    pub tx: &'a TransactionRecord,
}

impl Chain {
    pub fn new() -> Self {
        Chain::default()
    }

    /// Rebuilds a chain from already-committed blocks without verifying them.
    pub fn from_blocks(blocks: Vec<Block>) -> Self {
        let committed_ids = blocks
            .iter()
            .flat_map(|b| b.transactions.iter().map(|t| t.tx_id.clone()))
            .collect();
        Chain {
            blocks,
            pending: Vec::new(),
            committed_ids,
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn pending(&self) -> &[TransactionRecord] {
        &self.pending
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        height
            .checked_sub(1)
            .and_then(|i| self.blocks.get(i as usize))
    }

    /// Hash of the last committed block, or the genesis marker.
    pub fn tip_hash(&self) -> &str {
        self.blocks
            .last()
            .map_or(GENESIS_PREV_HASH, |b| b.block_hash.as_str())
    }

    pub fn contains_tx(&self, tx_id: &str) -> bool {
        self.committed_ids.contains(tx_id)
    }

    pub fn tx_count(&self) -> usize {
        self.committed_ids.len()
    }

    /// Adds a signed transaction to the pending pool.
    pub fn add_transaction(
        &mut self,
        tx: TransactionRecord,
        members: &Membership,
    ) -> Result<(), LedgerError> {
        if self.committed_ids.contains(&tx.tx_id)
            || self.pending.iter().any(|p| p.tx_id == tx.tx_id)
        {
            return Err(LedgerError::DuplicateTransaction(tx.tx_id));
        }
        if !tx.content_hash_ok() {
            return Err(LedgerError::TxIdMismatch(tx.tx_id));
        }
        if !tx.signature_ok(members) {
            return Err(LedgerError::BadSignature(tx.tx_id));
        }
        self.pending.push(tx);
        Ok(())
    }

    /// Drains the pool into a new, not-yet-committed block extending the tip.
    pub fn seal_block(
        &mut self,
        proposer: &Identity,
        logical_time: u64,
    ) -> Result<Block, LedgerError> {
        if self.pending.is_empty() {
            return Err(LedgerError::EmptyPool);
        }
        let txs = std::mem::take(&mut self.pending);
        Block::assemble(
            self.height() + 1,
            self.tip_hash().to_string(),
            txs,
            proposer.clone(),
            logical_time,
        )
    }

    /// Appends a block carrying a commit certificate after full verification.
    pub fn append_committed(
        &mut self,
        block: Block,
        members: &Membership,
    ) -> Result<(), LedgerError> {
        let height = self.height() + 1;
        check_block(
            &block,
            height,
            self.tip_hash(),
            members,
            &self.committed_ids,
        )
        .map_err(|reason| LedgerError::Rejected { height, reason })?;
        self.committed_ids
            .extend(block.transactions.iter().map(|t| t.tx_id.clone()));
        let ids: HashSet<&str> = block
            .transactions
            .iter()
            .map(|t| t.tx_id.as_str())
            .collect();
        self.pending.retain(|p| !ids.contains(p.tx_id.as_str()));
        self.blocks.push(block);
        Ok(())
    }

    /// Checks an uncertified block as the next successor of the tip.
    pub fn check_successor(
        &self,
        block: &Block,
        members: &Membership,
    ) -> Result<(), VerifyFailure> {
        check_block_body(
            block,
            self.height() + 1,
            self.tip_hash(),
            members,
            &self.committed_ids,
        )
    }

    /// Full verification of every committed block, reporting the lowest failure.
    pub fn verify(&self, members: &Membership) -> Verdict {
        let mut seen = HashSet::new();
        let mut prev = GENESIS_PREV_HASH;
        for (i, block) in self.blocks.iter().enumerate() {
            let height = i as u64 + 1;
            if let Err(reason) = check_block(block, height, prev, members, &seen) {
                return Verdict::Invalid { height, reason };
            }
            seen.extend(block.transactions.iter().map(|t| t.tx_id.clone()));
            prev = &block.block_hash;
        }
        Verdict::Ok
    }

    /// Iterates committed transactions in chain order.
    pub fn iter_located(&self) -> impl Iterator<Item = LocatedTx<'_>> {
        self.blocks.iter().flat_map(|b| {
            b.transactions
                .iter()
                .enumerate()
                .map(move |(index, tx)| LocatedTx {
                    height: b.height,
                    index,
                    block_hash: &b.block_hash,
                    tx,
                })
        })
    }

    /// Committed transactions matching every field of `filter`, in chain order.
    ///
    /// Customer and flight filters also match records that only name a PNR
    /// whose ticket carries that customer or flight.
    pub fn query_history(&self, filter: &HistoryFilter) -> Vec<LocatedTx<'_>> {
        let needs_index = filter.customer.is_some() || filter.flight.is_some();
        let mut owners: HashMap<&str, (&str, &str)> = HashMap::new();
        if needs_index {
            for l in self.iter_located() {
                if let TxPayload::TicketIssued(t) = &l.tx.payload {
                    owners
                        .entry(t.pnr.as_str())
                        .or_insert((t.customer.as_str(), t.flight.as_str()));
                }
            }
        }
        self.iter_located()
            .filter(|l| {
                let p = &l.tx.payload;
                if filter.kind.is_some_and(|k| k != p.kind()) {
                    return false;
                }
                if let Some((lo, hi)) = filter.time_range {
                    if l.tx.logical_time < lo || l.tx.logical_time > hi {
                        return false;
                    }
                }
                if let Some(pnr) = &filter.pnr {
                    if p.pnr() != Some(pnr.as_str()) {
                        return false;
                    }
                }
                let owner = p.pnr().and_then(|x| owners.get(x));
                if let Some(c) = &filter.customer {
                    if owner.map(|o| o.0) != Some(c.as_str()) {
                        return false;
                    }
                }
                if let Some(f) = &filter.flight {
                    let flight = p.flight().or(owner.map(|o| o.1));
                    if flight != Some(f.as_str()) {
                        return false;
                    }
                }
                true
            })
            .collect()
    }

    /// Appends a block without consensus or verification, for stores that
    /// keep a chain-shaped journal of their own writes.
    pub(crate) fn append_unverified(&mut self, block: Block) {
        self.committed_ids
            .extend(block.transactions.iter().map(|t| t.tx_id.clone()));
        self.blocks.push(block);
    }

    /// Test and tooling hook: direct mutable access to committed blocks.
    #[doc(hidden)]
    pub fn blocks_mut_unchecked(&mut self) -> &mut Vec<Block> {
        &mut self.blocks
    }
}

/// Verifies `block` as the successor of `prev_hash` at `height`.
pub(crate) fn check_block(
    block: &Block,
    height: u64,
    prev_hash: &str,
    members: &Membership,
    committed: &HashSet<String>,
) -> Result<(), VerifyFailure> {
    check_block_body(block, height, prev_hash, members, committed)?;
    check_votes(block, members)
}

/// Every check except the commit certificate.
pub(crate) fn check_block_body(
    block: &Block,
    height: u64,
    prev_hash: &str,
    members: &Membership,
    committed: &HashSet<String>,
) -> Result<(), VerifyFailure> {
    if block.height != height {
        return Err(VerifyFailure::HeightMismatch);
    }
    let mut in_block = HashSet::new();
    for tx in &block.transactions {
        if !tx.content_hash_ok() {
            return Err(VerifyFailure::HashMismatch);
        }
        if !tx.signature_ok(members) {
            return Err(VerifyFailure::BadSignature);
        }
        if committed.contains(&tx.tx_id) || !in_block.insert(tx.tx_id.as_str()) {
            return Err(VerifyFailure::DuplicateTransaction);
        }
    }
    if block.recompute_tx_digest() != block.tx_digest {
        return Err(VerifyFailure::HashMismatch);
    }
    match block.recompute_hash() {
        Ok(h) if h == block.block_hash => {}
        _ => return Err(VerifyFailure::HashMismatch),
    }
    if block.prev_hash != prev_hash {
        return Err(VerifyFailure::LinkMismatch);
    }
    Ok(())
}

fn check_votes(block: &Block, members: &Membership) -> Result<(), VerifyFailure> {
    let mut voters = BTreeSet::new();
    for v in &block.votes {
        if !voters.insert(&v.node) || !v.verify(members, block.height, &block.block_hash) {
            return Err(VerifyFailure::BadSignature);
        }
    }
    if block.accepting_votes() < members.quorum() {
        return Err(VerifyFailure::InsufficientVotes);
    }
    Ok(())
}
