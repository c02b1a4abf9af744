use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::ledger::{Block, Chain, TransactionRecord};

/// Where a committed transaction sits on the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxPosition {
    pub height: u64,
    pub index: usize,
}

/// Service-specific state folded from committed transactions.
pub trait Projector: Default + Clone {
    const SERVICE: &'static str;
    fn apply(&mut self, at: TxPosition, block_hash: &str, tx: &TransactionRecord);
}

/// A projector plus the bookkeeping that keeps application in chain order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Projection<P> {
    pub service: String,
    pub last_applied_height: u64,
    /// Next transaction index expected within `last_applied_height`.
    next_index: usize,
    pub state: P,
}

impl<P: Projector> Default for Projection<P> {
    fn default() -> Self {
        Projection {
            service: P::SERVICE.to_string(),
            last_applied_height: 0,
            next_index: 0,
            state: P::default(),
        }
    }
}

impl<P: Projector> Projection<P> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies one transaction. It must continue the current block or open
    /// the next one, and its id must match its content.
    pub fn apply_ledger_event(
        &mut self,
        at: TxPosition,
        block_hash: &str,
        tx: &TransactionRecord,
    ) -> Result<(), ServiceError> {
        let continues =
            at.height == self.last_applied_height && at.index == self.next_index && at.height > 0;
        let opens = at.height == self.last_applied_height + 1 && at.index == 0;
        if !continues && !opens {
            return Err(ServiceError::OutOfOrder {
                expected: self.last_applied_height + 1,
                got: at.height,
            });
        }
        if !tx.content_hash_ok() {
            return Err(ServiceError::ChecksumMismatch {
                tx_id: tx.tx_id.clone(),
            });
        }
        self.state.apply(at, block_hash, tx);
        self.last_applied_height = at.height;
        self.next_index = at.index + 1;
        Ok(())
    }

    pub fn apply_block(&mut self, block: &Block) -> Result<(), ServiceError> {
        for (index, tx) in block.transactions.iter().enumerate() {
            self.apply_ledger_event(
                TxPosition {
                    height: block.height,
                    index,
                },
                &block.block_hash,
                tx,
            )?;
        }
        if block.transactions.is_empty() {
            if block.height != self.last_applied_height + 1 {
                return Err(ServiceError::OutOfOrder {
                    expected: self.last_applied_height + 1,
                    got: block.height,
                });
            }
            self.last_applied_height = block.height;
            self.next_index = 0;
        }
        Ok(())
    }

    /// Applies every block above `last_applied_height`.
    pub fn catch_up(&mut self, chain: &Chain) -> Result<(), ServiceError> {
        for block in &chain.blocks()[self.last_applied_height as usize..] {
            self.apply_block(block)?;
        }
        Ok(())
    }
}

/// Genesis replay of `chain`; the reference for incremental application.
pub fn rebuild_projection<P: Projector>(chain: &Chain) -> Result<Projection<P>, ServiceError> {
    let mut p = Projection::new();
    for block in chain.blocks() {
        p.apply_block(block)?;
    }
    Ok(p)
}
