//! Blocks, header hashing and commit votes.

use serde::{Deserialize, Serialize};

use super::codec::{DecodeError, Reader, Writer};
use super::tx::TransactionRecord;
use super::LedgerError;
use crate::crypto::{
    is_hash_hex, sha256_hex, Identity, KeyError, Keyring, Membership, SignatureBytes,
};

/// `prev_hash` of the block at height 1.
pub const GENESIS_PREV_HASH: &str = "0";

/// A validator's signed verdict on `(height, block_hash)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub node: Identity,
    pub accept: bool,
    pub signature: SignatureBytes,
}

impl Vote {
    pub fn signing_bytes(height: u64, block_hash: &str, accept: bool) -> Vec<u8> {
        let mut w = Writer::new();
        w.str("vote").u64(height).str(block_hash).bool(accept);
        w.finish()
    }

    pub fn sign(
        keys: &Keyring,
        node: &Identity,
        height: u64,
        block_hash: &str,
        accept: bool,
    ) -> Result<Vote, KeyError> {
        let signature = keys.sign(node, &Vote::signing_bytes(height, block_hash, accept))?;
        Ok(Vote {
            node: node.clone(),
            accept,
            signature,
        })
    }

    pub fn verify(&self, members: &Membership, height: u64, block_hash: &str) -> bool {
        members.verify_validator(
            &self.node,
            &Vote::signing_bytes(height, block_hash, self.accept),
            &self.signature,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    /// 1-based position in the chain.
    pub height: u64,
    pub prev_hash: String,
    pub transactions: Vec<TransactionRecord>,
    pub tx_digest: String,
    pub block_hash: String,
    pub proposer: Identity,
    pub logical_time: u64,
    /// Commit certificate; empty until the block is committed.
    pub votes: Vec<Vote>,
}

/// Hash over the ordered transaction ids.
pub fn compute_tx_digest<'a>(tx_ids: impl ExactSizeIterator<Item = &'a str>) -> String {
    let mut w = Writer::new();
    w.u32(tx_ids.len() as u32);
    for id in tx_ids {
        w.str(id);
    }
    sha256_hex(&w.finish())
}

/// SHA-256 over the canonical header `(height, prev_hash, tx_digest, proposer, logical_time)`.
pub fn compute_block_hash(
    height: u64,
    prev_hash: &str,
    tx_digest: &str,
    proposer: &Identity,
    logical_time: u64,
) -> Result<String, LedgerError> {
    if prev_hash != GENESIS_PREV_HASH && !is_hash_hex(prev_hash) {
        return Err(LedgerError::InvalidHash(prev_hash.to_string()));
    }
    let mut w = Writer::new();
    w.u64(height)
        .str(prev_hash)
        .str(tx_digest)
        .str(proposer.as_str())
        .u64(logical_time);
    Ok(sha256_hex(&w.finish()))
}

impl Block {
    /// Assembles an unvoted block and computes its digests.
    pub fn assemble(
        height: u64,
        prev_hash: String,
        transactions: Vec<TransactionRecord>,
        proposer: Identity,
        logical_time: u64,
    ) -> Result<Block, LedgerError> {
        let tx_digest = compute_tx_digest(transactions.iter().map(|t| t.tx_id.as_str()));
        let block_hash =
            compute_block_hash(height, &prev_hash, &tx_digest, &proposer, logical_time)?;
        Ok(Block {
            height,
            prev_hash,
            transactions,
            tx_digest,
            block_hash,
            proposer,
            logical_time,
            votes: Vec::new(),
        })
    }

    pub fn recompute_tx_digest(&self) -> String {
        compute_tx_digest(self.transactions.iter().map(|t| t.tx_id.as_str()))
    }

    pub fn recompute_hash(&self) -> Result<String, LedgerError> {
        compute_block_hash(
            self.height,
            &self.prev_hash,
            &self.tx_digest,
            &self.proposer,
            self.logical_time,
        )
    }

    pub fn accepting_votes(&self) -> usize {
        self.votes.iter().filter(|v| v.accept).count()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.height)
            .str(&self.prev_hash)
            .u32(self.transactions.len() as u32);
        for tx in &self.transactions {
            tx.encode_into(&mut w);
        }
        w.str(&self.tx_digest)
            .str(&self.block_hash)
            .str(self.proposer.as_str())
            .u64(self.logical_time);
        w.u32(self.votes.len() as u32);
        for v in &self.votes {
            w.str(v.node.as_str()).bool(v.accept).raw(&v.signature.0);
        }
        w.finish()
    }

    /// Strict inverse of [`Block::encode`]; `base` shifts reported offsets.
    pub fn decode(bytes: &[u8], base: usize) -> Result<Block, DecodeError> {
        let mut r = Reader::with_base(bytes, base);
        let height = r.u64()?;
        let prev_hash = r.str()?;
        let n = r.u32()? as usize;
        // Every record needs well over 64 bytes; refuse absurd counts before allocating.
        if n > bytes.len() / 64 + 1 {
            return Err(r.err("transaction count exceeds record size"));
        }
        let mut transactions = Vec::with_capacity(n);
        for _ in 0..n {
            transactions.push(TransactionRecord::decode_from(&mut r)?);
        }
        let tx_digest = r.str()?;
        let block_hash = r.str()?;
        let proposer = Identity::new(r.str()?);
        let logical_time = r.u64()?;
        let nv = r.u32()? as usize;
        if nv > bytes.len() / 64 + 1 {
            return Err(r.err("vote count exceeds record size"));
        }
        let mut votes = Vec::with_capacity(nv);
        for _ in 0..nv {
            let node = Identity::new(r.str()?);
            let accept = r.bool()?;
            let signature = SignatureBytes(r.array64()?);
            votes.push(Vote {
                node,
                accept,
                signature,
            });
        }
        r.finish()?;
        Ok(Block {
            height,
            prev_hash,
            transactions,
            tx_digest,
            block_hash,
            proposer,
            logical_time,
            votes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_malformed_prev_hash() {
        let p = Identity::node(0);
        assert!(compute_block_hash(1, GENESIS_PREV_HASH, "d", &p, 0).is_ok());
        assert!(matches!(
            compute_block_hash(2, "xyz", "d", &p, 0),
            Err(LedgerError::InvalidHash(_))
        ));
        assert!(compute_block_hash(2, &"A".repeat(64), "d", &p, 0).is_err());
    }

    #[test]
    fn digest_bit_flip_changes_hash() {
        let p = Identity::node(1);
        let digest = sha256_hex(b"txs");
        let base = compute_block_hash(1, "0", &digest, &p, 5).unwrap();
        let mut flipped = digest.clone().into_bytes();
        flipped[10] ^= 0x01;
        let flipped = String::from_utf8(flipped).unwrap();
        assert_ne!(base, compute_block_hash(1, "0", &flipped, &p, 5).unwrap());
    }

    #[test]
    fn block_encoding_round_trip() {
        let mut keys = Keyring::new(3);
        let node = Identity::node(0);
        keys.register(&node);
        let mut b = Block::assemble(1, "0".into(), vec![], node.clone(), 4).unwrap();
        b.votes
            .push(Vote::sign(&keys, &node, 1, &b.block_hash, true).unwrap());
        let bytes = b.encode();
        assert_eq!(Block::decode(&bytes, 0).unwrap(), b);
        assert!(Block::decode(&bytes[..bytes.len() - 1], 0).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(Block::decode(&longer, 0).is_err());
    }
}
