use serde::{Deserialize, Serialize};

use super::node::RejectReason;
use crate::crypto::{Identity, KeyError, Keyring, Membership, SignatureBytes};
use crate::ledger::codec::Writer;
use crate::ledger::{Block, Vote};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    Prepare,
    Promise,
    Propose,
    Vote,
    Commit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageBody {
    /// Leader of a ballot > 0 asks for promises.
    Prepare,
    /// Promise not to accept lower ballots, reporting the last accepted block.
    Promise {
        accepted: Option<(u64, Block)>,
    },
    Propose {
        block: Block,
    },
    /// `vote` is the signed verdict that ends up in the commit certificate.
    Vote {
        vote: Vote,
        block_hash: String,
        reason: Option<RejectReason>,
    },
    /// A decided block with its certificate.
    Commit {
        block: Block,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsensusMessage {
    pub height: u64,
    pub ballot: u64,
    pub sender: Identity,
    pub body: MessageBody,
    pub signature: SignatureBytes,
}

impl ConsensusMessage {
    pub fn kind(&self) -> MessageKind {
        match self.body {
            MessageBody::Prepare => MessageKind::Prepare,
            MessageBody::Promise { .. } => MessageKind::Promise,
            MessageBody::Propose { .. } => MessageKind::Propose,
            MessageBody::Vote { .. } => MessageKind::Vote,
            MessageBody::Commit { .. } => MessageKind::Commit,
        }
    }

    /// Hash of the block the message is about, if any.
    pub fn block_hash(&self) -> Option<&str> {
        match &self.body {
            MessageBody::Prepare => None,
            MessageBody::Promise { accepted } => {
                accepted.as_ref().map(|(_, b)| b.block_hash.as_str())
            }
            MessageBody::Propose { block } | MessageBody::Commit { block } => {
                Some(&block.block_hash)
            }
            MessageBody::Vote { block_hash, .. } => Some(block_hash),
        }
    }

    pub fn accept(&self) -> Option<bool> {
        match &self.body {
            MessageBody::Vote { vote, .. } => Some(vote.accept),
            _ => None,
        }
    }

    fn signing_bytes(
        kind: MessageKind,
        height: u64,
        ballot: u64,
        block_hash: Option<&str>,
    ) -> Vec<u8> {
        let mut w = Writer::new();
        w.str("consensus")
            .u8(kind as u8)
            .u64(height)
            .u64(ballot)
            .str(block_hash.unwrap_or(""));
        w.finish()
    }

    pub fn signed(
        keys: &Keyring,
        sender: &Identity,
        height: u64,
        ballot: u64,
        body: MessageBody,
    ) -> Result<Self, KeyError> {
        let mut msg = ConsensusMessage {
            height,
            ballot,
            sender: sender.clone(),
            body,
            signature: SignatureBytes::ZERO,
        };
        msg.signature = match &msg.body {
            // The vote already carries a signature over (height, hash, accept).
            MessageBody::Vote { vote, .. } => vote.signature,
            _ => keys.sign(
                sender,
                &Self::signing_bytes(msg.kind(), height, ballot, msg.block_hash()),
            )?,
        };
        Ok(msg)
    }

    pub fn verify(&self, members: &Membership) -> bool {
        match &self.body {
            MessageBody::Vote {
                vote, block_hash, ..
            } => {
                vote.node == self.sender
                    && vote.signature == self.signature
                    && vote.verify(members, self.height, block_hash)
            }
            _ => members.verify_validator(
                &self.sender,
                &Self::signing_bytes(self.kind(), self.height, self.ballot, self.block_hash()),
                &self.signature,
            ),
        }
    }
}
