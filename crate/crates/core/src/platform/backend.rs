use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::consensus::{ClusterWorld, QuorumConfig, TxStatus};
use crate::contract::{CommitAborted, CommittedRef, ContractError, LedgerHandle};
use crate::crypto::{Identity, Keyring};
use crate::ledger::{Block, Chain, LogWriter, TransactionRecord, TxKind, TxPayload};
use crate::services::{
    InventoryProjector, PaymentProjector, ProfileProjector, ServiceError, ServiceFacts,
    ServiceProjections,
};

/// Service identity that signs each kind of record.
pub fn author_for(kind: TxKind) -> Identity {
    Identity::new(match kind {
        TxKind::TicketIssued | TxKind::BookingCancelled => "svc-booking",
        TxKind::PaymentCaptured | TxKind::RefundIssued => "svc-payment",
        TxKind::ReviewSubmitted => "svc-review",
        TxKind::InventoryAdjusted => "svc-inventory",
    })
}

pub const AUTHORS: [TxKind; 4] = [
    TxKind::TicketIssued,
    TxKind::PaymentCaptured,
    TxKind::ReviewSubmitted,
    TxKind::InventoryAdjusted,
];

pub(crate) fn author_keys(seed: u64) -> Keyring {
    let mut keys = Keyring::new(seed);
    for kind in AUTHORS {
        keys.register(&author_for(kind));
    }
    keys
}

/// Replicated ledger: every write goes through cluster consensus and every
/// service reads its own projection of the committed chain.
pub(crate) struct LedgerBackend {
    pub world: ClusterWorld,
    pub projections: ServiceProjections,
    pub writer: Option<LogWriter>,
    written: u64,
    logical_time: u64,
}

impl LedgerBackend {
    pub fn new(cluster: QuorumConfig, seed: u64) -> Result<Self, ServiceError> {
        let world = ClusterWorld::new(cluster, seed, author_keys(seed))
            .map_err(|e| ServiceError::Ledger(e.to_string()))?;
        Ok(LedgerBackend {
            world,
            projections: ServiceProjections::default(),
            writer: None,
            written: 0,
            logical_time: 0,
        })
    }

    /// Brings projections and the persisted log up to the canonical chain.
    pub fn sync(&mut self) -> Result<(), ServiceError> {
        let chain = self.world.canonical_chain();
        if chain.height() > self.projections.height() {
            self.projections.catch_up(chain)?;
        }
        if let Some(w) = self.writer.as_mut() {
            for block in &chain.blocks()[self.written as usize..] {
                w.append(block)
                    .map_err(|e| ServiceError::Ledger(e.to_string()))?;
            }
        }
        self.written = chain.height();
        Ok(())
    }

    pub fn attach_writer(&mut self, writer: LogWriter) {
        self.written = self.world.canonical_chain().height();
        self.writer = Some(writer);
    }

    fn commit_budget(&self) -> u64 {
        let c = self.world.config();
        4 * (c.vote_timeout + 4 * c.latency) + 20
    }

    fn committed_ref(&self, tx: &TransactionRecord) -> Option<CommittedRef> {
        match self.world.tx_status(&tx.tx_id) {
            Some(TxStatus::Committed { height, block_hash }) => Some(CommittedRef {
                tx_id: tx.tx_id.clone(),
                kind: tx.kind(),
                height: *height,
                block_hash: block_hash.clone(),
            }),
            _ => None,
        }
    }
}

impl LedgerHandle for LedgerBackend {
    fn prepare(&mut self, payload: TxPayload) -> Result<TransactionRecord, ContractError> {
        self.logical_time += 1;
        TransactionRecord::create(
            payload.clone(),
            &author_for(payload.kind()),
            self.logical_time,
            self.world.keys(),
        )
        .map_err(|e| ContractError::Ledger(e.to_string()))
    }

    fn commit(&mut self, txs: &[TransactionRecord]) -> Result<Vec<CommittedRef>, CommitAborted> {
        for tx in txs {
            self.world.submit(tx.clone());
        }
        let settled = |w: &ClusterWorld| {
            txs.iter()
                .all(|t| !matches!(w.tx_status(&t.tx_id), Some(TxStatus::Pending)))
                && txs.iter().all(|t| match w.tx_status(&t.tx_id) {
                    Some(TxStatus::Committed { height, .. }) => {
                        w.canonical_chain().height() >= *height
                    }
                    _ => true,
                })
        };
        for _ in 0..self.commit_budget() {
            if settled(&self.world) {
                break;
            }
            self.world.step();
        }
        let refs: Vec<CommittedRef> = txs.iter().filter_map(|t| self.committed_ref(t)).collect();
        let sync = self.sync();
        if refs.len() == txs.len() && sync.is_ok() {
            return Ok(refs);
        }
        for tx in txs {
            self.world.withdraw(&tx.tx_id);
        }
        Err(CommitAborted {
            height: self.world.next_height(),
            committed: refs,
        })
    }
}

/// Pre-ledger architecture: the booking service keeps the only complete
/// store and pushes each change to the other services as a direct message
/// that may be lost.
pub(crate) struct BaselineBackend {
    pub authority: ServiceProjections,
    pub journal: Chain,
    pub inventory: InventoryProjector,
    pub payment: PaymentProjector,
    pub profile: ProfileProjector,
    keys: Keyring,
    rng: ChaCha8Rng,
    drop_rate: f64,
    pub clock: u64,
    pub sent: u64,
    pub dropped: u64,
    logical_time: u64,
}

impl BaselineBackend {
    pub fn new(seed: u64, drop_rate: f64) -> Self {
        BaselineBackend {
            authority: ServiceProjections::default(),
            journal: Chain::new(),
            inventory: InventoryProjector::default(),
            payment: PaymentProjector::default(),
            profile: ProfileProjector::default(),
            keys: author_keys(seed),
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0xBA5E_11E0),
            drop_rate: drop_rate.clamp(0.0, 1.0),
            clock: 0,
            sent: 0,
            dropped: 0,
            logical_time: 0,
        }
    }

    /// Loads reference data into every store directly, as each service does
    /// from the seed file at boot.
    pub fn load_reference(&mut self, payload: &TxPayload) {
        self.inventory.apply_payload(payload, 0);
    }

    fn deliver(&mut self, payload: &TxPayload, height: u64) {
        let lossy = |rng: &mut ChaCha8Rng, sent: &mut u64, dropped: &mut u64| {
            *sent += 1;
            let lost = self.drop_rate > 0.0 && rng.random_range(0.0..1.0) < self.drop_rate;
            *dropped += lost as u64;
            !lost
        };
        if lossy(&mut self.rng, &mut self.sent, &mut self.dropped) {
            self.inventory.apply_payload(payload, height);
        }
        if lossy(&mut self.rng, &mut self.sent, &mut self.dropped) {
            self.payment.apply_payload(payload);
        }
        if lossy(&mut self.rng, &mut self.sent, &mut self.dropped) {
            self.profile.apply_payload(payload);
        }
    }

    pub fn facts(&self) -> Vec<ServiceFacts> {
        vec![
            ServiceFacts::from_booking(&self.authority.booking.state),
            ServiceFacts::from_inventory(&self.inventory),
            ServiceFacts::from_payment(&self.payment),
            ServiceFacts::from_profile(&self.profile),
        ]
    }
}

impl LedgerHandle for BaselineBackend {
    fn prepare(&mut self, payload: TxPayload) -> Result<TransactionRecord, ContractError> {
        self.logical_time += 1;
        TransactionRecord::create(
            payload.clone(),
            &author_for(payload.kind()),
            self.logical_time,
            &self.keys,
        )
        .map_err(|e| ContractError::Ledger(e.to_string()))
    }

    /// Writes to the local store immediately; there is nothing to vote on.
    fn commit(&mut self, txs: &[TransactionRecord]) -> Result<Vec<CommittedRef>, CommitAborted> {
        self.clock += 1;
        let height = self.journal.height() + 1;
        let block = Block::assemble(
            height,
            self.journal.tip_hash().to_string(),
            txs.to_vec(),
            Identity::new("svc-booking"),
            self.clock,
        )
        .expect("journal tip is well formed");
        if self.authority.apply_block(&block).is_err() {
            return Err(CommitAborted {
                height,
                committed: Vec::new(),
            });
        }
        for tx in txs {
            self.deliver(&tx.payload, height);
        }
        let refs = txs
            .iter()
            .map(|t| CommittedRef {
                tx_id: t.tx_id.clone(),
                kind: t.kind(),
                height,
                block_hash: block.block_hash.clone(),
            })
            .collect();
        self.journal.append_unverified(block);
        Ok(refs)
    }
}

pub(crate) enum Backend {
    Ledger(Box<LedgerBackend>),
    Baseline(Box<BaselineBackend>),
}

impl Backend {
    pub fn projections(&self) -> &ServiceProjections {
        match self {
            Backend::Ledger(l) => &l.projections,
            Backend::Baseline(b) => &b.authority,
        }
    }

    pub fn chain(&self) -> &Chain {
        match self {
            Backend::Ledger(l) => l.world.canonical_chain(),
            Backend::Baseline(b) => &b.journal,
        }
    }

    pub fn clock(&self) -> u64 {
        match self {
            Backend::Ledger(l) => l.world.clock(),
            Backend::Baseline(b) => b.clock,
        }
    }

    pub fn facts(&self) -> Vec<ServiceFacts> {
        match self {
            Backend::Ledger(l) => l.projections.facts(),
            Backend::Baseline(b) => b.facts(),
        }
    }

    pub fn handle(&mut self) -> &mut dyn LedgerHandle {
        match self {
            Backend::Ledger(l) => l.as_mut(),
            Backend::Baseline(b) => b.as_mut(),
        }
    }

    pub fn sync(&mut self) -> Result<(), ServiceError> {
        match self {
            Backend::Ledger(l) => l.sync(),
            Backend::Baseline(_) => Ok(()),
        }
    }
}

/// Notification outbox, read by polling.
#[derive(Debug, Default)]
pub(crate) struct Outbox {
    pub sent: Vec<crate::contract::NotificationReceipt>,
}

impl crate::contract::Notifier for Outbox {
    fn notify(
        &mut self,
        recipient: &str,
        message: &str,
        instance_id: &str,
    ) -> crate::contract::NotificationReceipt {
        let receipt = crate::contract::NotificationReceipt {
            id: self.sent.len() as u64 + 1,
            recipient: recipient.to_string(),
            message: message.to_string(),
            instance_id: instance_id.to_string(),
        };
        self.sent.push(receipt.clone());
        receipt
    }
}

pub(crate) type Counters = BTreeMap<&'static str, u64>;
