//! Fixture builders shared by unit tests, integration tests and benches.

use crate::crypto::{Identity, Keyring, Membership};
use crate::ledger::{
    Block, Chain, InventoryAdjusted, TicketIssued, TransactionRecord, TxPayload, Vote,
};
use crate::money::Money;

pub const FIXTURE_AUTHOR: &str = "svc-booking";

/// Keys for `n` validators plus the fixture author, and the matching membership.
pub fn fixture_keys(seed: u64, n: usize, quorum: usize) -> (Keyring, Membership) {
    let mut keys = Keyring::new(seed);
    let validators: Vec<Identity> = (0..n).map(Identity::node).collect();
    for v in &validators {
        keys.register(v);
    }
    keys.register(&Identity::new(FIXTURE_AUTHOR));
    let members = keys.membership(&validators, quorum);
    (keys, members)
}

pub fn fixture_ticket(i: usize) -> TxPayload {
    TxPayload::TicketIssued(TicketIssued {
        pnr: format!("FX{i:04}"),
        customer: format!("Customer {i}"),
        flight: "BG-147".into(),
        route: "DAC to CGP".into(),
        departure_hour: 240,
        seat: format!("{:02}A", i + 1),
        fare: Money(10_000 + i as u64),
        payment_method: "Credit Card".into(),
    })
}

/// Opens the fixture flight with `capacity` seats.
pub fn fixture_inventory(capacity: u32) -> TxPayload {
    TxPayload::InventoryAdjusted(InventoryAdjusted {
        flight: "BG-147".into(),
        route: "DAC to CGP".into(),
        departure_hour: 240,
        capacity,
        fare: Money(10_000),
        fare_class: "Y".into(),
    })
}

/// Keys holding only the fixture author, for handing to a cluster.
pub fn fixture_author_keys(seed: u64) -> Keyring {
    let mut keys = Keyring::new(seed);
    keys.register(&Identity::new(FIXTURE_AUTHOR));
    keys
}

/// Signed fixture transactions: the flight opening followed by `tickets`
/// tickets (at most 98, one row each).
pub fn fixture_workload(keys: &Keyring, tickets: usize) -> Vec<TransactionRecord> {
    let author = Identity::new(FIXTURE_AUTHOR);
    std::iter::once(fixture_inventory(6 * (tickets as u32 + 1)))
        .chain((1..=tickets).map(fixture_ticket))
        .enumerate()
        .map(|(t, p)| {
            TransactionRecord::create(p, &author, t as u64, keys)
                .expect("fixture author registered")
        })
        .collect()
}

/// Seals `txs` onto `chain` as one block signed by every validator.
pub fn commit_block(
    chain: &mut Chain,
    txs: Vec<TransactionRecord>,
    keys: &Keyring,
    members: &Membership,
    n: usize,
) -> Block {
    for tx in txs {
        chain
            .add_transaction(tx, members)
            .expect("fixture tx admitted");
    }
    let proposer = Identity::node(chain.height() as usize % n);
    let mut block = chain
        .seal_block(&proposer, chain.height() * 10 + 1)
        .expect("non-empty pool");
    for i in 0..n {
        block.votes.push(
            Vote::sign(
                keys,
                &Identity::node(i),
                block.height,
                &block.block_hash,
                true,
            )
            .unwrap(),
        );
    }
    chain
        .append_committed(block.clone(), members)
        .expect("fixture block commits");
    block
}

/// A verified chain of `blocks` blocks with `per_block` ticket transactions each.
pub fn fixture_chain(seed: u64, blocks: usize, per_block: usize) -> (Chain, Keyring, Membership) {
    let (keys, members) = fixture_keys(seed, 4, 3);
    let author = Identity::new(FIXTURE_AUTHOR);
    let mut chain = Chain::new();
    let mut i = 0;
    for b in 0..blocks {
        let txs = (0..per_block)
            .map(|_| {
                i += 1;
                TransactionRecord::create(fixture_ticket(i), &author, b as u64 * 10, &keys).unwrap()
            })
            .collect();
        commit_block(&mut chain, txs, &keys, &members, 4);
    }
    (chain, keys, members)
}
