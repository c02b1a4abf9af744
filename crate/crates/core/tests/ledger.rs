use ledgerair_core::crypto::Identity;
use ledgerair_core::ledger::{
    canonical_encode, compute_block_hash, compute_tx_digest, encode_log, load, persist,
    verify_log_bytes, Chain, HistoryFilter, LedgerError, PaymentCaptured, RefundIssued,
    TicketIssued, TransactionRecord, TxKind, TxPayload, Verdict, VerifyFailure, Vote,
};
use ledgerair_core::money::Money;
use ledgerair_core::testkit::{
    commit_block, fixture_chain, fixture_keys, fixture_ticket, FIXTURE_AUTHOR,
};
use proptest::prelude::*;

// Frozen from tests/data/golden_oracle.py, an independent encoder.
const GOLDEN_BODY: &str = "0100000057000000064142313243440000000b42696d616e2042617275610000000642472d3134370000000a44414320746f2043475000000000000000f00000000330314100000000000027100000000b43726564697420436172640000000b7376632d626f6f6b696e670000000000000007";
const GOLDEN_TX_ID: &str = "89ef2427346992e76b7d60558da3eb23597fb646b18bc59821a605dccef9a686";
const GOLDEN_TX_DIGEST: &str = "67310b234b4405afdf0f72ed96f5849c222495f23986d453a34f191e95b5f68f";
const GOLDEN_BLOCK_HASH: &str = "d8635a7b4409d4cd9eb8f7799c1355261901ea0df1773ab4027b163eb7761c27";

// Tip of tests/data/golden.alrb (fixture_chain(42, 3, 2)), frozen from its first verified load.
const GOLDEN_LOG_TIP: &str = "621d41be237f1bcc1215a2c490693f194c0180ebc4b4b5db56b50ce8d1f8d06b";

fn golden_payload() -> TxPayload {
    TxPayload::TicketIssued(TicketIssued {
        pnr: "AB12CD".into(),
        customer: "Biman Barua".into(),
        flight: "BG-147".into(),
        route: "DAC to CGP".into(),
        departure_hour: 240,
        seat: "01A".into(),
        fare: Money(10_000),
        payment_method: "Credit Card".into(),
    })
}

fn author() -> Identity {
    Identity::new(FIXTURE_AUTHOR)
}

#[test]
fn canonical_encoding_matches_independent_encoder() {
    let bytes = canonical_encode(&golden_payload(), &author(), 7);
    assert_eq!(hex(&bytes), GOLDEN_BODY);
    let (keys, _) = fixture_keys(1, 1, 1);
    let tx = TransactionRecord::create(golden_payload(), &author(), 7, &keys).unwrap();
    assert_eq!(tx.tx_id, GOLDEN_TX_ID);
}

#[test]
fn block_header_hash_matches_independent_encoder() {
    let digest = compute_tx_digest([GOLDEN_TX_ID].into_iter());
    assert_eq!(digest, GOLDEN_TX_DIGEST);
    let h = compute_block_hash(1, "0", &digest, &Identity::node(0), 8).unwrap();
    assert_eq!(h, GOLDEN_BLOCK_HASH);
}

#[test]
fn add_transaction_example_and_guards() {
    let (keys, members) = fixture_keys(5, 4, 3);
    let mut chain = Chain::new();
    let tx = TransactionRecord::create(golden_payload(), &author(), 1, &keys).unwrap();
    chain.add_transaction(tx.clone(), &members).unwrap();
    assert_eq!(chain.pending().len(), 1);
    assert_eq!(chain.height(), 0);

    assert_eq!(
        chain.add_transaction(tx.clone(), &members),
        Err(LedgerError::DuplicateTransaction(tx.tx_id.clone()))
    );

    let mut forged = TransactionRecord::create(fixture_ticket(3), &author(), 1, &keys).unwrap();
    forged.signature.0[0] ^= 0xff;
    assert!(matches!(
        chain.add_transaction(forged, &members),
        Err(LedgerError::BadSignature(_))
    ));
}

#[test]
fn seal_block_heights_and_links() {
    let (keys, members) = fixture_keys(5, 4, 3);
    let mut chain = Chain::new();
    assert_eq!(
        chain.seal_block(&Identity::node(0), 0),
        Err(LedgerError::EmptyPool)
    );

    let t1 = TransactionRecord::create(fixture_ticket(1), &author(), 1, &keys).unwrap();
    let b1 = commit_block(&mut chain, vec![t1], &keys, &members, 4);
    assert_eq!((b1.height, b1.prev_hash.as_str()), (1, "0"));
    assert!(chain.pending().is_empty());

    let t2 = TransactionRecord::create(fixture_ticket(2), &author(), 2, &keys).unwrap();
    let b2 = commit_block(&mut chain, vec![t2], &keys, &members, 4);
    assert_eq!(b2.height, 2);
    assert_eq!(b2.prev_hash, b1.block_hash);
    assert_eq!(chain.verify(&members), Verdict::Ok);
}

#[test]
fn verify_detects_payload_edit_and_missing_votes() {
    let (chain, _, members) = fixture_chain(11, 3, 2);
    assert_eq!(chain.verify(&members), Verdict::Ok);

    let mut edited = chain.clone();
    if let TxPayload::TicketIssued(t) =
        &mut edited.blocks_mut_unchecked()[1].transactions[0].payload
    {
        t.customer.replace_range(0..1, "X");
    }
    assert_eq!(
        edited.verify(&members),
        Verdict::Invalid {
            height: 2,
            reason: VerifyFailure::HashMismatch
        }
    );

    // quorum is 3; keep two accepting votes on block 3
    let mut stripped = chain.clone();
    stripped.blocks_mut_unchecked()[2].votes.truncate(2);
    assert_eq!(
        stripped.verify(&members),
        Verdict::Invalid {
            height: 3,
            reason: VerifyFailure::InsufficientVotes
        }
    );
}

#[test]
fn append_committed_rejects_unlinked_block() {
    let (keys, members) = fixture_keys(8, 4, 3);
    let (mut other, ..) = fixture_chain(8, 2, 1);
    let mut chain = Chain::new();
    let t = TransactionRecord::create(fixture_ticket(77), &author(), 1, &keys).unwrap();
    commit_block(&mut chain, vec![t], &keys, &members, 4);
    let foreign = other.blocks_mut_unchecked()[1].clone();
    let mut relinked = foreign.clone();
    relinked.votes = (0..4)
        .map(|i| Vote::sign(&keys, &Identity::node(i), 2, &relinked.block_hash, true).unwrap())
        .collect();
    let err = chain.append_committed(relinked, &members).unwrap_err();
    assert_eq!(
        err,
        LedgerError::Rejected {
            height: 2,
            reason: VerifyFailure::LinkMismatch
        }
    );
}

fn history_fixture() -> (Chain, Vec<String>) {
    let (keys, members) = fixture_keys(3, 4, 3);
    let a = author();
    let mut chain = Chain::new();
    let mut ids = Vec::new();
    let mut push = |chain: &mut Chain, p: TxPayload, t: u64| {
        let tx = TransactionRecord::create(p, &a, t, &keys).unwrap();
        ids.push(tx.tx_id.clone());
        commit_block(chain, vec![tx], &keys, &members, 4);
    };
    push(&mut chain, fixture_ticket(1), 1);
    push(&mut chain, fixture_ticket(2), 2);
    let pay = |pnr: &str| {
        TxPayload::PaymentCaptured(PaymentCaptured {
            payment_id: format!("PAY-{pnr}"),
            pnr: pnr.into(),
            amount: Money(10_001),
            method: "Credit Card".into(),
        })
    };
    push(&mut chain, pay("FX0001"), 3);
    push(&mut chain, pay("FX0002"), 4);
    push(
        &mut chain,
        TxPayload::RefundIssued(RefundIssued {
            pnr: "FX0001".into(),
            payment_id: "PAY-FX0001".into(),
            amount: Money(8_000),
        }),
        5,
    );
    (chain, ids)
}

/// Brute-force oracle: scan every block and match filter fields directly.
fn scan_oracle(chain: &Chain, pnr: Option<&str>, kind: Option<TxKind>) -> Vec<String> {
    let mut out = Vec::new();
    for b in chain.blocks() {
        for tx in &b.transactions {
            let pnr_ok = pnr.is_none_or(|p| tx.payload.pnr() == Some(p));
            let kind_ok = kind.is_none_or(|k| tx.kind() == k);
            if pnr_ok && kind_ok {
                out.push(tx.tx_id.clone());
            }
        }
    }
    out
}

#[test]
fn query_history_matches_linear_scan() {
    let (chain, ids) = history_fixture();
    let got: Vec<String> = chain
        .query_history(&HistoryFilter::pnr("FX0001"))
        .iter()
        .map(|l| l.tx.tx_id.clone())
        .collect();
    assert_eq!(got, vec![ids[0].clone(), ids[2].clone(), ids[4].clone()]);
    assert_eq!(got, scan_oracle(&chain, Some("FX0001"), None));

    let all = chain.query_history(&HistoryFilter::default());
    assert_eq!(all.len(), 5);
    assert!(chain
        .query_history(&HistoryFilter::pnr("NOPE00"))
        .is_empty());

    let pay = HistoryFilter {
        kind: Some(TxKind::PaymentCaptured),
        ..Default::default()
    };
    let got: Vec<String> = chain
        .query_history(&pay)
        .iter()
        .map(|l| l.tx.tx_id.clone())
        .collect();
    assert_eq!(
        got,
        scan_oracle(&chain, None, Some(TxKind::PaymentCaptured))
    );

    let by_customer = HistoryFilter {
        customer: Some("Customer 2".into()),
        ..Default::default()
    };
    let got: Vec<String> = chain
        .query_history(&by_customer)
        .iter()
        .map(|l| l.tx.tx_id.clone())
        .collect();
    assert_eq!(got, vec![ids[1].clone(), ids[3].clone()]);

    let window = HistoryFilter {
        time_range: Some((2, 4)),
        ..Default::default()
    };
    assert_eq!(chain.query_history(&window).len(), 3);
}

#[test]
fn persist_load_round_trip_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.alrb");
    let (chain, _, members) = fixture_chain(21, 10, 2);
    persist(&chain, &path).unwrap();
    let back = load(&path).unwrap();
    assert_eq!(back, chain);
    assert_eq!(back.verify(&members), Verdict::Ok);

    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..5], b"ALRB\x01");
    std::fs::write(&path, &bytes[..bytes.len() - 17]).unwrap();
    assert!(matches!(load(&path), Err(LedgerError::CorruptLog { .. })));
}

#[test]
fn golden_log_tip_is_frozen() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/golden.alrb");
    let chain = load(path).unwrap();
    let (_, members) = fixture_keys(42, 4, 3);
    assert_eq!(chain.verify(&members), Verdict::Ok);
    assert_eq!(chain.height(), 3);
    assert_eq!(chain.tip_hash(), GOLDEN_LOG_TIP);
}

#[test]
#[ignore = "regenerates tests/data/golden.alrb"]
fn regenerate_golden_log() {
    let (chain, ..) = fixture_chain(42, 3, 2);
    persist(
        &chain,
        concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/golden.alrb"),
    )
    .unwrap();
    println!("tip {}", chain.tip_hash());
}

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encoding_equal_iff_records_equal(a in 0usize..40, b in 0usize..40, ta in 0u64..3, tb in 0u64..3) {
        let ea = canonical_encode(&fixture_ticket(a), &author(), ta);
        let eb = canonical_encode(&fixture_ticket(b), &author(), tb);
        prop_assert_eq!(ea == eb, a == b && ta == tb);
    }

    #[test]
    fn any_single_byte_edit_is_caught_at_or_before_its_block(pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let (chain, _, members) = fixture_chain(99, 4, 2);
        let mut bytes = encode_log(chain.blocks());
        // skip the 5-byte file header; mutations target block records
        let i = 5 + pos.index(bytes.len() - 5);
        bytes[i] ^= flip;
        let mut start = 5;
        let mut mutated_height = 0;
        for b in chain.blocks() {
            let end = start + 4 + b.encode().len();
            if i < end { mutated_height = b.height; break; }
            start = end;
        }
        match verify_log_bytes(&bytes, &members) {
            Verdict::Invalid { height, .. } => prop_assert!(height <= mutated_height),
            Verdict::Ok => prop_assert!(false, "mutation at byte {} undetected", i),
        }
    }
}
