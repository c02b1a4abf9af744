//! Ledger transaction records and their canonical encoding.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::codec::{DecodeError, Reader, Writer};
use crate::crypto::{sha256_hex, Identity, KeyError, Keyring, Membership, SignatureBytes};
use crate::money::Money;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TxKind {
    TicketIssued,
    PaymentCaptured,
    RefundIssued,
    BookingCancelled,
    ReviewSubmitted,
    InventoryAdjusted,
}

impl TxKind {
    pub const ALL: [TxKind; 6] = [
        TxKind::TicketIssued,
        TxKind::PaymentCaptured,
        TxKind::RefundIssued,
        TxKind::BookingCancelled,
        TxKind::ReviewSubmitted,
        TxKind::InventoryAdjusted,
    ];

    pub fn tag(self) -> u8 {
        match self {
            TxKind::TicketIssued => 1,
            TxKind::PaymentCaptured => 2,
            TxKind::RefundIssued => 3,
            TxKind::BookingCancelled => 4,
            TxKind::ReviewSubmitted => 5,
            TxKind::InventoryAdjusted => 6,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        TxKind::ALL.into_iter().find(|k| k.tag() == tag)
    }

    pub fn parse(s: &str) -> Option<Self> {
        TxKind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn name(self) -> &'static str {
        match self {
            TxKind::TicketIssued => "TicketIssued",
            TxKind::PaymentCaptured => "PaymentCaptured",
            TxKind::RefundIssued => "RefundIssued",
            TxKind::BookingCancelled => "BookingCancelled",
            TxKind::ReviewSubmitted => "ReviewSubmitted",
            TxKind::InventoryAdjusted => "InventoryAdjusted",
        }
    }
}

impl fmt::Display for TxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TicketIssued {
    pub pnr: String,
    pub customer: String,
    pub flight: String,
    pub route: String,
    pub departure_hour: u64,
    pub seat: String,
    pub fare: Money,
    pub payment_method: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentCaptured {
    pub payment_id: String,
    pub pnr: String,
    pub amount: Money,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefundIssued {
    pub pnr: String,
    pub payment_id: String,
    pub amount: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookingCancelled {
    pub pnr: String,
    pub flight: String,
    pub seat: String,
    pub cancel_hour: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewSubmitted {
    pub review_id: String,
    pub pnr: String,
    pub rating: u8,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryAdjusted {
    pub flight: String,
    pub route: String,
    pub departure_hour: u64,
    pub capacity: u32,
    pub fare: Money,
    pub fare_class: String,
}

/// Kind-specific transaction body. The variant is the transaction kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TxPayload {
    TicketIssued(TicketIssued),
    PaymentCaptured(PaymentCaptured),
    RefundIssued(RefundIssued),
    BookingCancelled(BookingCancelled),
    ReviewSubmitted(ReviewSubmitted),
    InventoryAdjusted(InventoryAdjusted),
}

impl TxPayload {
    pub fn kind(&self) -> TxKind {
        match self {
            TxPayload::TicketIssued(_) => TxKind::TicketIssued,
            TxPayload::PaymentCaptured(_) => TxKind::PaymentCaptured,
            TxPayload::RefundIssued(_) => TxKind::RefundIssued,
            TxPayload::BookingCancelled(_) => TxKind::BookingCancelled,
            TxPayload::ReviewSubmitted(_) => TxKind::ReviewSubmitted,
            TxPayload::InventoryAdjusted(_) => TxKind::InventoryAdjusted,
        }
    }

    /// PNR the record concerns, if any.
    pub fn pnr(&self) -> Option<&str> {
        match self {
            TxPayload::TicketIssued(t) => Some(&t.pnr),
            TxPayload::PaymentCaptured(p) => Some(&p.pnr),
            TxPayload::RefundIssued(r) => Some(&r.pnr),
            TxPayload::BookingCancelled(c) => Some(&c.pnr),
            TxPayload::ReviewSubmitted(r) => Some(&r.pnr),
            TxPayload::InventoryAdjusted(_) => None,
        }
    }

    /// Flight named directly by the record, if any.
    pub fn flight(&self) -> Option<&str> {
        match self {
            TxPayload::TicketIssued(t) => Some(&t.flight),
            TxPayload::BookingCancelled(c) => Some(&c.flight),
            TxPayload::InventoryAdjusted(i) => Some(&i.flight),
            _ => None,
        }
    }

    fn encode_into(&self, w: &mut Writer) {
        match self {
            TxPayload::TicketIssued(t) => {
                w.str(&t.pnr).str(&t.customer).str(&t.flight).str(&t.route);
                w.u64(t.departure_hour)
                    .str(&t.seat)
                    .u64(t.fare.0)
                    .str(&t.payment_method);
            }
            TxPayload::PaymentCaptured(p) => {
                w.str(&p.payment_id)
                    .str(&p.pnr)
                    .u64(p.amount.0)
                    .str(&p.method);
            }
            TxPayload::RefundIssued(r) => {
                w.str(&r.pnr).str(&r.payment_id).u64(r.amount.0);
            }
            TxPayload::BookingCancelled(c) => {
                w.str(&c.pnr).str(&c.flight).str(&c.seat).u64(c.cancel_hour);
            }
            TxPayload::ReviewSubmitted(r) => {
                w.str(&r.review_id).str(&r.pnr).u8(r.rating).str(&r.text);
            }
            TxPayload::InventoryAdjusted(i) => {
                w.str(&i.flight)
                    .str(&i.route)
                    .u64(i.departure_hour)
                    .u32(i.capacity);
                w.u64(i.fare.0).str(&i.fare_class);
            }
        }
    }

    fn decode_from(kind: TxKind, r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(match kind {
            TxKind::TicketIssued => TxPayload::TicketIssued(TicketIssued {
                pnr: r.str()?,
                customer: r.str()?,
                flight: r.str()?,
                route: r.str()?,
                departure_hour: r.u64()?,
                seat: r.str()?,
                fare: Money(r.u64()?),
                payment_method: r.str()?,
            }),
            TxKind::PaymentCaptured => TxPayload::PaymentCaptured(PaymentCaptured {
                payment_id: r.str()?,
                pnr: r.str()?,
                amount: Money(r.u64()?),
                method: r.str()?,
            }),
            TxKind::RefundIssued => TxPayload::RefundIssued(RefundIssued {
                pnr: r.str()?,
                payment_id: r.str()?,
                amount: Money(r.u64()?),
            }),
            TxKind::BookingCancelled => TxPayload::BookingCancelled(BookingCancelled {
                pnr: r.str()?,
                flight: r.str()?,
                seat: r.str()?,
                cancel_hour: r.u64()?,
            }),
            TxKind::ReviewSubmitted => TxPayload::ReviewSubmitted(ReviewSubmitted {
                review_id: r.str()?,
                pnr: r.str()?,
                rating: r.u8()?,
                text: r.str()?,
            }),
            TxKind::InventoryAdjusted => TxPayload::InventoryAdjusted(InventoryAdjusted {
                flight: r.str()?,
                route: r.str()?,
                departure_hour: r.u64()?,
                capacity: r.u32()?,
                fare: Money(r.u64()?),
                fare_class: r.str()?,
            }),
        })
    }
}

/// One immutable ledger entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionRecord {
    /// Hex SHA-256 of [`canonical_encode`].
    pub tx_id: String,
    pub payload: TxPayload,
    pub author: Identity,
    pub signature: SignatureBytes,
    pub logical_time: u64,
}

/// Deterministic encoding of `(kind, payload, author, logical_time)`.
///
/// This is the content that `tx_id` hashes and the author signs.
pub fn canonical_encode(payload: &TxPayload, author: &Identity, logical_time: u64) -> Vec<u8> {
    let mut body = Writer::new();
    payload.encode_into(&mut body);
    let body = body.finish();
    let mut w = Writer::new();
    w.u8(payload.kind().tag())
        .bytes(&body)
        .str(author.as_str())
        .u64(logical_time);
    w.finish()
}

impl TransactionRecord {
    /// Builds and signs a record with `author`'s key.
    pub fn create(
        payload: TxPayload,
        author: &Identity,
        logical_time: u64,
        keys: &Keyring,
    ) -> Result<Self, KeyError> {
        let bytes = canonical_encode(&payload, author, logical_time);
        let signature = keys.sign(author, &bytes)?;
        Ok(TransactionRecord {
            tx_id: sha256_hex(&bytes),
            payload,
            author: author.clone(),
            signature,
            logical_time,
        })
    }

    pub fn kind(&self) -> TxKind {
        self.payload.kind()
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical_encode(&self.payload, &self.author, self.logical_time)
    }

    /// True when `tx_id` matches the content hash.
    pub fn content_hash_ok(&self) -> bool {
        sha256_hex(&self.canonical_bytes()) == self.tx_id
    }

    pub fn signature_ok(&self, members: &Membership) -> bool {
        members.verify_author(&self.author, &self.canonical_bytes(), &self.signature)
    }

    /// Storage form: `[u32 len][canonical body][tx_id][signature]`.
    pub fn encode_into(&self, w: &mut Writer) {
        w.bytes(&self.canonical_bytes())
            .str(&self.tx_id)
            .raw(&self.signature.0);
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let body_at = r.offset();
        let body = r.bytes()?;
        let mut br = Reader::with_base(body, body_at + 4);
        let kind = TxKind::from_tag(br.u8()?).ok_or_else(|| br.err("unknown transaction kind"))?;
        let payload_at = br.offset() + 4;
        let payload_bytes = br.bytes()?;
        let mut pr = Reader::with_base(payload_bytes, payload_at);
        let payload = TxPayload::decode_from(kind, &mut pr)?;
        pr.finish()?;
        let author = Identity::new(br.str()?);
        let logical_time = br.u64()?;
        br.finish()?;
        let tx_id = r.str()?;
        let signature = SignatureBytes(r.array64()?);
        Ok(TransactionRecord {
            tx_id,
            payload,
            author,
            signature,
            logical_time,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ticket(customer: &str) -> TxPayload {
        TxPayload::TicketIssued(TicketIssued {
            pnr: "AB12CD".into(),
            customer: customer.into(),
            flight: "BG-147".into(),
            route: "DAC to CGP".into(),
            departure_hour: 240,
            seat: "01A".into(),
            fare: Money(10_000),
            payment_method: "Credit Card".into(),
        })
    }

    #[test]
    fn encoding_is_deterministic_and_content_sensitive() {
        let a = Identity::new("svc-booking");
        assert_eq!(
            canonical_encode(&ticket("Biman Barua"), &a, 3),
            canonical_encode(&ticket("Biman Barua"), &a, 3)
        );
        assert_ne!(
            canonical_encode(&ticket("Biman Barua"), &a, 3),
            canonical_encode(&ticket("Biman B."), &a, 3)
        );
        assert_ne!(
            canonical_encode(&ticket("x"), &a, 3),
            canonical_encode(&ticket("x"), &a, 4)
        );
    }

    #[test]
    fn storage_round_trip() {
        let author = Identity::new("svc-booking");
        let mut keys = Keyring::new(1);
        keys.register(&author);
        let tx = TransactionRecord::create(ticket("Biman Barua"), &author, 9, &keys).unwrap();
        let mut w = Writer::new();
        tx.encode_into(&mut w);
        let bytes = w.finish();
        let mut r = Reader::new(&bytes);
        let back = TransactionRecord::decode_from(&mut r).unwrap();
        r.finish().unwrap();
        assert_eq!(back, tx);
        assert!(back.content_hash_ok());
    }

    #[test]
    fn kind_tags_are_stable() {
        for k in TxKind::ALL {
            assert_eq!(TxKind::from_tag(k.tag()), Some(k));
            assert_eq!(TxKind::parse(k.name()), Some(k));
        }
        assert_eq!(TxKind::from_tag(0), None);
    }
}
