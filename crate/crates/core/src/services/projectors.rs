//! One projector per service. Each keeps only the state its service owns.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::projection::{Projector, TxPosition};
use crate::contract::{BookingStatus, FlightInfo};
use crate::ledger::{seat_labels, TransactionRecord, TxKind, TxPayload};
use crate::money::Money;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Booking {
    pub pnr: String,
    pub customer: String,
    pub flight: String,
    pub route: String,
    pub departure_hour: u64,
    pub seat: String,
    pub fare: Money,
    pub payment_method: String,
    pub status: BookingStatus,
    pub payment_id: Option<String>,
    pub captured: Money,
    pub refunded: Money,
}

/// A status change the booking state machine does not allow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IllegalTransition {
    pub pnr: String,
    pub from: Option<BookingStatus>,
    pub to: BookingStatus,
    pub height: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookingProjector {
    pub bookings: BTreeMap<String, Booking>,
    pub illegal: Vec<IllegalTransition>,
}

impl BookingProjector {
    fn transition(&mut self, pnr: &str, to: BookingStatus, height: u64) -> Option<&mut Booking> {
        let from = self.bookings.get(pnr).map(|b| b.status);
        if !from.is_some_and(|f| f.can_become(to)) {
            self.illegal.push(IllegalTransition {
                pnr: pnr.to_string(),
                from,
                to,
                height,
            });
            return None;
        }
        let b = self.bookings.get_mut(pnr).expect("status read above");
        b.status = to;
        Some(b)
    }

    /// Folds one payload; shared by the ledger projector and the baseline store.
    pub fn apply_payload(&mut self, payload: &TxPayload, height: u64) {
        match payload {
            TxPayload::TicketIssued(t) => {
                if self.bookings.contains_key(&t.pnr) {
                    let from = self.bookings.get(&t.pnr).map(|b| b.status);
                    self.illegal.push(IllegalTransition {
                        pnr: t.pnr.clone(),
                        from,
                        to: BookingStatus::Confirmed,
                        height,
                    });
                    return;
                }
                self.bookings.insert(
                    t.pnr.clone(),
                    Booking {
                        pnr: t.pnr.clone(),
                        customer: t.customer.clone(),
                        flight: t.flight.clone(),
                        route: t.route.clone(),
                        departure_hour: t.departure_hour,
                        seat: t.seat.clone(),
                        fare: t.fare,
                        payment_method: t.payment_method.clone(),
                        status: BookingStatus::Confirmed,
                        payment_id: None,
                        captured: Money::ZERO,
                        refunded: Money::ZERO,
                    },
                );
            }
            TxPayload::PaymentCaptured(p) => {
                if let Some(b) = self.bookings.get_mut(&p.pnr) {
                    b.captured = b.captured + p.amount;
                    b.payment_id = Some(p.payment_id.clone());
                }
            }
            TxPayload::BookingCancelled(c) => {
                self.transition(&c.pnr, BookingStatus::Cancelled, height);
            }
            TxPayload::RefundIssued(r) => {
                let captured = self
                    .bookings
                    .get(&r.pnr)
                    .is_some_and(|b| b.captured > Money::ZERO);
                if !captured {
                    let from = self.bookings.get(&r.pnr).map(|b| b.status);
                    self.illegal.push(IllegalTransition {
                        pnr: r.pnr.clone(),
                        from,
                        to: BookingStatus::Refunded,
                        height,
                    });
                    return;
                }
                if let Some(b) = self.transition(&r.pnr, BookingStatus::Refunded, height) {
                    b.refunded = b.refunded + r.amount;
                }
            }
            TxPayload::ReviewSubmitted(_) | TxPayload::InventoryAdjusted(_) => {}
        }
    }
}

impl Projector for BookingProjector {
    const SERVICE: &'static str = "booking";
    fn apply(&mut self, at: TxPosition, _: &str, tx: &TransactionRecord) {
        self.apply_payload(&tx.payload, at.height);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeatState {
    Free,
    Sold,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlightInventory {
    pub info: FlightInfo,
    pub seats: BTreeMap<String, SeatState>,
    /// Seat → pnr for sold seats.
    pub holders: BTreeMap<String, String>,
}

impl FlightInventory {
    pub fn sold(&self) -> usize {
        self.seats
            .values()
            .filter(|s| **s == SeatState::Sold)
            .count()
    }

    pub fn free_seats(&self) -> Vec<String> {
        self.seats
            .iter()
            .filter(|(_, s)| **s == SeatState::Free)
            .map(|(k, _)| k.clone())
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryProjector {
    pub flights: BTreeMap<String, FlightInventory>,
    /// `(flight, height)` whenever more seats were sold than exist.
    pub capacity_violations: Vec<(String, u64)>,
}

impl InventoryProjector {
    pub fn apply_payload(&mut self, payload: &TxPayload, height: u64) {
        match payload {
            TxPayload::InventoryAdjusted(i) => {
                let info = FlightInfo {
                    flight: i.flight.clone(),
                    route: i.route.clone(),
                    departure_hour: i.departure_hour,
                    capacity: i.capacity,
                    fare: i.fare,
                    fare_class: i.fare_class.clone(),
                };
                let f = self
                    .flights
                    .entry(i.flight.clone())
                    .or_insert_with(|| FlightInventory {
                        info: info.clone(),
                        seats: BTreeMap::new(),
                        holders: BTreeMap::new(),
                    });
                f.info = info;
                let labels: BTreeSet<String> = seat_labels(i.capacity).into_iter().collect();
                f.seats
                    .retain(|k, s| labels.contains(k) || *s == SeatState::Sold);
                for l in labels {
                    f.seats.entry(l).or_insert(SeatState::Free);
                }
            }
            TxPayload::TicketIssued(t) => {
                if let Some(f) = self.flights.get_mut(&t.flight) {
                    f.seats.insert(t.seat.clone(), SeatState::Sold);
                    f.holders.insert(t.seat.clone(), t.pnr.clone());
                    if f.sold() > f.info.capacity as usize {
                        self.capacity_violations.push((t.flight.clone(), height));
                    }
                }
            }
            TxPayload::BookingCancelled(c) => {
                if let Some(f) = self.flights.get_mut(&c.flight) {
                    if f.holders.get(&c.seat) == Some(&c.pnr) {
                        f.holders.remove(&c.seat);
                        f.seats.insert(c.seat.clone(), SeatState::Free);
                    }
                }
            }
            _ => {}
        }
    }

    /// pnr → (flight, seat) for every sold seat.
    pub fn seat_holders(&self) -> BTreeMap<String, (String, String)> {
        self.flights
            .values()
            .flat_map(|f| {
                f.holders
                    .iter()
                    .map(|(seat, pnr)| (pnr.clone(), (f.info.flight.clone(), seat.clone())))
            })
            .collect()
    }
}

impl Projector for InventoryProjector {
    const SERVICE: &'static str = "inventory";
    fn apply(&mut self, at: TxPosition, _: &str, tx: &TransactionRecord) {
        self.apply_payload(&tx.payload, at.height);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PaymentStatus {
    Captured,
    Refunded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentRecord {
    pub payment_id: String,
    pub pnr: String,
    pub amount: Money,
    pub method: String,
    pub status: PaymentStatus,
    pub refunded: Money,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentProjector {
    pub payments: BTreeMap<String, PaymentRecord>,
    /// pnr → payment id.
    pub by_pnr: BTreeMap<String, String>,
    pub total_captured: Money,
    pub total_refunded: Money,
}

impl PaymentProjector {
    pub fn apply_payload(&mut self, payload: &TxPayload) {
        match payload {
            TxPayload::PaymentCaptured(p) => {
                self.payments.insert(
                    p.payment_id.clone(),
                    PaymentRecord {
                        payment_id: p.payment_id.clone(),
                        pnr: p.pnr.clone(),
                        amount: p.amount,
                        method: p.method.clone(),
                        status: PaymentStatus::Captured,
                        refunded: Money::ZERO,
                    },
                );
                self.by_pnr.insert(p.pnr.clone(), p.payment_id.clone());
                self.total_captured = self.total_captured + p.amount;
            }
            TxPayload::RefundIssued(r) => {
                if let Some(rec) = self.payments.get_mut(&r.payment_id) {
                    rec.refunded = rec.refunded + r.amount;
                    rec.status = PaymentStatus::Refunded;
                }
                self.total_refunded = self.total_refunded + r.amount;
            }
            _ => {}
        }
    }

    pub fn for_pnr(&self, pnr: &str) -> Option<&PaymentRecord> {
        self.by_pnr.get(pnr).and_then(|id| self.payments.get(id))
    }
}

impl Projector for PaymentProjector {
    const SERVICE: &'static str = "payment";
    fn apply(&mut self, _: TxPosition, _: &str, tx: &TransactionRecord) {
        self.apply_payload(&tx.payload);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub review_id: String,
    pub pnr: String,
    pub rating: u8,
    pub text: String,
    /// The pnr had a committed ticket when the review committed.
    pub verified: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewProjector {
    pub reviews: BTreeMap<String, Review>,
    ticketed: BTreeSet<String>,
}

impl Projector for ReviewProjector {
    const SERVICE: &'static str = "review";
    fn apply(&mut self, _: TxPosition, _: &str, tx: &TransactionRecord) {
        match &tx.payload {
            TxPayload::TicketIssued(t) => {
                self.ticketed.insert(t.pnr.clone());
            }
            TxPayload::ReviewSubmitted(r) => {
                let verified = self.ticketed.contains(&r.pnr);
                self.reviews.insert(
                    r.review_id.clone(),
                    Review {
                        review_id: r.review_id.clone(),
                        pnr: r.pnr.clone(),
                        rating: r.rating,
                        text: r.text.clone(),
                        verified,
                    },
                );
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub customer: String,
    /// pnr → latest status.
    pub bookings: BTreeMap<String, BookingStatus>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileProjector {
    pub profiles: BTreeMap<String, Profile>,
    owner: BTreeMap<String, String>,
}

impl ProfileProjector {
    pub fn apply_payload(&mut self, payload: &TxPayload) {
        let (pnr, status) = match payload {
            TxPayload::TicketIssued(t) => {
                self.owner.insert(t.pnr.clone(), t.customer.clone());
                let p = self.profiles.entry(t.customer.clone()).or_default();
                p.customer = t.customer.clone();
                (t.pnr.as_str(), BookingStatus::Confirmed)
            }
            TxPayload::BookingCancelled(c) => (c.pnr.as_str(), BookingStatus::Cancelled),
            TxPayload::RefundIssued(r) => (r.pnr.as_str(), BookingStatus::Refunded),
            _ => return,
        };
        if let Some(customer) = self.owner.get(pnr) {
            if let Some(p) = self.profiles.get_mut(customer) {
                p.bookings.insert(pnr.to_string(), status);
            }
        }
    }

    /// pnr → status across all customers.
    pub fn statuses(&self) -> BTreeMap<String, BookingStatus> {
        self.profiles
            .values()
            .flat_map(|p| p.bookings.iter().map(|(k, v)| (k.clone(), *v)))
            .collect()
    }
}

impl Projector for ProfileProjector {
    const SERVICE: &'static str = "profile";
    fn apply(&mut self, _: TxPosition, _: &str, tx: &TransactionRecord) {
        self.apply_payload(&tx.payload);
    }
}

/// One committed transaction with everything needed to re-verify it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub height: u64,
    pub index: usize,
    pub block_hash: String,
    pub tx_id: String,
    pub kind: TxKind,
    pub logical_time: u64,
    pub author: String,
    pub payload: TxPayload,
}

/// Per-pnr index of committed transactions in chain order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditProjector {
    pub by_pnr: BTreeMap<String, Vec<AuditEvent>>,
    pub total: usize,
}

impl AuditProjector {
    pub fn lookup(&self, pnr: &str) -> &[AuditEvent] {
        self.by_pnr.get(pnr).map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Projector for AuditProjector {
    const SERVICE: &'static str = "audit";
    fn apply(&mut self, at: TxPosition, block_hash: &str, tx: &TransactionRecord) {
        self.total += 1;
        if let Some(pnr) = tx.payload.pnr() {
            self.by_pnr
                .entry(pnr.to_string())
                .or_default()
                .push(AuditEvent {
                    height: at.height,
                    index: at.index,
                    block_hash: block_hash.to_string(),
                    tx_id: tx.tx_id.clone(),
                    kind: tx.kind(),
                    logical_time: tx.logical_time,
                    author: tx.author.as_str().to_string(),
                    payload: tx.payload.clone(),
                });
        }
    }
}
