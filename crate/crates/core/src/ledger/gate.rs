//! Business admission rules re-checked by validators at commit time.
//!
//! The gate is a small deterministic fold over committed transactions. A
//! validator refuses any block whose transactions would sell a seat twice,
//! exceed a flight's capacity, or refund more than was captured.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use super::tx::{TransactionRecord, TxPayload};
use crate::money::Money;

/// Seat labels for a cabin of `capacity` seats, in lexicographic order.
///
/// Six seats per row (`A`..`F`), rows zero-padded so string order equals
/// cabin order.
pub fn seat_labels(capacity: u32) -> Vec<String> {
    let rows = capacity.div_ceil(6).max(1);
    let width = rows.to_string().len().max(2);
    (0..capacity)
        .map(|i| {
            format!(
                "{:0width$}{}",
                i / 6 + 1,
                (b'A' + (i % 6) as u8) as char,
                width = width
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateViolation(pub String);

impl fmt::Display for GateViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Default)]
struct FlightSeats {
    capacity: u32,
    sold: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default)]
struct TicketState {
    flight: String,
    seat: String,
    active: bool,
    captured: Money,
    refunded: Money,
}

#[derive(Debug, Clone, Default)]
pub struct CommitGate {
    flights: HashMap<String, FlightSeats>,
    tickets: HashMap<String, TicketState>,
}

impl CommitGate {
    pub fn new() -> Self {
        CommitGate::default()
    }

    pub fn check(&self, tx: &TransactionRecord) -> Result<(), GateViolation> {
        let deny = |m: String| Err(GateViolation(m));
        match &tx.payload {
            TxPayload::InventoryAdjusted(i) => {
                if let Some(f) = self.flights.get(&i.flight) {
                    if (i.capacity as usize) < f.sold.len() {
                        return deny(format!(
                            "capacity {} below {} sold on {}",
                            i.capacity,
                            f.sold.len(),
                            i.flight
                        ));
                    }
                }
                Ok(())
            }
            TxPayload::TicketIssued(t) => {
                let Some(f) = self.flights.get(&t.flight) else {
                    return deny(format!("unknown flight {}", t.flight));
                };
                if self.tickets.contains_key(&t.pnr) {
                    return deny(format!("pnr {} already ticketed", t.pnr));
                }
                if f.sold.len() as u32 >= f.capacity {
                    return deny(format!("flight {} sold out", t.flight));
                }
                if f.sold.contains_key(&t.seat) || !seat_labels(f.capacity).contains(&t.seat) {
                    return deny(format!("seat {} not available on {}", t.seat, t.flight));
                }
                Ok(())
            }
            TxPayload::BookingCancelled(c) => match self.tickets.get(&c.pnr) {
                Some(t) if t.active && t.flight == c.flight && t.seat == c.seat => Ok(()),
                _ => deny(format!(
                    "pnr {} has no active ticket for {}/{}",
                    c.pnr, c.flight, c.seat
                )),
            },
            TxPayload::PaymentCaptured(p) => match self.tickets.get(&p.pnr) {
                Some(t) if t.active && t.captured == Money::ZERO => Ok(()),
                Some(_) => deny(format!("pnr {} not payable", p.pnr)),
                None => deny(format!("pnr {} not ticketed", p.pnr)),
            },
            TxPayload::RefundIssued(r) => match self.tickets.get(&r.pnr) {
                Some(t) if t.refunded + r.amount <= t.captured => Ok(()),
                _ => deny(format!(
                    "refund of {} exceeds capture for {}",
                    r.amount, r.pnr
                )),
            },
            TxPayload::ReviewSubmitted(_) => Ok(()),
        }
    }

    /// Folds a committed transaction into the gate. Call only after `check` passed.
    pub fn apply(&mut self, tx: &TransactionRecord) {
        match &tx.payload {
            TxPayload::InventoryAdjusted(i) => {
                self.flights.entry(i.flight.clone()).or_default().capacity = i.capacity;
            }
            TxPayload::TicketIssued(t) => {
                if let Some(f) = self.flights.get_mut(&t.flight) {
                    f.sold.insert(t.seat.clone(), t.pnr.clone());
                }
                self.tickets.insert(
                    t.pnr.clone(),
                    TicketState {
                        flight: t.flight.clone(),
                        seat: t.seat.clone(),
                        active: true,
                        ..Default::default()
                    },
                );
            }
            TxPayload::BookingCancelled(c) => {
                if let Some(f) = self.flights.get_mut(&c.flight) {
                    f.sold.remove(&c.seat);
                }
                if let Some(t) = self.tickets.get_mut(&c.pnr) {
                    t.active = false;
                }
            }
            TxPayload::PaymentCaptured(p) => {
                if let Some(t) = self.tickets.get_mut(&p.pnr) {
                    t.captured = t.captured + p.amount;
                }
            }
            TxPayload::RefundIssued(r) => {
                if let Some(t) = self.tickets.get_mut(&r.pnr) {
                    t.refunded = t.refunded + r.amount;
                }
            }
            TxPayload::ReviewSubmitted(_) => {}
        }
    }

    /// Checks a whole block in order against a scratch copy.
    pub fn check_all<'a>(
        &self,
        txs: impl IntoIterator<Item = &'a TransactionRecord>,
    ) -> Result<(), GateViolation> {
        let mut scratch = self.clone();
        for tx in txs {
            scratch.check(tx)?;
            scratch.apply(tx);
        }
        Ok(())
    }

    /// Gate state after replaying every transaction of `blocks`.
    pub fn replay<'a>(blocks: impl IntoIterator<Item = &'a super::Block>) -> Self {
        let mut g = CommitGate::new();
        for b in blocks {
            for tx in &b.transactions {
                g.apply(tx);
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seat_labels_sort_in_cabin_order() {
        let labels = seat_labels(14);
        assert_eq!(labels[0], "01A");
        assert_eq!(labels[6], "02A");
        assert_eq!(labels[13], "03B");
        let mut sorted = labels.clone();
        sorted.sort();
        assert_eq!(sorted, labels);
        assert_eq!(seat_labels(700)[0], "001A");
    }
}
