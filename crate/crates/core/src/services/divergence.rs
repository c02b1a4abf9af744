use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::projectors::{BookingProjector, InventoryProjector, PaymentProjector, ProfileProjector};
use crate::contract::BookingStatus;
use crate::money::Money;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SharedField {
    Status,
    Seat,
    Captured,
    Refunded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactValue {
    Status(BookingStatus),
    Seat(String),
    Amount(Money),
}

/// The facts one service holds about every pnr it knows, restricted to the
/// fields that more than one service stores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceFacts {
    pub service: String,
    pub fields: BTreeSet<SharedField>,
    pub facts: BTreeMap<String, BTreeMap<SharedField, FactValue>>,
}

impl ServiceFacts {
    fn new(service: &str, fields: &[SharedField]) -> Self {
        ServiceFacts {
            service: service.into(),
            fields: fields.iter().copied().collect(),
            facts: BTreeMap::new(),
        }
    }

    fn set(&mut self, pnr: &str, field: SharedField, value: FactValue) {
        self.facts
            .entry(pnr.to_string())
            .or_default()
            .insert(field, value);
    }

    /// Seat is reported only while the booking holds it.
    pub fn from_booking(p: &BookingProjector) -> Self {
        let mut f = ServiceFacts::new(
            "booking",
            &[
                SharedField::Status,
                SharedField::Seat,
                SharedField::Captured,
                SharedField::Refunded,
            ],
        );
        for (pnr, b) in &p.bookings {
            f.set(pnr, SharedField::Status, FactValue::Status(b.status));
            if b.status == BookingStatus::Confirmed {
                f.set(
                    pnr,
                    SharedField::Seat,
                    FactValue::Seat(format!("{}/{}", b.flight, b.seat)),
                );
            }
            if b.captured > Money::ZERO {
                f.set(pnr, SharedField::Captured, FactValue::Amount(b.captured));
            }
            if b.refunded > Money::ZERO {
                f.set(pnr, SharedField::Refunded, FactValue::Amount(b.refunded));
            }
        }
        f
    }

    pub fn from_inventory(p: &InventoryProjector) -> Self {
        let mut f = ServiceFacts::new("inventory", &[SharedField::Seat]);
        for (pnr, (flight, seat)) in p.seat_holders() {
            f.set(
                &pnr,
                SharedField::Seat,
                FactValue::Seat(format!("{flight}/{seat}")),
            );
        }
        f
    }

    pub fn from_payment(p: &PaymentProjector) -> Self {
        let mut f = ServiceFacts::new("payment", &[SharedField::Captured, SharedField::Refunded]);
        for rec in p.payments.values() {
            f.set(
                &rec.pnr,
                SharedField::Captured,
                FactValue::Amount(rec.amount),
            );
            if rec.refunded > Money::ZERO {
                f.set(
                    &rec.pnr,
                    SharedField::Refunded,
                    FactValue::Amount(rec.refunded),
                );
            }
        }
        f
    }

    pub fn from_profile(p: &ProfileProjector) -> Self {
        let mut f = ServiceFacts::new("profile", &[SharedField::Status]);
        for (pnr, status) in p.statuses() {
            f.set(&pnr, SharedField::Status, FactValue::Status(status));
        }
        f
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub field_mismatches: u64,
    pub affected_pnrs: Vec<String>,
}

/// Counts, for every pair of services and every field both store, the pnrs
/// on which they disagree. A fact held by one side only is a disagreement.
pub fn divergence_report(services: &[ServiceFacts]) -> DivergenceReport {
    let mut mismatches = 0;
    let mut affected = BTreeSet::new();
    for (i, a) in services.iter().enumerate() {
        for b in &services[i + 1..] {
            let shared: Vec<SharedField> = a.fields.intersection(&b.fields).copied().collect();
            if shared.is_empty() {
                continue;
            }
            let pnrs: BTreeSet<&String> = a.facts.keys().chain(b.facts.keys()).collect();
            for pnr in pnrs {
                for field in &shared {
                    let x = a.facts.get(pnr).and_then(|m| m.get(field));
                    let y = b.facts.get(pnr).and_then(|m| m.get(field));
                    if x != y {
                        mismatches += 1;
                        affected.insert(pnr.clone());
                    }
                }
            }
        }
    }
    DivergenceReport {
        field_mismatches: mismatches,
        affected_pnrs: affected.into_iter().collect(),
    }
}
