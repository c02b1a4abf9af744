use serde::{Deserialize, Serialize};

use crate::money::Money;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BookingStatus {
    Pending,
    Confirmed,
    Cancelled,
    Refunded,
}

impl BookingStatus {
    /// Legal forward transitions: `Pending → Confirmed → Cancelled → Refunded`.
    pub fn can_become(self, next: BookingStatus) -> bool {
        use BookingStatus::*;
        matches!(
            (self, next),
            (Pending, Confirmed) | (Confirmed, Cancelled) | (Cancelled, Refunded)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlightInfo {
    pub flight: String,
    pub route: String,
    pub departure_hour: u64,
    pub capacity: u32,
    pub fare: Money,
    pub fare_class: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookingSnapshot {
    pub pnr: String,
    pub customer: String,
    pub flight: String,
    pub seat: String,
    pub fare: Money,
    pub status: BookingStatus,
    pub payment_id: Option<String>,
    pub captured: Money,
    pub refunded: Money,
}

/// Read-only snapshot that conditions are evaluated against.
pub trait WorldView {
    fn flight(&self, flight: &str) -> Option<FlightInfo>;
    /// Free seat labels in lexicographic order.
    fn free_seats(&self, flight: &str) -> Vec<String>;
    fn booking(&self, pnr: &str) -> Option<BookingSnapshot>;
    /// Latest payment gateway outcome for `pnr` was an approval.
    fn payment_confirmed(&self, pnr: &str) -> bool;
}
