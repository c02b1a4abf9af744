//! Event-sourced reservation services. Each service owns a private
//! projection folded only from committed ledger transactions.

mod divergence;
mod gateway_sim;
mod pnr;
mod projection;
mod projectors;
mod seed;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use divergence::{divergence_report, DivergenceReport, FactValue, ServiceFacts, SharedField};
pub use gateway_sim::{GatewayOutcome, PaymentGateway};
pub use pnr::{is_pnr, PnrAllocator};
pub use projection::{rebuild_projection, Projection, Projector, TxPosition};
pub use projectors::{
    AuditEvent, AuditProjector, Booking, BookingProjector, FlightInventory, IllegalTransition,
    InventoryProjector, PaymentProjector, PaymentRecord, PaymentStatus, Profile, ProfileProjector,
    Review, ReviewProjector, SeatState,
};
pub use seed::SeedData;

pub use crate::contract::BookingStatus;
use crate::contract::{ContractError, FailureReason};
use crate::ledger::{Block, Chain};
use crate::money::Money;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ServiceError {
    #[error("projection expected height {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("transaction {tx_id} does not match its checksum")]
    ChecksumMismatch { tx_id: String },
    #[error("Conditions not met for contract execution: {}", join(.reasons))]
    RejectedByContract { reasons: Vec<FailureReason> },
    #[error("unknown pnr {0}")]
    UnknownPnr(String),
    #[error("booking in status {0:?} cannot be cancelled")]
    NotCancellable(BookingStatus),
    #[error("payment gateway timed out for {payment_id}")]
    GatewayTimeout { payment_id: String },
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error("ledger unavailable: {0}")]
    Ledger(String),
}

fn join(reasons: &[FailureReason]) -> String {
    reasons
        .iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Every service projection, advanced together.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceProjections {
    pub booking: Projection<BookingProjector>,
    pub inventory: Projection<InventoryProjector>,
    pub payment: Projection<PaymentProjector>,
    pub review: Projection<ReviewProjector>,
    pub profile: Projection<ProfileProjector>,
    pub audit: Projection<AuditProjector>,
}

impl ServiceProjections {
    pub fn height(&self) -> u64 {
        self.audit.last_applied_height
    }

    pub fn apply_block(&mut self, block: &Block) -> Result<(), ServiceError> {
        self.booking.apply_block(block)?;
        self.inventory.apply_block(block)?;
        self.payment.apply_block(block)?;
        self.review.apply_block(block)?;
        self.profile.apply_block(block)?;
        self.audit.apply_block(block)
    }

    pub fn catch_up(&mut self, chain: &Chain) -> Result<(), ServiceError> {
        for block in &chain.blocks()[self.height() as usize..] {
            self.apply_block(block)?;
        }
        Ok(())
    }

    pub fn rebuild(chain: &Chain) -> Result<Self, ServiceError> {
        Ok(ServiceProjections {
            booking: rebuild_projection(chain)?,
            inventory: rebuild_projection(chain)?,
            payment: rebuild_projection(chain)?,
            review: rebuild_projection(chain)?,
            profile: rebuild_projection(chain)?,
            audit: rebuild_projection(chain)?,
        })
    }

    pub fn facts(&self) -> Vec<ServiceFacts> {
        vec![
            ServiceFacts::from_booking(&self.booking.state),
            ServiceFacts::from_inventory(&self.inventory.state),
            ServiceFacts::from_payment(&self.payment.state),
            ServiceFacts::from_profile(&self.profile.state),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlightSummary {
    pub flight: String,
    pub route: String,
    pub departure_hour: u64,
    pub capacity: u32,
    pub free_seats: usize,
    pub fare: Money,
    pub fare_class: String,
}

/// Flights on `route` departing on `day` (departure hour / 24), when given.
pub fn search_flights(
    inventory: &InventoryProjector,
    route: Option<&str>,
    day: Option<u64>,
) -> Vec<FlightSummary> {
    inventory
        .flights
        .values()
        .filter(|f| route.is_none_or(|r| f.info.route == r))
        .filter(|f| day.is_none_or(|d| f.info.departure_hour / 24 == d))
        .map(|f| FlightSummary {
            flight: f.info.flight.clone(),
            route: f.info.route.clone(),
            departure_hour: f.info.departure_hour,
            capacity: f.info.capacity,
            free_seats: f.free_seats().len(),
            fare: f.info.fare,
            fare_class: f.info.fare_class.clone(),
        })
        .collect()
}
