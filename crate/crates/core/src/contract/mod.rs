//! Declarative contract specs and their deterministic executor.
//!
//! An instance moves `Created → Validated → Executed`, or `Created →
//! Rejected`. Validation and execution only read a [`WorldView`]; the single
//! write path is [`settle`], which submits the produced records to the ledger
//! and then sends notifications.

mod engine;
mod settle;
mod spec;
mod view;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::{
    execute_contract, validate, validate_conditions, within_window, Action, ContractEngine,
    ContractInstance, FailureReason, InstanceStatus, Validation,
};
pub use settle::{
    settle, CommitAborted, CommittedRef, LedgerHandle, NotificationReceipt, Notifier,
    SettlementReport, REJECTION_MESSAGE,
};
pub use spec::{
    default_specs, ActionTemplate, Condition, ContractSpec, InputType, Param, PredicateRule,
    Trigger, UserData,
};
pub use view::{BookingSnapshot, BookingStatus, FlightInfo, WorldView};

use crate::money::{Fraction, Money};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContractError {
    #[error("unknown contract spec {0}")]
    UnknownSpec(String),
    #[error("input {0} is missing or malformed")]
    SchemaViolation(String),
    #[error("invalid contract spec: {0}")]
    InvalidSpec(String),
    #[error("instance has not been validated")]
    NotValidated,
    #[error("instance has not been executed")]
    NotExecuted,
    #[error("world changed after validation: {0}")]
    ConditionsChanged(FailureReason),
    #[error("invalid refund policy: {0}")]
    InvalidPolicy(String),
    #[error("ledger: {0}")]
    Ledger(String),
}

/// Cancellation terms of a fare class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefundPolicy {
    /// Minimum lead time before departure for a refund.
    pub window_hours: u64,
    pub fee_fraction: Fraction,
}

/// `fare - round_half_up(fare × fee)` when cancelled at least `window_hours`
/// before departure, otherwise zero.
pub fn evaluate_refund(
    fare: Money,
    policy: &RefundPolicy,
    cancel_hour: u64,
    departure_hour: u64,
) -> Result<Money, ContractError> {
    if policy.fee_fraction.basis_points() > Fraction::ONE_BP {
        return Err(ContractError::InvalidPolicy("fee fraction above 1".into()));
    }
    if cancel_hour > departure_hour {
        return Err(ContractError::InvalidPolicy(format!(
            "cancellation at hour {cancel_hour} after departure at hour {departure_hour}"
        )));
    }
    if !within_window(policy.window_hours, departure_hour, cancel_hour) {
        return Ok(Money::ZERO);
    }
    Ok(fare - policy.fee_fraction.apply_half_up(fare))
}
