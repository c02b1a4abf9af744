use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ContractError;
use crate::ledger::TxKind;
use crate::money::Fraction;

/// Inputs bound to an instance at creation.
pub type UserData = serde_json::Map<String, Value>;

/// What fires a contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Trigger {
    ApiEvent { name: String },
    Transaction { kind: TxKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputType {
    /// Non-empty text.
    String,
    /// Non-negative integer.
    Integer,
    /// Number in `[0, 1]`.
    Fraction,
}

/// A literal, or `$name` to read input `name`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Number(u64),
    Text(String),
}

impl Param {
    fn lookup<'a>(&'a self, inputs: &'a UserData) -> Option<&'a Value> {
        match self {
            Param::Text(t) => t.strip_prefix('$').and_then(|name| inputs.get(name)),
            Param::Number(_) => None,
        }
    }

    pub fn text(&self, inputs: &UserData) -> Option<String> {
        match (self, self.lookup(inputs)) {
            (_, Some(Value::String(s))) => Some(s.clone()),
            (_, Some(Value::Number(n))) => Some(n.to_string()),
            (Param::Text(t), None) if !t.starts_with('$') => Some(t.clone()),
            (Param::Number(n), _) => Some(n.to_string()),
            _ => None,
        }
    }

    pub fn integer(&self, inputs: &UserData) -> Option<u64> {
        match (self, self.lookup(inputs)) {
            (Param::Number(n), _) => Some(*n),
            (_, Some(v)) => v.as_u64(),
            (Param::Text(t), None) => t.parse().ok(),
        }
    }

    pub fn fraction(&self, inputs: &UserData) -> Option<Fraction> {
        match (self, self.lookup(inputs)) {
            (_, Some(v)) => v.as_f64().and_then(Fraction::from_f64),
            (Param::Number(n), None) => Fraction::from_f64(*n as f64),
            (Param::Text(t), None) => t.parse().ok().and_then(Fraction::from_f64),
        }
    }

    fn references(&self) -> Option<&str> {
        match self {
            Param::Text(t) => t.strip_prefix('$'),
            Param::Number(_) => None,
        }
    }
}

/// Named business rules usable as conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredicateRule {
    /// Booking exists and is Confirmed.
    BookingConfirmed,
    /// Booking is Confirmed and nothing has been captured yet.
    PaymentPending,
    /// Input `amount` equals the booked fare.
    AmountMatchesFare,
    /// A payment has been captured for the booking.
    PaymentCaptured,
    /// The pnr has a committed ticket, whatever its current status.
    BookingTicketed,
    /// Input `rating` is within 1..=5.
    RatingInRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Condition {
    SeatAvailable {
        flight: Param,
        count: u32,
    },
    PaymentConfirmed {
        booking: Param,
    },
    /// Holds when `reference - at ≥ deadline_hours`.
    WithinWindow {
        deadline_hours: Param,
        reference: Param,
        at: Param,
    },
    PolicyPredicate {
        rule: PredicateRule,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        booking: Option<Param>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        amount: Option<Param>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rating: Option<Param>,
    },
}

impl Condition {
    pub fn name(&self) -> &'static str {
        match self {
            Condition::SeatAvailable { .. } => "SeatAvailable",
            Condition::PaymentConfirmed { .. } => "PaymentConfirmed",
            Condition::WithinWindow { .. } => "WithinWindow",
            Condition::PolicyPredicate { .. } => "PolicyPredicate",
        }
    }

    fn params(&self) -> Vec<&Param> {
        match self {
            Condition::SeatAvailable { flight, .. } => vec![flight],
            Condition::PaymentConfirmed { booking } => vec![booking],
            Condition::WithinWindow {
                deadline_hours,
                reference,
                at,
            } => vec![deadline_hours, reference, at],
            Condition::PolicyPredicate {
                booking,
                amount,
                rating,
                ..
            } => [booking, amount, rating].into_iter().flatten().collect(),
        }
    }
}

/// An action as written in a spec; bound to concrete values on execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ActionTemplate {
    ReserveSeat {
        flight: Param,
    },
    ReleaseSeat {
        booking: Param,
    },
    AppendTransaction {
        record: TxKind,
    },
    IssueRefund {
        booking: Param,
        fare: Param,
        fee_fraction: Param,
        window_hours: Param,
        at: Param,
        reference: Param,
        /// Guards; the refund is skipped unless all hold.
        #[serde(default)]
        when: Vec<Condition>,
    },
    NotifyParties {
        parties: Vec<String>,
        message: String,
    },
    /// Defaults to the booking's customer when `user` is unset.
    NotifyUser {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        user: Option<Param>,
        message: String,
    },
}

impl ActionTemplate {
    fn params(&self) -> Vec<&Param> {
        match self {
            ActionTemplate::ReserveSeat { flight } => vec![flight],
            ActionTemplate::ReleaseSeat { booking } => vec![booking],
            ActionTemplate::IssueRefund {
                booking,
                fare,
                fee_fraction,
                window_hours,
                at,
                reference,
                when,
            } => {
                let mut p = vec![booking, fare, fee_fraction, window_hours, at, reference];
                p.extend(when.iter().flat_map(|c| c.params()));
                p
            }
            ActionTemplate::NotifyUser { user, .. } => user.iter().collect(),
            ActionTemplate::AppendTransaction { .. } | ActionTemplate::NotifyParties { .. } => {
                Vec::new()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractSpec {
    pub name: String,
    pub trigger: Trigger,
    /// Required inputs and their types.
    pub inputs: BTreeMap<String, InputType>,
    pub conditions: Vec<Condition>,
    pub actions: Vec<ActionTemplate>,
}

impl ContractSpec {
    pub fn from_json(text: &str) -> Result<Self, ContractError> {
        let spec: ContractSpec =
            serde_json::from_str(text).map_err(|e| ContractError::InvalidSpec(e.to_string()))?;
        spec.check()?;
        Ok(spec)
    }

    /// Every `$name` reference must be a declared input.
    pub fn check(&self) -> Result<(), ContractError> {
        let params = self
            .conditions
            .iter()
            .flat_map(|c| c.params())
            .chain(self.actions.iter().flat_map(|a| a.params()));
        for p in params {
            if let Some(name) = p.references() {
                if !self.inputs.contains_key(name) {
                    return Err(ContractError::InvalidSpec(format!(
                        "{}: undeclared input ${name}",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks presence and type of every declared input.
    pub fn check_inputs(&self, data: &UserData) -> Result<(), ContractError> {
        for (field, ty) in &self.inputs {
            let ok = match (ty, data.get(field)) {
                (InputType::String, Some(Value::String(s))) => !s.trim().is_empty(),
                (InputType::Integer, Some(v)) => v.as_u64().is_some(),
                (InputType::Fraction, Some(v)) => v.as_f64().and_then(Fraction::from_f64).is_some(),
                _ => false,
            };
            if !ok {
                return Err(ContractError::SchemaViolation(field.clone()));
            }
        }
        Ok(())
    }
}

const DEFAULT_SPECS: [&str; 4] = [
    include_str!("../../contracts/booking_policy.json"),
    include_str!("../../contracts/payment_policy.json"),
    include_str!("../../contracts/cancellation_policy.json"),
    include_str!("../../contracts/review_policy.json"),
];

/// The shipped policies: BookingPolicy, PaymentPolicy, CancellationPolicy, ReviewPolicy.
pub fn default_specs() -> Vec<ContractSpec> {
    DEFAULT_SPECS
        .iter()
        .map(|s| ContractSpec::from_json(s).expect("shipped spec is valid"))
        .collect()
}
