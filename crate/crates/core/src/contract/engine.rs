use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::spec::{ActionTemplate, Condition, ContractSpec, Param, PredicateRule, UserData};
use super::view::{BookingStatus, WorldView};
use super::{evaluate_refund, ContractError, RefundPolicy};
use crate::ledger::{
    BookingCancelled, InventoryAdjusted, PaymentCaptured, RefundIssued, ReviewSubmitted,
    TicketIssued, TxKind, TxPayload,
};
use crate::money::Money;

/// Why a condition did not hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureReason {
    SeatUnavailable,
    UnknownFlight,
    PaymentFailed,
    OutsideWindow,
    UnknownBooking,
    BookingNotConfirmed,
    PaymentNotPending,
    AmountMismatch,
    NotCaptured,
    RatingOutOfRange,
    MissingInput,
    CommitAborted,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum InstanceStatus {
    Created,
    Validated,
    Executed,
    Rejected { reasons: Vec<FailureReason> },
}

/// A concrete action produced by execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Action {
    ReserveSeat {
        flight: String,
        seat: String,
    },
    ReleaseSeat {
        flight: String,
        seat: String,
    },
    AppendTransaction {
        record: TxPayload,
    },
    IssueRefund {
        pnr: String,
        payment_id: String,
        amount: Money,
    },
    NotifyParties {
        parties: Vec<String>,
        message: String,
    },
    NotifyUser {
        user: String,
        message: String,
    },
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::ReserveSeat { .. } => "ReserveSeat",
            Action::ReleaseSeat { .. } => "ReleaseSeat",
            Action::AppendTransaction { .. } => "AppendTransaction",
            Action::IssueRefund { .. } => "IssueRefund",
            Action::NotifyParties { .. } => "NotifyParties",
            Action::NotifyUser { .. } => "NotifyUser",
        }
    }

    /// The ledger record this action writes. Seat reservations and releases
    /// are carried inside the ticket and cancellation records they accompany.
    pub fn ledger_payload(&self) -> Option<TxPayload> {
        match self {
            Action::AppendTransaction { record } => Some(record.clone()),
            Action::IssueRefund {
                pnr,
                payment_id,
                amount,
            } => Some(TxPayload::RefundIssued(RefundIssued {
                pnr: pnr.clone(),
                payment_id: payment_id.clone(),
                amount: *amount,
            })),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractInstance {
    pub instance_id: String,
    pub spec_name: String,
    pub inputs: UserData,
    pub status: InstanceStatus,
    pub actions: Vec<Action>,
    /// Recipient of user notifications, resolved at validation.
    pub user: Option<String>,
    #[serde(skip)]
    spec: Option<ContractSpec>,
}

impl ContractInstance {
    fn spec(&self) -> &ContractSpec {
        self.spec.as_ref().expect("instance created by an engine")
    }

    pub fn is_rejected(&self) -> bool {
        matches!(self.status, InstanceStatus::Rejected { .. })
    }

    pub fn reasons(&self) -> &[FailureReason] {
        match &self.status {
            InstanceStatus::Rejected { reasons } => reasons,
            _ => &[],
        }
    }

    pub fn input_text(&self, field: &str) -> Option<String> {
        Param::Text(format!("${field}")).text(&self.inputs)
    }

    pub(crate) fn reject(&mut self, reasons: Vec<FailureReason>) {
        self.status = InstanceStatus::Rejected { reasons };
    }

    /// Notification recipient; falls back to the pnr.
    pub fn recipient(&self) -> String {
        self.user
            .clone()
            .or_else(|| self.input_text("customer"))
            .or_else(|| self.input_text("pnr"))
            .unwrap_or_default()
    }
}

/// Outcome of condition evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validation {
    pub ok: bool,
    /// `(condition name, reason)` for each failed condition, in spec order.
    pub failed: Vec<(String, FailureReason)>,
}

impl Validation {
    pub fn reasons(&self) -> Vec<FailureReason> {
        self.failed.iter().map(|(_, r)| *r).collect()
    }
}

/// Registry of specs and factory for instances.
#[derive(Debug, Clone, Default)]
pub struct ContractEngine {
    specs: BTreeMap<String, ContractSpec>,
    next_id: u64,
}

impl ContractEngine {
    pub fn new() -> Self {
        ContractEngine::default()
    }

    /// Engine with the shipped policies registered.
    pub fn with_defaults() -> Self {
        let mut engine = ContractEngine::new();
        for spec in super::default_specs() {
            engine.register(spec).expect("shipped spec is valid");
        }
        engine
    }

    pub fn register(&mut self, spec: ContractSpec) -> Result<(), ContractError> {
        spec.check()?;
        self.specs.insert(spec.name.clone(), spec);
        Ok(())
    }

    pub fn spec(&self, name: &str) -> Option<&ContractSpec> {
        self.specs.get(name)
    }

    pub fn specs(&self) -> impl Iterator<Item = &ContractSpec> {
        self.specs.values()
    }

    /// Binds `user_data` to a fresh `Created` instance of `spec_name`.
    pub fn create(
        &mut self,
        spec_name: &str,
        user_data: UserData,
    ) -> Result<ContractInstance, ContractError> {
        let spec = self
            .specs
            .get(spec_name)
            .ok_or_else(|| ContractError::UnknownSpec(spec_name.to_string()))?;
        spec.check_inputs(&user_data)?;
        self.next_id += 1;
        Ok(ContractInstance {
            instance_id: format!("C{:06}", self.next_id),
            spec_name: spec.name.clone(),
            inputs: user_data,
            status: InstanceStatus::Created,
            actions: Vec::new(),
            user: None,
            spec: Some(spec.clone()),
        })
    }

    /// Validates and, when every condition holds, executes `instance`.
    /// Rejections are recorded on the instance, not returned as errors.
    pub fn run(
        &self,
        instance: &mut ContractInstance,
        world: &dyn WorldView,
    ) -> Result<Validation, ContractError> {
        let validation = validate(instance, world);
        if validation.ok {
            let (next, _) = execute_contract(instance, world)?;
            *instance = next;
        }
        Ok(validation)
    }
}

/// Pure evaluation of every condition of `instance` against `world`.
pub fn validate_conditions(instance: &ContractInstance, world: &dyn WorldView) -> Validation {
    let failed: Vec<(String, FailureReason)> = instance
        .spec()
        .conditions
        .iter()
        .filter_map(|c| {
            check_condition(c, &instance.inputs, world)
                .err()
                .map(|r| (c.name().to_string(), r))
        })
        .collect();
    Validation {
        ok: failed.is_empty(),
        failed,
    }
}

/// Validates a `Created` instance and advances it to `Validated` or `Rejected`.
pub fn validate(instance: &mut ContractInstance, world: &dyn WorldView) -> Validation {
    let validation = validate_conditions(instance, world);
    instance.user = resolve_user(instance, world);
    if instance.status == InstanceStatus::Created {
        instance.status = if validation.ok {
            InstanceStatus::Validated
        } else {
            InstanceStatus::Rejected {
                reasons: validation.reasons(),
            }
        };
    }
    validation
}

fn resolve_user(instance: &ContractInstance, world: &dyn WorldView) -> Option<String> {
    instance.input_text("customer").or_else(|| {
        instance
            .input_text("pnr")
            .and_then(|p| world.booking(&p))
            .map(|b| b.customer)
    })
}

fn check_condition(
    c: &Condition,
    inputs: &UserData,
    world: &dyn WorldView,
) -> Result<(), FailureReason> {
    use FailureReason::*;
    let text = |p: &Param| p.text(inputs).ok_or(MissingInput);
    let int = |p: &Param| p.integer(inputs).ok_or(MissingInput);
    match c {
        Condition::SeatAvailable { flight, count } => {
            let flight = text(flight)?;
            world.flight(&flight).ok_or(UnknownFlight)?;
            if world.free_seats(&flight).len() < *count as usize {
                return Err(SeatUnavailable);
            }
            Ok(())
        }
        Condition::PaymentConfirmed { booking } => {
            if world.payment_confirmed(&text(booking)?) {
                Ok(())
            } else {
                Err(PaymentFailed)
            }
        }
        Condition::WithinWindow {
            deadline_hours,
            reference,
            at,
        } => within_window(int(deadline_hours)?, int(reference)?, int(at)?)
            .then_some(())
            .ok_or(OutsideWindow),
        Condition::PolicyPredicate {
            rule,
            booking,
            amount,
            rating,
        } => {
            let snapshot = || {
                let pnr = text(booking.as_ref().ok_or(MissingInput)?)?;
                world.booking(&pnr).ok_or(UnknownBooking)
            };
            match rule {
                PredicateRule::BookingConfirmed => (snapshot()?.status == BookingStatus::Confirmed)
                    .then_some(())
                    .ok_or(BookingNotConfirmed),
                PredicateRule::PaymentPending => {
                    let b = snapshot()?;
                    (b.status == BookingStatus::Confirmed && b.captured == Money::ZERO)
                        .then_some(())
                        .ok_or(PaymentNotPending)
                }
                PredicateRule::AmountMatchesFare => {
                    let b = snapshot()?;
                    let amount = int(amount.as_ref().ok_or(MissingInput)?)?;
                    (Money(amount) == b.fare)
                        .then_some(())
                        .ok_or(AmountMismatch)
                }
                PredicateRule::PaymentCaptured => (snapshot()?.captured > Money::ZERO)
                    .then_some(())
                    .ok_or(NotCaptured),
                PredicateRule::BookingTicketed => snapshot().map(|_| ()),
                PredicateRule::RatingInRange => {
                    let r = int(rating.as_ref().ok_or(MissingInput)?)?;
                    (1..=5).contains(&r).then_some(()).ok_or(RatingOutOfRange)
                }
            }
        }
    }
}

/// `reference - at ≥ deadline_hours`, false when `at` is past `reference`.
pub fn within_window(deadline_hours: u64, reference: u64, at: u64) -> bool {
    reference
        .checked_sub(at)
        .is_some_and(|lead| lead >= deadline_hours)
}

/// Produces the actions of a `Validated` instance in spec order.
pub fn execute_contract(
    instance: &ContractInstance,
    world: &dyn WorldView,
) -> Result<(ContractInstance, Vec<Action>), ContractError> {
    if instance.status != InstanceStatus::Validated {
        return Err(ContractError::NotValidated);
    }
    let inputs = &instance.inputs;
    let need_text = |field: &str| {
        Param::Text(format!("${field}"))
            .text(inputs)
            .ok_or_else(|| ContractError::SchemaViolation(field.into()))
    };
    let need_int = |field: &str| {
        Param::Text(format!("${field}"))
            .integer(inputs)
            .ok_or_else(|| ContractError::SchemaViolation(field.into()))
    };
    let p_text = |p: &Param| {
        p.text(inputs)
            .ok_or_else(|| ContractError::InvalidSpec("unbound parameter".into()))
    };
    let p_int = |p: &Param| {
        p.integer(inputs)
            .ok_or_else(|| ContractError::InvalidSpec("unbound parameter".into()))
    };
    let changed = ContractError::ConditionsChanged;

    let mut reserved: Option<(String, String)> = None;
    let mut actions = Vec::new();
    for template in &instance.spec().actions {
        match template {
            ActionTemplate::ReserveSeat { flight } => {
                let flight = p_text(flight)?;
                let seat = world
                    .free_seats(&flight)
                    .into_iter()
                    .next()
                    .ok_or(changed(FailureReason::SeatUnavailable))?;
                reserved = Some((flight.clone(), seat.clone()));
                actions.push(Action::ReserveSeat { flight, seat });
            }
            ActionTemplate::ReleaseSeat { booking } => {
                let b = world
                    .booking(&p_text(booking)?)
                    .ok_or(changed(FailureReason::UnknownBooking))?;
                actions.push(Action::ReleaseSeat {
                    flight: b.flight,
                    seat: b.seat,
                });
            }
            ActionTemplate::AppendTransaction { record } => {
                let payload = match record {
                    TxKind::TicketIssued => {
                        let flight = need_text("flight")?;
                        let info = world
                            .flight(&flight)
                            .ok_or(changed(FailureReason::UnknownFlight))?;
                        let seat = match &reserved {
                            Some((f, s)) if *f == flight => s.clone(),
                            _ => world
                                .free_seats(&flight)
                                .into_iter()
                                .next()
                                .ok_or(changed(FailureReason::SeatUnavailable))?,
                        };
                        TxPayload::TicketIssued(TicketIssued {
                            pnr: need_text("pnr")?,
                            customer: need_text("customer")?,
                            flight,
                            route: info.route,
                            departure_hour: info.departure_hour,
                            seat,
                            fare: info.fare,
                            payment_method: need_text("payment_method")?,
                        })
                    }
                    TxKind::PaymentCaptured => TxPayload::PaymentCaptured(PaymentCaptured {
                        payment_id: need_text("payment_id")?,
                        pnr: need_text("pnr")?,
                        amount: Money(need_int("amount")?),
                        method: need_text("method")?,
                    }),
                    TxKind::BookingCancelled => {
                        let pnr = need_text("pnr")?;
                        let b = world
                            .booking(&pnr)
                            .ok_or(changed(FailureReason::UnknownBooking))?;
                        TxPayload::BookingCancelled(BookingCancelled {
                            pnr,
                            flight: b.flight,
                            seat: b.seat,
                            cancel_hour: need_int("cancel_hour")?,
                        })
                    }
                    TxKind::ReviewSubmitted => TxPayload::ReviewSubmitted(ReviewSubmitted {
                        review_id: need_text("review_id")?,
                        pnr: need_text("pnr")?,
                        rating: need_int("rating")?.min(u8::MAX as u64) as u8,
                        text: need_text("text")?,
                    }),
                    TxKind::InventoryAdjusted => TxPayload::InventoryAdjusted(InventoryAdjusted {
                        flight: need_text("flight")?,
                        route: need_text("route")?,
                        departure_hour: need_int("departure_hour")?,
                        capacity: need_int("capacity")?.min(u32::MAX as u64) as u32,
                        fare: Money(need_int("fare")?),
                        fare_class: need_text("fare_class")?,
                    }),
                    TxKind::RefundIssued => {
                        return Err(ContractError::InvalidSpec(
                            "refunds are issued with IssueRefund".into(),
                        ))
                    }
                };
                actions.push(Action::AppendTransaction { record: payload });
            }
            ActionTemplate::IssueRefund {
                booking,
                fare,
                fee_fraction,
                window_hours,
                at,
                reference,
                when,
            } => {
                if when
                    .iter()
                    .any(|c| check_condition(c, inputs, world).is_err())
                {
                    continue;
                }
                let pnr = p_text(booking)?;
                let fee = fee_fraction.fraction(inputs).ok_or_else(|| {
                    ContractError::InvalidPolicy("fee fraction outside [0, 1]".into())
                })?;
                let policy = RefundPolicy {
                    window_hours: p_int(window_hours)?,
                    fee_fraction: fee,
                };
                let amount =
                    evaluate_refund(Money(p_int(fare)?), &policy, p_int(at)?, p_int(reference)?)?;
                let snapshot = world
                    .booking(&pnr)
                    .ok_or(changed(FailureReason::UnknownBooking))?;
                let amount = amount.min(snapshot.captured.saturating_sub(snapshot.refunded));
                if amount == Money::ZERO {
                    continue;
                }
                let payment_id = snapshot
                    .payment_id
                    .ok_or(changed(FailureReason::NotCaptured))?;
                actions.push(Action::IssueRefund {
                    pnr,
                    payment_id,
                    amount,
                });
            }
            ActionTemplate::NotifyParties { parties, message } => {
                actions.push(Action::NotifyParties {
                    parties: parties.clone(),
                    message: render(message, inputs),
                });
            }
            ActionTemplate::NotifyUser { user, message } => {
                let user = match user {
                    Some(p) => p_text(p)?,
                    None => instance
                        .user
                        .clone()
                        .unwrap_or_else(|| instance.recipient()),
                };
                actions.push(Action::NotifyUser {
                    user,
                    message: render(message, inputs),
                });
            }
        }
    }
    let mut next = instance.clone();
    next.status = InstanceStatus::Executed;
    next.actions = actions.clone();
    Ok((next, actions))
}

/// Replaces `{field}` with the input's text value.
fn render(template: &str, inputs: &UserData) -> String {
    let mut out = template.to_string();
    for (k, v) in inputs {
        let value = match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        out = out.replace(&format!("{{{k}}}"), &value);
    }
    out
}
