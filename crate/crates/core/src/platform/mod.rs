//! The reservation system in one process: a validator cluster (or the lossy
//! baseline), the contract engine, the service projections and the scripted
//! payment gateway, behind the operations the HTTP gateway exposes.

mod backend;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use backend::author_for;
use backend::{Backend, BaselineBackend, Counters, LedgerBackend, Outbox};

use crate::consensus::{AvailabilityReport, ClusterWorld, Fault, QuorumConfig};
use crate::contract::{
    execute_contract, settle, validate_conditions, BookingSnapshot, CommittedRef, ContractEngine,
    ContractInstance, FailureReason, FlightInfo, InstanceStatus, NotificationReceipt,
    SettlementReport, UserData, WorldView, REJECTION_MESSAGE,
};
use crate::crypto::Membership;
use crate::ledger::{
    verify_log_bytes, Chain, HistoryFilter, InventoryAdjusted, LedgerError, LogWriter, TxKind,
    TxPayload, Verdict,
};
use crate::money::Money;
use crate::services::{
    divergence_report, search_flights, BookingStatus, DivergenceReport, FlightSummary,
    GatewayOutcome, PaymentGateway, PaymentRecord, PnrAllocator, Review, SeedData, ServiceError,
    ServiceProjections,
};

/// Simulated ticks per business hour.
pub const TICKS_PER_HOUR: u64 = 60;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Ledger,
    Baseline,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Probability that a direct service-to-service message is lost.
    #[serde(default)]
    pub drop_rate: f64,
    /// Scripted manual approval delay per booking.
    #[serde(default)]
    pub manual_approval_ticks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub cluster: QuorumConfig,
    #[serde(default)]
    pub seed_data: SeedData,
    #[serde(default)]
    pub payment_script: Vec<GatewayOutcome>,
    #[serde(default)]
    pub baseline: BaselineConfig,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        PlatformConfig {
            mode: Mode::Ledger,
            seed: 0,
            cluster: QuorumConfig::majority(4),
            seed_data: SeedData::default(),
            payment_script: Vec::new(),
            baseline: BaselineConfig::default(),
        }
    }
}

/// One contract run, kept for auditing rejection behaviour.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractRecord {
    pub instance_id: String,
    pub spec_name: String,
    pub pnr: Option<String>,
    pub status: InstanceStatus,
    /// Records this instance committed.
    pub ledger_writes: usize,
    pub notifications: usize,
    pub rejection_notices: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookingRequest {
    pub customer: String,
    pub flight: String,
    pub payment_method: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookingConfirmation {
    pub pnr: String,
    pub status: BookingStatus,
    pub flight: String,
    pub seat: String,
    pub fare: Money,
    pub tx_id: String,
    pub block_height: u64,
    pub block_hash: String,
    pub instance_id: String,
}

/// A booking whose contract has run but whose records are not yet written.
#[derive(Debug, Clone)]
pub struct PreparedBooking {
    pub pnr: String,
    instance: ContractInstance,
    started_at: u64,
}

impl PreparedBooking {
    pub fn status(&self) -> &InstanceStatus {
        &self.instance.status
    }

    /// Seat chosen at execution, if the contract executed.
    pub fn seat(&self) -> Option<&str> {
        self.instance.actions.iter().find_map(|a| match a {
            crate::contract::Action::ReserveSeat { seat, .. } => Some(seat.as_str()),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentRequest {
    pub pnr: String,
    pub amount: Money,
    pub method: String,
    #[serde(default)]
    pub payment_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentReceipt {
    pub payment: PaymentRecord,
    pub tx_id: String,
    pub block_height: u64,
    pub block_hash: String,
    /// The capture had already committed; nothing new was written.
    pub replayed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CancellationOutcome {
    pub pnr: String,
    pub status: BookingStatus,
    pub refund_amount: Money,
    pub tx_id: String,
    pub block_height: u64,
    pub block_hash: String,
    /// Every committed record: the cancellation, then any refund.
    pub records: Vec<CommittedRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewReceipt {
    pub review: Review,
    pub tx_id: String,
    pub block_height: u64,
    pub block_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub index: usize,
    pub id: String,
    pub up: bool,
    pub height: u64,
    pub tip_hash: String,
    pub uptime: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainCheck {
    pub verdict: Verdict,
    pub height: u64,
    pub tip_hash: String,
    /// `log` when read back from the persisted file, `memory` otherwise.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformMetrics {
    pub mode: Mode,
    pub clock: u64,
    pub height: u64,
    pub tx_count: usize,
    pub availability: Option<AvailabilityReport>,
    pub divergence: DivergenceReport,
    pub overbooking_violations: usize,
    pub illegal_transitions: usize,
    pub contracts_executed: usize,
    pub contracts_rejected: usize,
    pub notifications: usize,
    pub bookings_confirmed: usize,
    pub mean_cycle_ticks: f64,
    pub total_captured: Money,
    pub total_refunded: Money,
    pub messages_dropped: u64,
}

/// Read-only world assembled from the authoritative projections.
struct View<'a> {
    projections: &'a ServiceProjections,
    gateway: &'a PaymentGateway,
}

impl WorldView for View<'_> {
    fn flight(&self, flight: &str) -> Option<FlightInfo> {
        self.projections
            .inventory
            .state
            .flights
            .get(flight)
            .map(|f| f.info.clone())
    }

    fn free_seats(&self, flight: &str) -> Vec<String> {
        self.projections
            .inventory
            .state
            .flights
            .get(flight)
            .map(|f| f.free_seats())
            .unwrap_or_default()
    }

    fn booking(&self, pnr: &str) -> Option<BookingSnapshot> {
        self.projections
            .booking
            .state
            .bookings
            .get(pnr)
            .map(|b| BookingSnapshot {
                pnr: b.pnr.clone(),
                customer: b.customer.clone(),
                flight: b.flight.clone(),
                seat: b.seat.clone(),
                fare: b.fare,
                status: b.status,
                payment_id: b.payment_id.clone(),
                captured: b.captured,
                refunded: b.refunded,
            })
    }

    fn payment_confirmed(&self, pnr: &str) -> bool {
        self.gateway.approved(pnr)
    }
}

pub struct Platform {
    config: PlatformConfig,
    backend: Backend,
    engine: ContractEngine,
    gateway: PaymentGateway,
    pnrs: PnrAllocator,
    outbox: Outbox,
    contracts: Vec<ContractRecord>,
    calls: Counters,
    cycle_ticks: Vec<u64>,
    reviews: u64,
    log_path: Option<PathBuf>,
}

fn user_data(value: serde_json::Value) -> UserData {
    match value {
        serde_json::Value::Object(m) => m,
        _ => UserData::new(),
    }
}

fn primary(report: &SettlementReport, kind: TxKind) -> Result<CommittedRef, ServiceError> {
    report
        .committed_kind(kind)
        .cloned()
        .ok_or_else(|| ServiceError::Ledger(format!("{kind} record missing from settlement")))
}

/// Path of the membership file written next to a chain log.
pub fn membership_sidecar(log: &Path) -> PathBuf {
    let mut name = log.as_os_str().to_owned();
    name.push(".members.json");
    PathBuf::from(name)
}

pub fn load_membership(log: &Path) -> Result<Membership, LedgerError> {
    let text = std::fs::read_to_string(membership_sidecar(log))?;
    let file = serde_json::from_str(&text).map_err(|e| LedgerError::Io(e.to_string()))?;
    Membership::from_file(&file).map_err(|e| LedgerError::Io(e.to_string()))
}

impl Platform {
    /// Boots the backend and opens every seed flight on it.
    pub fn new(config: PlatformConfig) -> Result<Self, ServiceError> {
        let backend = match config.mode {
            Mode::Ledger => Backend::Ledger(Box::new(LedgerBackend::new(
                config.cluster.clone(),
                config.seed,
            )?)),
            Mode::Baseline => Backend::Baseline(Box::new(BaselineBackend::new(
                config.seed,
                config.baseline.drop_rate,
            ))),
        };
        let mut platform = Platform {
            gateway: PaymentGateway::new(config.payment_script.clone()),
            pnrs: PnrAllocator::new(config.seed),
            engine: ContractEngine::with_defaults(),
            backend,
            outbox: Outbox::default(),
            contracts: Vec::new(),
            calls: Counters::new(),
            cycle_ticks: Vec::new(),
            reviews: 0,
            log_path: None,
            config,
        };
        platform.open_flights()?;
        Ok(platform)
    }

    /// Like [`Platform::new`], mirroring every committed block to `log` and
    /// writing the validator membership next to it.
    pub fn with_log(config: PlatformConfig, log: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let mut p = Platform::new(config)?;
        p.attach_log(log.as_ref())?;
        Ok(p)
    }

    fn attach_log(&mut self, log: &Path) -> Result<(), ServiceError> {
        let io = |e: LedgerError| ServiceError::Ledger(e.to_string());
        let Backend::Ledger(l) = &mut self.backend else {
            return Err(ServiceError::Ledger(
                "baseline mode keeps no chain log".into(),
            ));
        };
        let writer = LogWriter::create(log, l.world.canonical_chain().blocks()).map_err(io)?;
        l.attach_writer(writer);
        let members = serde_json::to_string_pretty(&l.world.members().to_file())
            .expect("membership serializes");
        std::fs::write(membership_sidecar(log), members)
            .map_err(|e| ServiceError::Ledger(e.to_string()))?;
        self.log_path = Some(log.to_path_buf());
        Ok(())
    }

    fn open_flights(&mut self) -> Result<(), ServiceError> {
        for f in self.config.seed_data.flights.clone() {
            let payload = TxPayload::InventoryAdjusted(InventoryAdjusted {
                flight: f.flight,
                route: f.route,
                departure_hour: f.departure_hour,
                capacity: f.capacity,
                fare: f.fare,
                fare_class: f.fare_class,
            });
            if let Backend::Baseline(b) = &mut self.backend {
                b.load_reference(&payload);
            }
            let handle = self.backend.handle();
            let tx = handle.prepare(payload)?;
            handle.commit(&[tx]).map_err(|a| {
                ServiceError::Ledger(format!("seed data not committed by height {}", a.height))
            })?;
        }
        Ok(())
    }

    fn call(&mut self, op: &'static str) -> Result<(), ServiceError> {
        *self.calls.entry(op).or_default() += 1;
        self.backend.sync()
    }

    fn view(&self) -> View<'_> {
        View {
            projections: self.backend.projections(),
            gateway: &self.gateway,
        }
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn projections(&self) -> &ServiceProjections {
        self.backend.projections()
    }

    /// The committed chain (the baseline's local journal in baseline mode).
    pub fn chain(&self) -> &Chain {
        self.backend.chain()
    }

    pub fn world(&self) -> Option<&ClusterWorld> {
        match &self.backend {
            Backend::Ledger(l) => Some(&l.world),
            Backend::Baseline(_) => None,
        }
    }

    pub fn members(&self) -> Option<&Membership> {
        self.world().map(|w| w.members())
    }

    pub fn clock(&self) -> u64 {
        self.backend.clock()
    }

    pub fn business_hour(&self) -> u64 {
        self.clock() / TICKS_PER_HOUR
    }

    pub fn contract_log(&self) -> &[ContractRecord] {
        &self.contracts
    }

    /// Service operations invoked so far, by name.
    pub fn service_calls(&self) -> u64 {
        self.calls.values().sum()
    }

    pub fn gateway_calls(&self) -> u64 {
        self.gateway.calls
    }

    pub fn notifications(&self, recipient: Option<&str>) -> Vec<NotificationReceipt> {
        self.outbox
            .sent
            .iter()
            .filter(|n| recipient.is_none_or(|r| n.recipient == r))
            .cloned()
            .collect()
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log_path.as_deref()
    }

    /// Advances the logical clock, letting in-flight rounds finish.
    pub fn advance(&mut self, ticks: u64) -> Result<(), ServiceError> {
        match &mut self.backend {
            Backend::Ledger(l) => l.world.run(ticks),
            Backend::Baseline(b) => b.clock += ticks,
        }
        self.backend.sync()
    }

    /// Runs the cluster until nothing is queued, up to `max_ticks`.
    pub fn quiesce(&mut self, max_ticks: u64) -> Result<bool, ServiceError> {
        let idle = match &mut self.backend {
            Backend::Ledger(l) => l.world.run_until_idle(max_ticks),
            Backend::Baseline(_) => true,
        };
        self.backend.sync()?;
        Ok(idle)
    }

    pub fn inject_fault(&mut self, fault: Fault) -> Result<(), ServiceError> {
        match &mut self.backend {
            Backend::Ledger(l) => l
                .world
                .inject_fault(fault)
                .map_err(|e| ServiceError::Ledger(e.to_string())),
            Backend::Baseline(_) => {
                Err(ServiceError::Ledger("baseline mode has no cluster".into()))
            }
        }
    }

    pub fn search_flights(
        &mut self,
        route: Option<&str>,
        day: Option<u64>,
    ) -> Result<Vec<FlightSummary>, ServiceError> {
        self.call("search_flights")?;
        Ok(search_flights(
            &self.projections().inventory.state,
            route,
            day,
        ))
    }

    fn record(&mut self, instance: &ContractInstance, report: &SettlementReport) {
        self.contracts.push(ContractRecord {
            instance_id: instance.instance_id.clone(),
            spec_name: instance.spec_name.clone(),
            pnr: instance.input_text("pnr"),
            status: report.status.clone(),
            ledger_writes: report.committed.len(),
            notifications: report.notifications.len(),
            rejection_notices: report
                .notifications
                .iter()
                .filter(|n| n.message == REJECTION_MESSAGE)
                .count(),
        });
    }

    /// Writes an instance's records and notifications; rejections become errors.
    fn settle_instance(
        &mut self,
        instance: &mut ContractInstance,
    ) -> Result<SettlementReport, ServiceError> {
        let actions = instance.actions.clone();
        let report = settle(instance, &actions, self.backend.handle(), &mut self.outbox);
        let report = match report {
            Ok(r) => r,
            Err(e) => {
                self.backend.sync()?;
                return Err(e.into());
            }
        };
        self.backend.sync()?;
        self.record(instance, &report);
        if instance.is_rejected() {
            return Err(ServiceError::RejectedByContract {
                reasons: instance.reasons().to_vec(),
            });
        }
        Ok(report)
    }

    /// Runs a fresh instance of `spec` against the current projections. The
    /// payment gateway is consulted through `gateway_step` only when every
    /// other condition already holds.
    fn run_contract(
        &mut self,
        spec: &str,
        inputs: serde_json::Value,
        gateway_step: impl FnOnce(&mut PaymentGateway) -> Result<(), ServiceError>,
    ) -> Result<ContractInstance, ServiceError> {
        let mut instance = self.engine.create(spec, user_data(inputs))?;
        let precheck = validate_conditions(&instance, &self.view());
        if precheck
            .failed
            .iter()
            .all(|(_, r)| *r == FailureReason::PaymentFailed)
        {
            gateway_step(&mut self.gateway)?;
        }
        let view = View {
            projections: self.backend.projections(),
            gateway: &self.gateway,
        };
        self.engine.run(&mut instance, &view)?;
        Ok(instance)
    }

    /// Allocates a pnr, authorizes payment and runs the booking policy,
    /// without writing anything.
    pub fn prepare_booking(
        &mut self,
        req: &BookingRequest,
    ) -> Result<PreparedBooking, ServiceError> {
        self.call("prepare_booking")?;
        let pnr = self.pnrs.next_pnr();
        let fare = self
            .view()
            .flight(&req.flight)
            .map(|f| f.fare)
            .unwrap_or_default();
        let inputs = json!({
            "pnr": pnr,
            "customer": req.customer,
            "flight": req.flight,
            "payment_method": req.payment_method,
        });
        let p = pnr.clone();
        let instance = self.run_contract("BookingPolicy", inputs, |g| {
            g.authorize(&p, fare);
            Ok(())
        })?;
        Ok(PreparedBooking {
            pnr,
            instance,
            started_at: self.clock(),
        })
    }

    /// Re-checks a prepared booking against the current state and writes it.
    /// A seat taken in the meantime is replaced by the next free one; a
    /// flight that sold out rejects the booking.
    pub fn settle_booking(
        &mut self,
        prepared: PreparedBooking,
    ) -> Result<BookingConfirmation, ServiceError> {
        self.call("settle_booking")?;
        let PreparedBooking {
            pnr,
            mut instance,
            started_at,
        } = prepared;
        if instance.status == InstanceStatus::Executed {
            let check = validate_conditions(&instance, &self.view());
            if !check.ok {
                instance.reject(check.reasons());
            } else {
                let seat = instance.actions.iter().find_map(|a| match a {
                    crate::contract::Action::ReserveSeat { flight, seat } => {
                        Some((flight.clone(), seat.clone()))
                    }
                    _ => None,
                });
                if let Some((flight, seat)) = seat {
                    if !self.view().free_seats(&flight).contains(&seat) {
                        instance.status = InstanceStatus::Validated;
                        let (next, _) = execute_contract(&instance, &self.view())?;
                        instance = next;
                    }
                }
            }
        }
        let report = self.settle_instance(&mut instance)?;
        let ticket = primary(&report, TxKind::TicketIssued)?;
        let manual = match self.config.mode {
            Mode::Ledger => 0,
            Mode::Baseline => self.config.baseline.manual_approval_ticks,
        };
        self.cycle_ticks.push(self.clock() - started_at + manual);
        let b = self.projections().booking.state.bookings.get(&pnr).cloned();
        let b = b.ok_or_else(|| {
            ServiceError::Ledger(format!("booking {pnr} not projected after commit"))
        })?;
        Ok(BookingConfirmation {
            pnr,
            status: b.status,
            flight: b.flight,
            seat: b.seat,
            fare: b.fare,
            tx_id: ticket.tx_id,
            block_height: ticket.height,
            block_hash: ticket.block_hash,
            instance_id: instance.instance_id,
        })
    }

    pub fn initiate_booking(
        &mut self,
        req: &BookingRequest,
    ) -> Result<BookingConfirmation, ServiceError> {
        let prepared = self.prepare_booking(req)?;
        self.settle_booking(prepared)
    }

    /// Captures payment for a ticketed booking. Retrying with the payment id
    /// of a committed capture returns that capture.
    pub fn capture_payment(
        &mut self,
        req: &PaymentRequest,
    ) -> Result<PaymentReceipt, ServiceError> {
        self.call("capture_payment")?;
        let payment_id = req
            .payment_id
            .clone()
            .unwrap_or_else(|| format!("PAY-{}", req.pnr));
        if !self
            .projections()
            .booking
            .state
            .bookings
            .contains_key(&req.pnr)
        {
            return Err(ServiceError::UnknownPnr(req.pnr.clone()));
        }
        if let Some(existing) = self
            .projections()
            .payment
            .state
            .payments
            .get(&payment_id)
            .cloned()
        {
            if existing.pnr == req.pnr {
                let ev = self
                    .projections()
                    .audit
                    .state
                    .lookup(&req.pnr)
                    .iter()
                    .find(|e| matches!(&e.payload, TxPayload::PaymentCaptured(p) if p.payment_id == payment_id))
                    .cloned()
                    .ok_or_else(|| ServiceError::Ledger(format!("capture {payment_id} missing from audit")))?;
                return Ok(PaymentReceipt {
                    payment: existing,
                    tx_id: ev.tx_id,
                    block_height: ev.height,
                    block_hash: ev.block_hash,
                    replayed: true,
                });
            }
        }
        let inputs = json!({
            "pnr": req.pnr,
            "payment_id": payment_id,
            "amount": req.amount.minor(),
            "method": req.method,
        });
        let (pid, pnr, amount) = (payment_id.clone(), req.pnr.clone(), req.amount);
        let mut instance = self.run_contract("PaymentPolicy", inputs, |g| {
            match g.capture(&pid, &pnr, amount) {
                GatewayOutcome::Timeout => Err(ServiceError::GatewayTimeout {
                    payment_id: pid.clone(),
                }),
                _ => Ok(()),
            }
        })?;
        let report = self.settle_instance(&mut instance)?;
        let captured = primary(&report, TxKind::PaymentCaptured)?;
        let payment = self
            .projections()
            .payment
            .state
            .payments
            .get(&payment_id)
            .cloned();
        let payment = payment
            .ok_or_else(|| ServiceError::Ledger(format!("payment {payment_id} not projected")))?;
        Ok(PaymentReceipt {
            payment,
            tx_id: captured.tx_id,
            block_height: captured.height,
            block_hash: captured.block_hash,
            replayed: false,
        })
    }

    /// Cancels a confirmed booking at `cancel_hour` (default: now), releasing
    /// the seat and refunding per the fare class policy.
    pub fn cancel_booking(
        &mut self,
        pnr: &str,
        cancel_hour: Option<u64>,
    ) -> Result<CancellationOutcome, ServiceError> {
        self.call("cancel_booking")?;
        let booking = self.projections().booking.state.bookings.get(pnr).cloned();
        let booking = booking.ok_or_else(|| ServiceError::UnknownPnr(pnr.to_string()))?;
        if booking.status != BookingStatus::Confirmed {
            return Err(ServiceError::NotCancellable(booking.status));
        }
        let class = self
            .view()
            .flight(&booking.flight)
            .map(|f| f.fare_class)
            .unwrap_or_default();
        let policy = self.config.seed_data.policy(&class);
        let inputs = json!({
            "pnr": pnr,
            "cancel_hour": cancel_hour.unwrap_or_else(|| self.business_hour()),
            "departure_hour": booking.departure_hour,
            "window_hours": policy.window_hours,
            "fee_fraction": policy.fee_fraction.as_f64(),
            "fare": booking.fare.minor(),
        });
        let mut instance = self.run_contract("CancellationPolicy", inputs, |_| Ok(()))?;
        let report = self.settle_instance(&mut instance)?;
        let cancelled = primary(&report, TxKind::BookingCancelled)?;
        let refund_amount = instance
            .actions
            .iter()
            .find_map(|a| match a {
                crate::contract::Action::IssueRefund { amount, .. } => Some(*amount),
                _ => None,
            })
            .unwrap_or_default();
        let status = self
            .projections()
            .booking
            .state
            .bookings
            .get(pnr)
            .map(|b| b.status)
            .unwrap_or(BookingStatus::Cancelled);
        Ok(CancellationOutcome {
            pnr: pnr.to_string(),
            status,
            refund_amount,
            tx_id: cancelled.tx_id.clone(),
            block_height: cancelled.height,
            block_hash: cancelled.block_hash.clone(),
            records: report.committed,
        })
    }

    pub fn submit_review(
        &mut self,
        pnr: &str,
        rating: u64,
        text: &str,
    ) -> Result<ReviewReceipt, ServiceError> {
        self.call("submit_review")?;
        if !self.projections().booking.state.bookings.contains_key(pnr) {
            return Err(ServiceError::UnknownPnr(pnr.to_string()));
        }
        self.reviews += 1;
        let review_id = format!("RV{:06}", self.reviews);
        let inputs = json!({ "pnr": pnr, "review_id": review_id, "rating": rating, "text": text });
        let mut instance = self.run_contract("ReviewPolicy", inputs, |_| Ok(()))?;
        let report = self.settle_instance(&mut instance)?;
        let r = primary(&report, TxKind::ReviewSubmitted)?;
        let review = self
            .projections()
            .review
            .state
            .reviews
            .get(&review_id)
            .cloned();
        let review = review
            .ok_or_else(|| ServiceError::Ledger(format!("review {review_id} not projected")))?;
        Ok(ReviewReceipt {
            review,
            tx_id: r.tx_id,
            block_height: r.height,
            block_hash: r.block_hash,
        })
    }

    pub fn booking(&mut self, pnr: &str) -> Result<crate::services::Booking, ServiceError> {
        self.call("booking")?;
        self.projections()
            .booking
            .state
            .bookings
            .get(pnr)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownPnr(pnr.to_string()))
    }

    /// Every committed record about `pnr` in chain order; empty when unknown.
    pub fn history(&mut self, pnr: &str) -> Result<Vec<crate::services::AuditEvent>, ServiceError> {
        self.call("history")?;
        Ok(self.projections().audit.state.lookup(pnr).to_vec())
    }

    pub fn audit(
        &mut self,
        filter: &HistoryFilter,
    ) -> Result<Vec<crate::services::AuditEvent>, ServiceError> {
        self.call("audit")?;
        let chain = self.chain();
        Ok(chain
            .query_history(filter)
            .into_iter()
            .map(|l| {
                let block = chain.block(l.height).expect("located in chain");
                crate::services::AuditEvent {
                    height: l.height,
                    index: l.index,
                    block_hash: block.block_hash.clone(),
                    tx_id: l.tx.tx_id.clone(),
                    kind: l.tx.kind(),
                    logical_time: l.tx.logical_time,
                    author: l.tx.author.as_str().to_string(),
                    payload: l.tx.payload.clone(),
                }
            })
            .collect())
    }

    /// Verifies the persisted log when one is attached, else the in-memory chain.
    pub fn verify(&mut self) -> Result<ChainCheck, ServiceError> {
        self.call("verify")?;
        let Some(members) = self.members().cloned() else {
            return Err(ServiceError::Ledger(
                "baseline mode has no verifiable chain".into(),
            ));
        };
        let chain = self.chain();
        let (height, tip_hash) = (chain.height(), chain.tip_hash().to_string());
        match &self.log_path {
            Some(path) => {
                let bytes = std::fs::read(path).map_err(|e| ServiceError::Ledger(e.to_string()))?;
                Ok(ChainCheck {
                    verdict: verify_log_bytes(&bytes, &members),
                    height,
                    tip_hash,
                    source: "log".into(),
                })
            }
            None => Ok(ChainCheck {
                verdict: chain.verify(&members),
                height,
                tip_hash,
                source: "memory".into(),
            }),
        }
    }

    pub fn nodes(&mut self) -> Result<Vec<NodeInfo>, ServiceError> {
        self.call("nodes")?;
        let Some(world) = self.world() else {
            return Ok(Vec::new());
        };
        let clock = world.clock().max(1) as f64;
        Ok(world
            .nodes()
            .iter()
            .map(|n| NodeInfo {
                index: n.index,
                id: n.id.as_str().to_string(),
                up: n.is_up(),
                height: n.height(),
                tip_hash: n.chain().tip_hash().to_string(),
                uptime: if world.clock() == 0 {
                    1.0
                } else {
                    n.up_ticks as f64 / clock
                },
            })
            .collect())
    }

    pub fn divergence(&self) -> DivergenceReport {
        divergence_report(&self.backend.facts())
    }

    pub fn metrics(&mut self) -> Result<PlatformMetrics, ServiceError> {
        self.call("metrics")?;
        let p = self.projections();
        let rejected = self
            .contracts
            .iter()
            .filter(|c| matches!(c.status, InstanceStatus::Rejected { .. }))
            .count();
        let confirmed = p
            .booking
            .state
            .bookings
            .values()
            .filter(|b| b.status == BookingStatus::Confirmed)
            .count();
        Ok(PlatformMetrics {
            mode: self.config.mode,
            clock: self.clock(),
            height: self.chain().height(),
            tx_count: self.chain().tx_count(),
            availability: self.world().map(|w| w.availability_report()),
            divergence: self.divergence(),
            overbooking_violations: p.inventory.state.capacity_violations.len(),
            illegal_transitions: p.booking.state.illegal.len(),
            contracts_executed: self.contracts.len() - rejected,
            contracts_rejected: rejected,
            notifications: self.outbox.sent.len(),
            bookings_confirmed: confirmed,
            mean_cycle_ticks: mean(&self.cycle_ticks),
            total_captured: p.payment.state.total_captured,
            total_refunded: p.payment.state.total_refunded,
            messages_dropped: match &self.backend {
                Backend::Ledger(l) => l.world.availability_report().dropped_messages,
                Backend::Baseline(b) => b.dropped,
            },
        })
    }

    pub fn mean_cycle_ticks(&self) -> f64 {
        mean(&self.cycle_ticks)
    }
}

fn mean(xs: &[u64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<u64>() as f64 / xs.len() as f64
    }
}
