//! Deterministic end-to-end runs: a scenario file drives the whole platform
//! through a seeded workload and fault plan and yields a metrics report
//! plus the persisted chain log.

mod report;
mod rng;
mod tamper;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{
    relative_reduction, replay, ChainSummary, Comparison, InvariantCheck, MetricsReport,
    WorkloadCounts,
};
pub use rng::SimRng;
pub use tamper::{probe_log, tamper_demo, ProbeSummary, TamperOutcome, TAMPER_MASK};

use crate::consensus::{Fault, QuorumConfig};
use crate::contract::InstanceStatus;
use crate::ledger::LedgerError;
use crate::platform::{
    BaselineConfig, BookingRequest, Mode, PaymentRequest, Platform, PlatformConfig,
};
use crate::services::{GatewayOutcome, SeedData, ServiceError, ServiceProjections};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot parse scenario {path}: {message}")]
    ScenarioParse { path: PathBuf, message: String },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("log has {blocks} blocks; no block at height {height}")]
    HeightOutOfRange { height: u64, blocks: u64 },
    #[error("offset {offset} is outside block {height} ({len} bytes)")]
    OffsetOutOfRange {
        height: u64,
        offset: usize,
        len: usize,
    },
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Service(#[from] ServiceError),
}

fn one() -> usize {
    1
}

/// Inclusive bounds on the gap between consecutive booking batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrival {
    pub min: u64,
    pub max: u64,
}

impl Default for Arrival {
    fn default() -> Self {
        Arrival { min: 1, max: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub bookings: usize,
    /// Bookings prepared against the same state before any of them settles.
    #[serde(default = "one")]
    pub concurrency: usize,
    #[serde(default)]
    pub payment_rate: f64,
    #[serde(default)]
    pub cancel_rate: f64,
    #[serde(default)]
    pub review_rate: f64,
    #[serde(default)]
    pub arrival_ticks: Arrival,
    /// Flights to book; every seeded flight when empty.
    #[serde(default)]
    pub flights: Vec<String>,
    /// Cycle through the flights in order instead of drawing at random.
    #[serde(default)]
    pub round_robin: bool,
}

fn default_cluster() -> QuorumConfig {
    QuorumConfig::majority(4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_cluster")]
    pub cluster: QuorumConfig,
    #[serde(default)]
    pub seed_data: SeedData,
    pub workload: Workload,
    /// Fault ticks count from the start of the workload.
    #[serde(default)]
    pub fault_plan: Vec<Fault>,
    #[serde(default)]
    pub payment_script: Vec<GatewayOutcome>,
    #[serde(default)]
    pub baseline: BaselineConfig,
    /// Random single-byte mutations checked against the persisted log.
    #[serde(default)]
    pub tamper_probes: usize,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let parse = |message: String| SimError::ScenarioParse {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| parse(e.to_string()))?;
        let scenario: Scenario = serde_json::from_str(&text).map_err(|e| parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.cluster
            .validate()
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        let w = &self.workload;
        if w.concurrency == 0 {
            return Err(SimError::InvalidScenario(
                "concurrency must be at least 1".into(),
            ));
        }
        if w.arrival_ticks.min > w.arrival_ticks.max {
            return Err(SimError::InvalidScenario(
                "arrival_ticks.min exceeds max".into(),
            ));
        }
        for (name, rate) in [
            ("payment_rate", w.payment_rate),
            ("cancel_rate", w.cancel_rate),
            ("review_rate", w.review_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(SimError::InvalidScenario(format!(
                    "{name} must be within 0..=1"
                )));
            }
        }
        if let Some(f) = w
            .flights
            .iter()
            .find(|f| !self.seed_data.flights.iter().any(|s| &s.flight == *f))
        {
            return Err(SimError::InvalidScenario(format!(
                "workload flight {f} is not seeded"
            )));
        }
        if self.mode == Mode::Baseline && !self.fault_plan.is_empty() {
            return Err(SimError::InvalidScenario(
                "baseline mode has no cluster to fault".into(),
            ));
        }
        Ok(())
    }

    pub fn with_mode(&self, mode: Mode) -> Scenario {
        Scenario {
            mode,
            fault_plan: if mode == Mode::Baseline {
                Vec::new()
            } else {
                self.fault_plan.clone()
            },
            ..self.clone()
        }
    }

    pub fn platform_config(&self) -> PlatformConfig {
        PlatformConfig {
            mode: self.mode,
            seed: self.seed,
            cluster: self.cluster.clone(),
            seed_data: self.seed_data.clone(),
            payment_script: self.payment_script.clone(),
            baseline: self.baseline.clone(),
        }
    }
}

fn shift(fault: &Fault, by: u64) -> Fault {
    match fault.clone() {
        Fault::Crash { node, at } => Fault::Crash { node, at: at + by },
        Fault::Restart { node, at } => Fault::Restart { node, at: at + by },
        Fault::Drop(mut m) => {
            m.after = Some(m.after.unwrap_or(0) + by);
            m.before = m.before.map(|t| t + by);
            Fault::Drop(m)
        }
        Fault::Partition { group, from, to } => Fault::Partition {
            group,
            from: from + by,
            to: to + by,
        },
    }
}

/// Per-booking choices, drawn up front so both modes see the same workload.
struct Plan {
    flight: String,
    method: &'static str,
    pay: bool,
    review: bool,
    rating: u64,
    cancel: bool,
}

const METHODS: [&str; 3] = ["Credit Card", "Debit Card", "Mobile Wallet"];

fn plans(scenario: &Scenario, root: &SimRng) -> Vec<Plan> {
    let flights: Vec<String> = if scenario.workload.flights.is_empty() {
        scenario
            .seed_data
            .flights
            .iter()
            .map(|f| f.flight.clone())
            .collect()
    } else {
        scenario.workload.flights.clone()
    };
    let mut rng = root.fork("workload");
    let w = &scenario.workload;
    (0..w.bookings)
        .map(|i| Plan {
            flight: match w.round_robin {
                true => flights[i % flights.len()].clone(),
                false => flights[rng.index(flights.len())].clone(),
            },
            method: METHODS[rng.index(METHODS.len())],
            pay: rng.chance(w.payment_rate),
            review: rng.chance(w.review_rate),
            rating: rng.range(1, 5),
            cancel: rng.chance(w.cancel_rate),
        })
        .collect()
}

/// Upper bound on ticks spent draining the cluster after the workload.
const DRAIN_TICKS: u64 = 20_000;

/// Runs `scenario` to completion. In ledger mode the committed chain is
/// mirrored to `log` when one is given.
pub fn run(scenario: &Scenario, log: Option<&Path>) -> Result<MetricsReport, SimError> {
    scenario.validate()?;
    if scenario.seed_data.flights.is_empty() && scenario.workload.bookings > 0 {
        return Err(SimError::InvalidScenario(
            "bookings need at least one seeded flight".into(),
        ));
    }
    let config = scenario.platform_config();
    let mut platform = match (scenario.mode, log) {
        (Mode::Ledger, Some(path)) => Platform::with_log(config, path)?,
        _ => Platform::new(config)?,
    };
    let start = platform.clock();
    for fault in &scenario.fault_plan {
        platform.inject_fault(shift(fault, start))?;
    }
    let root = SimRng::new(scenario.seed);
    let mut arrivals = root.fork("arrivals");
    let plans = plans(scenario, &root);
    let mut counts = WorkloadCounts::default();
    let mut ticket_ids = Vec::new();
    let gap = scenario.workload.arrival_ticks;

    for (batch_no, batch) in plans.chunks(scenario.workload.concurrency).enumerate() {
        platform.advance(arrivals.range(gap.min, gap.max))?;
        let mut prepared = Vec::new();
        for (i, plan) in batch.iter().enumerate() {
            counts.booking_attempts += 1;
            let n = batch_no * scenario.workload.concurrency + i;
            let req = BookingRequest {
                customer: format!("Passenger {n:05}"),
                flight: plan.flight.clone(),
                payment_method: plan.method.to_string(),
            };
            match platform.prepare_booking(&req) {
                Ok(p) => prepared.push((p, plan)),
                Err(ServiceError::RejectedByContract { .. }) => counts.bookings_rejected += 1,
                Err(_) => counts.bookings_failed += 1,
            }
        }
        for (p, plan) in prepared {
            let confirmation = match platform.settle_booking(p) {
                Ok(c) => c,
                Err(ServiceError::RejectedByContract { .. }) => {
                    counts.bookings_rejected += 1;
                    continue;
                }
                Err(_) => {
                    counts.bookings_failed += 1;
                    continue;
                }
            };
            counts.bookings_confirmed += 1;
            ticket_ids.push(confirmation.tx_id.clone());
            if plan.pay {
                pay(
                    &mut platform,
                    &confirmation.pnr,
                    confirmation.fare,
                    plan.method,
                    &mut counts,
                );
            }
            if plan.review {
                match platform.submit_review(&confirmation.pnr, plan.rating, "Scripted review") {
                    Ok(_) => counts.reviews += 1,
                    Err(_) => counts.operation_errors += 1,
                }
            }
            if plan.cancel {
                match platform.cancel_booking(&confirmation.pnr, None) {
                    Ok(c) => {
                        counts.cancellations += 1;
                        counts.refunds += (c.refund_amount.minor() > 0) as u64;
                    }
                    Err(_) => counts.operation_errors += 1,
                }
            }
        }
    }
    platform.quiesce(DRAIN_TICKS)?;

    let tamper = match (platform.log_path(), platform.members()) {
        (Some(path), Some(members)) if scenario.tamper_probes > 0 => {
            let bytes = std::fs::read(path).map_err(|e| SimError::Io(e.to_string()))?;
            probe_log(
                &bytes,
                members,
                scenario.tamper_probes,
                &mut root.fork("tamper"),
            )?
        }
        _ => ProbeSummary::default(),
    };
    assemble(scenario, &mut platform, counts, &ticket_ids, tamper)
}

fn pay(
    platform: &mut Platform,
    pnr: &str,
    fare: crate::money::Money,
    method: &str,
    counts: &mut WorkloadCounts,
) {
    let req = PaymentRequest {
        pnr: pnr.to_string(),
        amount: fare,
        method: method.to_string(),
        payment_id: Some(format!("PAY-{pnr}")),
    };
    let mut outcome = platform.capture_payment(&req);
    if matches!(outcome, Err(ServiceError::GatewayTimeout { .. })) {
        counts.payment_timeouts += 1;
        outcome = platform.capture_payment(&req);
    }
    match outcome {
        Ok(_) => counts.payments_captured += 1,
        Err(ServiceError::RejectedByContract { .. }) => counts.payments_rejected += 1,
        Err(ServiceError::GatewayTimeout { .. }) => counts.payment_timeouts += 1,
        Err(_) => counts.operation_errors += 1,
    }
}

fn check(name: &str, held: bool, detail: String) -> InvariantCheck {
    InvariantCheck {
        name: name.to_string(),
        held,
        detail,
    }
}

fn assemble(
    scenario: &Scenario,
    platform: &mut Platform,
    workload: WorkloadCounts,
    ticket_ids: &[String],
    tamper: ProbeSummary,
) -> Result<MetricsReport, SimError> {
    let metrics = platform.metrics()?;
    let chain = platform.chain();
    let rebuilt = ServiceProjections::rebuild(chain)?;
    let summary = ChainSummary::from_parts(chain, &rebuilt);
    let availability = platform.world().map(|w| w.availability_report());
    let safety = platform.world().map(|w| w.violations().len()).unwrap_or(0);
    let impure = platform
        .contract_log()
        .iter()
        .filter(|c| match c.status {
            InstanceStatus::Rejected { .. } => c.ledger_writes != 0 || c.rejection_notices != 1,
            _ => c.rejection_notices != 0,
        })
        .count();
    let missing = ticket_ids
        .iter()
        .filter(|id| !chain.contains_tx(id))
        .count();
    let committed = availability
        .as_ref()
        .map(|a| a.committed)
        .unwrap_or(chain.tx_count() as u64);
    let oracle = rebuilt == *platform.projections();

    let invariants = vec![
        check(
            "overbooking",
            metrics.overbooking_violations == 0,
            format!("{} capacity violations", metrics.overbooking_violations),
        ),
        check(
            "safety",
            safety == 0,
            format!("{safety} conflicting commits"),
        ),
        check(
            "rejection_purity",
            impure == 0,
            format!("{impure} contract runs with writes or notices out of place"),
        ),
        check(
            "chain_consistency",
            missing == 0 && committed == summary.tx_count as u64,
            format!(
                "{committed} committed, {} on chain, {missing} tickets missing",
                summary.tx_count
            ),
        ),
        check(
            "projection_oracle",
            oracle,
            "incremental projections equal a rebuild from genesis".into(),
        ),
    ];
    Ok(MetricsReport {
        scenario: scenario.name.clone(),
        mode: scenario.mode,
        seed: scenario.seed,
        ticks: platform.clock(),
        submitted_txs: availability
            .as_ref()
            .map(|a| a.submitted)
            .unwrap_or(committed),
        committed_txs: committed,
        expired_txs: availability.as_ref().map(|a| a.expired).unwrap_or(0),
        committed_fraction: availability
            .as_ref()
            .map(|a| a.committed_fraction)
            .unwrap_or(1.0),
        stall_ticks: availability.as_ref().map(|a| a.stall_ticks).unwrap_or(0),
        aborted_rounds: availability.as_ref().map(|a| a.aborted_rounds).unwrap_or(0),
        workload,
        divergence: metrics.divergence.field_mismatches,
        divergent_pnrs: metrics.divergence.affected_pnrs.len(),
        messages_dropped: metrics.messages_dropped,
        overbooking_violations: metrics.overbooking_violations,
        safety_violations: safety,
        rejection_purity_violations: impure,
        mean_cycle_ticks: metrics.mean_cycle_ticks,
        manual_approval_ticks: scenario.baseline.manual_approval_ticks,
        tamper,
        node_uptime: availability.map(|a| a.node_uptime).unwrap_or_default(),
        chain: summary,
        invariants,
    })
}

pub fn run_file(path: &Path, log: Option<&Path>) -> Result<MetricsReport, SimError> {
    run(&Scenario::load(path)?, log)
}

/// Runs the scenario's workload once per mode on the same seed.
pub fn compare_modes(scenario: &Scenario) -> Result<Comparison, SimError> {
    let ledger = run(&scenario.with_mode(Mode::Ledger), None)?;
    let baseline = run(&scenario.with_mode(Mode::Baseline), None)?;
    Ok(Comparison::new(ledger, baseline))
}
