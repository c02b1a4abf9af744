use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tamper::ProbeSummary;
use super::SimError;
use crate::ledger::{load, Chain};
use crate::money::Money;
use crate::platform::Mode;
use crate::services::{BookingStatus, ServiceProjections};

/// Outcome counts of the scripted workload.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadCounts {
    pub booking_attempts: u64,
    pub bookings_confirmed: u64,
    pub bookings_rejected: u64,
    /// Bookings that ended in an error other than a contract rejection.
    pub bookings_failed: u64,
    pub payments_captured: u64,
    pub payments_rejected: u64,
    pub payment_timeouts: u64,
    pub cancellations: u64,
    pub refunds: u64,
    pub reviews: u64,
    /// Follow-up operations (payment, cancel, review) that errored.
    pub operation_errors: u64,
}

/// Figures recomputable from the committed chain alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub height: u64,
    pub tip_hash: String,
    pub tx_count: usize,
    pub records: BTreeMap<String, u64>,
    pub booking_status: BTreeMap<String, u64>,
    pub overbooking_violations: usize,
    pub total_captured: Money,
    pub total_refunded: Money,
}

impl ChainSummary {
    pub fn of(chain: &Chain) -> Result<Self, SimError> {
        let projections = ServiceProjections::rebuild(chain)?;
        Ok(Self::from_parts(chain, &projections))
    }

    pub(crate) fn from_parts(chain: &Chain, p: &ServiceProjections) -> Self {
        let mut records = BTreeMap::new();
        for block in chain.blocks() {
            for tx in &block.transactions {
                *records.entry(tx.kind().to_string()).or_default() += 1;
            }
        }
        let mut booking_status = BTreeMap::new();
        for b in p.booking.state.bookings.values() {
            *booking_status.entry(status_name(b.status)).or_default() += 1;
        }
        ChainSummary {
            height: chain.height(),
            tip_hash: chain.tip_hash().to_string(),
            tx_count: chain.tx_count(),
            records,
            booking_status,
            overbooking_violations: p.inventory.state.capacity_violations.len(),
            total_captured: p.payment.state.total_captured,
            total_refunded: p.payment.state.total_refunded,
        }
    }

    pub fn confirmed(&self) -> u64 {
        self.booking_status
            .get(status_name(BookingStatus::Confirmed).as_str())
            .copied()
            .unwrap_or(0)
    }
}

fn status_name(s: BookingStatus) -> String {
    format!("{s:?}")
}

/// Recomputes the chain figures of a run from its persisted log.
pub fn replay(log: &Path) -> Result<ChainSummary, SimError> {
    ChainSummary::of(&load(log)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub held: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    pub ticks: u64,
    pub submitted_txs: u64,
    pub committed_txs: u64,
    pub expired_txs: u64,
    /// Committed over submitted transactions; 1.0 in baseline mode.
    pub committed_fraction: f64,
    pub stall_ticks: u64,
    pub aborted_rounds: u64,
    pub workload: WorkloadCounts,
    /// Cross-service field disagreements at the end of the run.
    pub divergence: u64,
    pub divergent_pnrs: usize,
    pub messages_dropped: u64,
    pub overbooking_violations: usize,
    pub safety_violations: usize,
    pub rejection_purity_violations: usize,
    /// Mean ticks from booking request to committed ticket.
    pub mean_cycle_ticks: f64,
    /// Scripted manual approval delay the baseline adds per booking.
    pub manual_approval_ticks: u64,
    pub tamper: ProbeSummary,
    pub node_uptime: Vec<f64>,
    pub chain: ChainSummary,
    pub invariants: Vec<InvariantCheck>,
}

impl MetricsReport {
    pub fn passed(&self) -> bool {
        self.invariants.iter().all(|i| i.held)
    }

    /// First failed invariant as an error.
    pub fn check(&self) -> Result<(), SimError> {
        match self.invariants.iter().find(|i| !i.held) {
            Some(i) => Err(SimError::InvariantViolation(i.name.clone())),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub ledger_divergence: u64,
    pub baseline_divergence: u64,
    /// `(baseline - ledger) / baseline` in percent; absent when the baseline
    /// shows no divergence.
    pub reduction_pct: Option<f64>,
    pub ledger: MetricsReport,
    pub baseline: MetricsReport,
}

impl Comparison {
    pub fn new(ledger: MetricsReport, baseline: MetricsReport) -> Self {
        let (l, b) = (ledger.divergence, baseline.divergence);
        Comparison {
            scenario: ledger.scenario.clone(),
            ledger_divergence: l,
            baseline_divergence: b,
            reduction_pct: relative_reduction(l, b),
            ledger,
            baseline,
        }
    }
}

pub fn relative_reduction(ledger: u64, baseline: u64) -> Option<f64> {
    (baseline > 0).then(|| (baseline as f64 - ledger as f64) / baseline as f64 * 100.0)
}
