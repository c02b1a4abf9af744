use serde::{Deserialize, Serialize};

/// Liveness summary of a simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityReport {
    pub ticks: u64,
    pub submitted: u64,
    pub committed: u64,
    pub expired: u64,
    pub pending: u64,
    /// `committed / submitted`, or 1.0 when nothing was submitted.
    pub committed_fraction: f64,
    /// Ticks with outstanding work and no quorum or no recent progress.
    pub stall_ticks: u64,
    pub dropped_messages: u64,
    pub aborted_rounds: u64,
    pub height: u64,
    /// Fraction of ticks each node was up, by node index.
    pub node_uptime: Vec<f64>,
}
