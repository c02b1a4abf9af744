use serde::{Deserialize, Serialize};

use super::engine::{Action, ContractInstance, FailureReason, InstanceStatus};
use super::ContractError;
use crate::ledger::{TransactionRecord, TxKind, TxPayload};

/// User-facing text of every rejected contract.
pub const REJECTION_MESSAGE: &str = "Conditions not met for contract execution";

/// Position of a committed transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommittedRef {
    pub tx_id: String,
    pub kind: TxKind,
    pub height: u64,
    pub block_hash: String,
}

/// A consensus round that did not commit everything submitted to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitAborted {
    pub height: u64,
    /// Transactions that did commit before the abort.
    pub committed: Vec<CommittedRef>,
}

/// The ledger as seen by settlement: sign records, then commit them.
pub trait LedgerHandle {
    fn prepare(&mut self, payload: TxPayload) -> Result<TransactionRecord, ContractError>;
    /// Submits and waits for commitment, in order.
    fn commit(&mut self, txs: &[TransactionRecord]) -> Result<Vec<CommittedRef>, CommitAborted>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotificationReceipt {
    pub id: u64,
    pub recipient: String,
    pub message: String,
    pub instance_id: String,
}

pub trait Notifier {
    fn notify(&mut self, recipient: &str, message: &str, instance_id: &str) -> NotificationReceipt;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettlementReport {
    pub instance_id: String,
    pub status: InstanceStatus,
    pub committed: Vec<CommittedRef>,
    pub notifications: Vec<NotificationReceipt>,
    /// Commit attempts beyond the first.
    pub retries: u32,
}

impl SettlementReport {
    pub fn committed_kind(&self, kind: TxKind) -> Option<&CommittedRef> {
        self.committed.iter().find(|c| c.kind == kind)
    }
}

/// Writes the ledger effects of an executed instance, then notifies.
///
/// A rejected instance produces exactly one user notification and no ledger
/// writes. A commit abort is retried once with the same signed records, so a
/// late commit of the first attempt cannot duplicate.
pub fn settle(
    instance: &mut ContractInstance,
    actions: &[Action],
    ledger: &mut dyn LedgerHandle,
    notifier: &mut dyn Notifier,
) -> Result<SettlementReport, ContractError> {
    let mut report = SettlementReport {
        instance_id: instance.instance_id.clone(),
        status: instance.status.clone(),
        committed: Vec::new(),
        notifications: Vec::new(),
        retries: 0,
    };
    match instance.status {
        InstanceStatus::Rejected { .. } => {
            report.notifications.push(notifier.notify(
                &instance.recipient(),
                REJECTION_MESSAGE,
                &instance.instance_id,
            ));
            return Ok(report);
        }
        InstanceStatus::Executed => {}
        _ => return Err(ContractError::NotExecuted),
    }

    let mut pending = Vec::new();
    for payload in actions.iter().filter_map(Action::ledger_payload) {
        pending.push(ledger.prepare(payload)?);
    }
    let mut attempts: u32 = 0;
    while !pending.is_empty() {
        attempts += 1;
        match ledger.commit(&pending) {
            Ok(refs) => {
                report.committed.extend(refs);
                pending.clear();
            }
            Err(aborted) => {
                let done: Vec<&str> = aborted.committed.iter().map(|c| c.tx_id.as_str()).collect();
                pending.retain(|t| !done.contains(&t.tx_id.as_str()));
                report.committed.extend(aborted.committed);
                if attempts == 2 {
                    instance.reject(vec![FailureReason::CommitAborted]);
                    report.status = instance.status.clone();
                    report.retries = 1;
                    let note = notifier.notify(
                        &instance.recipient(),
                        REJECTION_MESSAGE,
                        &instance.instance_id,
                    );
                    report.notifications.push(note);
                    return Ok(report);
                }
            }
        }
    }
    report.retries = attempts.saturating_sub(1);

    for action in actions {
        let note = match action {
            Action::NotifyParties { parties, message } => {
                notifier.notify(&parties.join(","), message, &instance.instance_id)
            }
            Action::NotifyUser { user, message } => {
                notifier.notify(user, message, &instance.instance_id)
            }
            _ => continue,
        };
        report.notifications.push(note);
    }
    Ok(report)
}
