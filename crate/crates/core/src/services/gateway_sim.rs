use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::money::Money;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayOutcome {
    Approve,
    Decline,
    Timeout,
}

/// Scripted stand-in for an external card processor.
///
/// Each authorize or capture call consumes the next scripted outcome; once
/// the script runs out every call is approved. A capture that already
/// succeeded for a payment id is answered from memory.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PaymentGateway {
    script: VecDeque<GatewayOutcome>,
    captured: BTreeMap<String, (String, Money)>,
    /// Latest approval state per pnr.
    latest: BTreeMap<String, bool>,
    pub calls: u64,
}

impl PaymentGateway {
    pub fn new(script: impl IntoIterator<Item = GatewayOutcome>) -> Self {
        PaymentGateway {
            script: script.into_iter().collect(),
            ..Default::default()
        }
    }

    fn next(&mut self) -> GatewayOutcome {
        self.calls += 1;
        self.script.pop_front().unwrap_or(GatewayOutcome::Approve)
    }

    pub fn authorize(&mut self, pnr: &str, _amount: Money) -> GatewayOutcome {
        let outcome = self.next();
        self.latest
            .insert(pnr.to_string(), outcome == GatewayOutcome::Approve);
        outcome
    }

    pub fn capture(&mut self, payment_id: &str, pnr: &str, amount: Money) -> GatewayOutcome {
        if self.captured.contains_key(payment_id) {
            return GatewayOutcome::Approve;
        }
        let outcome = self.next();
        match outcome {
            GatewayOutcome::Approve => {
                self.captured
                    .insert(payment_id.to_string(), (pnr.to_string(), amount));
                self.latest.insert(pnr.to_string(), true);
            }
            GatewayOutcome::Decline => {
                self.latest.insert(pnr.to_string(), false);
            }
            GatewayOutcome::Timeout => {}
        }
        outcome
    }

    pub fn approved(&self, pnr: &str) -> bool {
        self.latest.get(pnr).copied().unwrap_or(false)
    }
}
