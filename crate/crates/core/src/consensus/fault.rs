use serde::{Deserialize, Serialize};

use super::message::MessageKind;

/// A scripted disturbance applied by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Fault {
    Crash {
        node: usize,
        at: u64,
    },
    Restart {
        node: usize,
        at: u64,
    },
    /// Discards messages matching the pattern.
    Drop(MessageMatch),
    /// Cuts every link between `group` and the remaining nodes for `from ≤ t < to`.
    Partition {
        group: Vec<usize>,
        from: u64,
        to: u64,
    },
}

impl Fault {
    pub(crate) fn nodes(&self) -> Vec<usize> {
        match self {
            Fault::Crash { node, .. } | Fault::Restart { node, .. } => vec![*node],
            Fault::Drop(m) => m.from.into_iter().chain(m.to).collect(),
            Fault::Partition { group, .. } => group.clone(),
        }
    }

    /// First tick at which the fault has any effect.
    pub(crate) fn start(&self) -> u64 {
        match self {
            Fault::Crash { at, .. } | Fault::Restart { at, .. } => *at,
            Fault::Drop(m) => m.after.unwrap_or(0),
            Fault::Partition { from, .. } => *from,
        }
    }
}

/// Pattern over in-flight messages. Unset fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MessageMatch {
    #[serde(default)]
    pub kind: Option<MessageKind>,
    #[serde(default)]
    pub from: Option<usize>,
    #[serde(default)]
    pub to: Option<usize>,
    #[serde(default)]
    pub height: Option<u64>,
    /// Only at or after this tick.
    #[serde(default)]
    pub after: Option<u64>,
    /// Only before this tick.
    #[serde(default)]
    pub before: Option<u64>,
    /// Stop after this many drops; unlimited when unset.
    #[serde(default)]
    pub count: Option<u32>,
    /// Drop each matching message with this probability (seeded); 1.0 when unset.
    #[serde(default)]
    pub probability: Option<f64>,
}

impl MessageMatch {
    pub(crate) fn matches(
        &self,
        kind: MessageKind,
        from: usize,
        to: usize,
        height: u64,
        now: u64,
    ) -> bool {
        self.kind.is_none_or(|k| k == kind)
            && self.from.is_none_or(|f| f == from)
            && self.to.is_none_or(|t| t == to)
            && self.height.is_none_or(|h| h == height)
            && self.after.is_none_or(|a| now >= a)
            && self.before.is_none_or(|b| now < b)
    }
}
