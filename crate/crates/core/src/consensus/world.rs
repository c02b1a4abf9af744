use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fault::{Fault, MessageMatch};
use super::message::{ConsensusMessage, MessageBody};
use super::node::{NodeState, RejectReason};
use super::report::AvailabilityReport;
use super::{ConsensusError, QuorumConfig};
use crate::crypto::{Identity, Keyring, Membership};
use crate::ledger::{Block, Chain, CommitGate, TransactionRecord, Vote};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TxStatus {
    Pending,
    Committed {
        height: u64,
        block_hash: String,
    },
    /// Will never commit: withdrawn or rejected at block construction.
    Expired {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyViolation {
    pub height: u64,
    pub node: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum WorldEvent {
    RoundStarted {
        tick: u64,
        height: u64,
        ballot: u64,
        leader: usize,
    },
    LeaderCrashed {
        tick: u64,
        height: u64,
        ballot: u64,
        leader: usize,
    },
    Aborted {
        tick: u64,
        height: u64,
        ballot: u64,
        reason: String,
    },
    Rejected {
        tick: u64,
        node: usize,
        height: u64,
        reason: RejectReason,
    },
    Committed {
        tick: u64,
        height: u64,
        block_hash: String,
        txs: usize,
    },
    Expired {
        tick: u64,
        tx_id: String,
        reason: String,
    },
    Crashed {
        tick: u64,
        node: usize,
    },
    Restarted {
        tick: u64,
        node: usize,
        synced_to: u64,
    },
    Violation {
        tick: u64,
        violation: SafetyViolation,
    },
}

/// One vote as seen by the tally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteRecord {
    pub height: u64,
    pub block_hash: String,
    pub node: Identity,
    pub accept: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TallyOutcome {
    Committed,
    Pending,
    Aborted,
}

/// Counts the first vote of each node. Commits at `quorum` accepts, aborts
/// once more than `n - quorum` nodes have rejected.
pub fn tally(
    n_nodes: usize,
    quorum: usize,
    votes: &[VoteRecord],
) -> Result<TallyOutcome, ConsensusError> {
    let Some(first) = votes.first() else {
        return Ok(TallyOutcome::Pending);
    };
    if votes
        .iter()
        .any(|v| v.height != first.height || v.block_hash != first.block_hash)
    {
        return Err(ConsensusError::MixedBlockHash {
            height: first.height,
        });
    }
    let mut seen = HashSet::new();
    let (mut accepts, mut rejects) = (0, 0);
    for v in votes {
        if seen.insert(&v.node) {
            if v.accept {
                accepts += 1;
            } else {
                rejects += 1;
            }
        }
    }
    Ok(if accepts >= quorum {
        TallyOutcome::Committed
    } else if rejects > n_nodes.saturating_sub(quorum) {
        TallyOutcome::Aborted
    } else {
        TallyOutcome::Pending
    })
}

#[derive(Debug, Clone)]
struct Envelope {
    deliver_at: u64,
    from: usize,
    to: usize,
    msg: ConsensusMessage,
}

#[derive(Debug, Clone)]
enum Phase {
    Preparing {
        promises: BTreeMap<usize, Option<(u64, Block)>>,
        candidate: Option<Block>,
    },
    Proposing {
        block: Block,
        votes: BTreeMap<usize, Vote>,
        rejects: BTreeSet<usize>,
    },
}

#[derive(Debug, Clone)]
struct Round {
    height: u64,
    ballot: u64,
    leader: usize,
    started_at: u64,
    phase: Phase,
    /// Transactions taken from the mempool for this round.
    taken: Vec<TransactionRecord>,
}

#[derive(Debug, Clone)]
struct DropRule {
    pattern: MessageMatch,
    dropped: u32,
}

/// A simulated validator cluster on a shared logical clock.
#[derive(Debug, Clone)]
pub struct ClusterWorld {
    config: QuorumConfig,
    keys: Keyring,
    members: Membership,
    nodes: Vec<NodeState>,
    clock: u64,
    in_flight: VecDeque<Envelope>,
    scheduled: Vec<Fault>,
    drop_rules: Vec<DropRule>,
    partitions: Vec<(BTreeSet<usize>, u64, u64)>,
    rng: ChaCha8Rng,
    mempool: VecDeque<TransactionRecord>,
    in_mempool: HashSet<String>,
    statuses: HashMap<String, TxStatus>,
    round: Option<Round>,
    /// Next unused ballot per height.
    ballots: BTreeMap<u64, u64>,
    decided: BTreeMap<u64, String>,
    violations: Vec<SafetyViolation>,
    events: Vec<WorldEvent>,
    last_progress: u64,
    stall_ticks: u64,
    dropped: u64,
    aborted: u64,
    committed_txs: u64,
    expired_txs: u64,
}

impl ClusterWorld {
    /// Builds `n_nodes` empty replicas. Node keys are added to `keys`, which
    /// must already hold every transaction author.
    pub fn new(config: QuorumConfig, seed: u64, mut keys: Keyring) -> Result<Self, ConsensusError> {
        config.validate()?;
        let nodes: Vec<NodeState> = (0..config.n_nodes).map(NodeState::new).collect();
        let ids: Vec<Identity> = nodes.iter().map(|n| n.id.clone()).collect();
        for id in &ids {
            keys.register(id);
        }
        let members = keys.membership(&ids, config.quorum());
        Ok(ClusterWorld {
            config,
            keys,
            members,
            nodes,
            clock: 0,
            in_flight: VecDeque::new(),
            scheduled: Vec::new(),
            drop_rules: Vec::new(),
            partitions: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            mempool: VecDeque::new(),
            in_mempool: HashSet::new(),
            statuses: HashMap::new(),
            round: None,
            ballots: BTreeMap::new(),
            decided: BTreeMap::new(),
            violations: Vec::new(),
            events: Vec::new(),
            last_progress: 0,
            stall_ticks: 0,
            dropped: 0,
            aborted: 0,
            committed_txs: 0,
            expired_txs: 0,
        })
    }

    pub fn config(&self) -> &QuorumConfig {
        &self.config
    }

    pub fn members(&self) -> &Membership {
        &self.members
    }

    pub fn keys(&self) -> &Keyring {
        &self.keys
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> Option<&NodeState> {
        self.nodes.get(index)
    }

    pub fn events(&self) -> &[WorldEvent] {
        &self.events
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn tx_status(&self, tx_id: &str) -> Option<&TxStatus> {
        self.statuses.get(tx_id)
    }

    /// Decided block hash per height, as first observed anywhere.
    pub fn decided(&self) -> &BTreeMap<u64, String> {
        &self.decided
    }

    pub fn violations(&self) -> &[SafetyViolation] {
        &self.violations
    }

    /// Messages not yet delivered, in delivery order.
    pub fn in_flight(&self) -> impl Iterator<Item = (usize, usize, &ConsensusMessage)> {
        self.in_flight.iter().map(|e| (e.from, e.to, &e.msg))
    }

    pub fn leader_for(&self, height: u64, ballot: u64) -> usize {
        let slot = (height.saturating_sub(1) / self.config.leader_rotation).wrapping_add(ballot);
        (slot % self.config.n_nodes as u64) as usize
    }

    /// Next height to decide: one above the highest tip among up nodes.
    pub fn next_height(&self) -> u64 {
        self.nodes
            .iter()
            .filter(|n| n.is_up())
            .map(|n| n.height())
            .max()
            .unwrap_or(0)
            + 1
    }

    /// Next unused ballot at `height`.
    pub fn next_ballot(&self, height: u64) -> u64 {
        self.ballots.get(&height).copied().unwrap_or(0)
    }

    pub fn round_active(&self) -> bool {
        self.round.is_some()
    }

    /// Longest chain among up nodes (lowest index on ties), falling back to
    /// any node when all are down.
    pub fn canonical_chain(&self) -> &Chain {
        let pick = |up_only: bool| {
            self.nodes.iter().filter(|n| !up_only || n.is_up()).fold(
                None::<&NodeState>,
                |best, n| match best {
                    Some(b) if b.height() >= n.height() => Some(b),
                    _ => Some(n),
                },
            )
        };
        &pick(true)
            .or_else(|| pick(false))
            .expect("at least one node")
            .chain
    }

    /// Queues a signed transaction. Returns `false` if it is already queued
    /// or committed; an expired transaction is queued again.
    pub fn submit(&mut self, tx: TransactionRecord) -> bool {
        match self.statuses.get(&tx.tx_id) {
            None => {}
            Some(TxStatus::Expired { .. }) if !self.decided_tx(&tx.tx_id) => self.expired_txs -= 1,
            Some(_) => return false,
        }
        self.statuses.insert(tx.tx_id.clone(), TxStatus::Pending);
        self.in_mempool.insert(tx.tx_id.clone());
        self.mempool.push_back(tx);
        true
    }

    /// Removes a still-queued transaction so it can never commit.
    pub fn withdraw(&mut self, tx_id: &str) -> bool {
        if !self.in_mempool.contains(tx_id) || self.round_holds(tx_id) {
            return false;
        }
        self.mempool.retain(|t| t.tx_id != tx_id);
        self.in_mempool.remove(tx_id);
        self.expire(tx_id.to_string(), "withdrawn".into());
        true
    }

    fn decided_tx(&self, tx_id: &str) -> bool {
        self.canonical_chain().contains_tx(tx_id)
    }

    fn round_holds(&self, tx_id: &str) -> bool {
        self.nodes.iter().any(|n| {
            n.accepted
                .values()
                .any(|(_, b)| b.transactions.iter().any(|t| t.tx_id == tx_id))
        })
    }

    pub fn inject_fault(&mut self, fault: Fault) -> Result<(), ConsensusError> {
        if let Some(&bad) = fault.nodes().iter().find(|&&i| i >= self.config.n_nodes) {
            return Err(ConsensusError::UnknownNode(bad));
        }
        match fault {
            Fault::Crash { at, .. } | Fault::Restart { at, .. } => {
                if at <= self.clock {
                    return Err(ConsensusError::FaultInPast {
                        at,
                        now: self.clock,
                    });
                }
                let pos = self.scheduled.partition_point(|f| f.start() <= at);
                self.scheduled.insert(pos, fault);
            }
            Fault::Drop(pattern) => self.drop_rules.push(DropRule {
                pattern,
                dropped: 0,
            }),
            Fault::Partition { group, from, to } => {
                self.partitions
                    .push((group.into_iter().collect(), from, to))
            }
        }
        Ok(())
    }

    /// Starts a round at the next height with a caller-built block.
    pub fn propose_block(&mut self, leader: usize, block: Block) -> Result<(), ConsensusError> {
        if leader >= self.nodes.len() {
            return Err(ConsensusError::UnknownNode(leader));
        }
        let height = self.next_height();
        if self.round.is_some() {
            return Err(ConsensusError::RoundInProgress(height));
        }
        let ballot = self.next_ballot(height);
        let expected = self.leader_for(height, ballot);
        if expected != leader {
            return Err(ConsensusError::NotLeader {
                expected,
                got: leader,
            });
        }
        if !self.nodes[leader].is_up() {
            return Err(ConsensusError::LeaderCrashed(leader));
        }
        self.ballots.insert(height, ballot + 1);
        self.sync_leader(leader);
        self.begin(height, ballot, leader, Some(block), Vec::new());
        Ok(())
    }

    /// Advances the clock by one tick.
    pub fn step(&mut self) {
        self.clock += 1;
        self.apply_scheduled();
        self.deliver_due();
        self.drive();
        self.account();
    }

    pub fn run(&mut self, ticks: u64) {
        for _ in 0..ticks {
            self.step();
        }
    }

    /// Steps until nothing is queued or in flight. Returns `false` if
    /// `max_ticks` elapsed first.
    pub fn run_until_idle(&mut self, max_ticks: u64) -> bool {
        for _ in 0..max_ticks {
            if self.is_idle() {
                return true;
            }
            self.step();
        }
        self.is_idle()
    }

    pub fn is_idle(&self) -> bool {
        self.mempool.is_empty()
            && self.round.is_none()
            && self.in_flight.is_empty()
            && !self.has_accepted_work()
    }

    fn has_accepted_work(&self) -> bool {
        let h = self.next_height();
        self.nodes
            .iter()
            .any(|n| n.is_up() && n.accepted.contains_key(&h))
    }

    /// Checks recorded divergences, then every pair of replicas over their
    /// common prefix.
    pub fn check_safety(&self) -> Result<(), SafetyViolation> {
        if let Some(v) = self.violations.first() {
            return Err(v.clone());
        }
        for (i, a) in self.nodes.iter().enumerate() {
            for b in &self.nodes[i + 1..] {
                for (x, y) in a.chain.blocks().iter().zip(b.chain.blocks()) {
                    if x.block_hash != y.block_hash {
                        return Err(SafetyViolation {
                            height: x.height,
                            node: b.index,
                            expected: x.block_hash.clone(),
                            found: y.block_hash.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn availability_report(&self) -> AvailabilityReport {
        let submitted = self.statuses.len() as u64;
        let pending = submitted - self.committed_txs - self.expired_txs;
        AvailabilityReport {
            ticks: self.clock,
            submitted,
            committed: self.committed_txs,
            expired: self.expired_txs,
            pending,
            committed_fraction: if submitted == 0 {
                1.0
            } else {
                self.committed_txs as f64 / submitted as f64
            },
            stall_ticks: self.stall_ticks,
            dropped_messages: self.dropped,
            aborted_rounds: self.aborted,
            height: self.decided.len() as u64,
            node_uptime: self
                .nodes
                .iter()
                .map(|n| {
                    if self.clock == 0 {
                        1.0
                    } else {
                        n.up_ticks as f64 / self.clock as f64
                    }
                })
                .collect(),
        }
    }

    fn apply_scheduled(&mut self) {
        while self
            .scheduled
            .first()
            .is_some_and(|f| f.start() <= self.clock)
        {
            match self.scheduled.remove(0) {
                Fault::Crash { node, .. } => {
                    if self.nodes[node].is_up() {
                        self.nodes[node].status = super::NodeStatus::Crashed;
                        self.events.push(WorldEvent::Crashed {
                            tick: self.clock,
                            node,
                        });
                    }
                }
                Fault::Restart { node, .. } => self.restart(node),
                _ => {}
            }
        }
    }

    /// Rejoins `node` after a full, verified chain copy from the most
    /// advanced up peer.
    fn restart(&mut self, node: usize) {
        if self.nodes[node].is_up() {
            return;
        }
        self.nodes[node].status = super::NodeStatus::Up;
        let peer = self
            .nodes
            .iter()
            .filter(|n| n.is_up() && n.index != node)
            .fold(None::<&NodeState>, |best, n| match best {
                Some(b) if b.height() >= n.height() => Some(b),
                _ => Some(n),
            })
            .map(|n| n.index);
        if let Some(p) = peer {
            if self.nodes[p].height() > self.nodes[node].height() {
                let blocks = self.nodes[p].chain.blocks().to_vec();
                self.check_prefix(node, &blocks);
                if self.nodes[node].install(blocks, &self.members).is_err() {
                    // Keep the local copy; ordinary catch-up will retry.
                }
            }
        }
        let synced_to = self.nodes[node].height();
        self.events.push(WorldEvent::Restarted {
            tick: self.clock,
            node,
            synced_to,
        });
    }

    fn check_prefix(&mut self, node: usize, blocks: &[Block]) {
        let local: Vec<(u64, String)> = self.nodes[node]
            .chain
            .blocks()
            .iter()
            .map(|b| (b.height, b.block_hash.clone()))
            .collect();
        for ((height, hash), other) in local.into_iter().zip(blocks) {
            if hash != other.block_hash {
                self.violation(SafetyViolation {
                    height,
                    node,
                    expected: other.block_hash.clone(),
                    found: hash,
                });
            }
        }
    }

    fn deliver_due(&mut self) {
        while self
            .in_flight
            .front()
            .is_some_and(|e| e.deliver_at <= self.clock)
        {
            let env = self.in_flight.pop_front().expect("front checked");
            if self.should_drop(&env) {
                self.dropped += 1;
                continue;
            }
            if !env.msg.verify(&self.members) {
                self.dropped += 1;
                continue;
            }
            self.handle(env.from, env.to, env.msg);
        }
    }

    fn should_drop(&mut self, env: &Envelope) -> bool {
        if !self.nodes[env.to].is_up() {
            return true;
        }
        let now = self.clock;
        let cut = self.partitions.iter().any(|(group, from, to)| {
            now >= *from && now < *to && group.contains(&env.from) != group.contains(&env.to)
        });
        if cut {
            return true;
        }
        let kind = env.msg.kind();
        for rule in &mut self.drop_rules {
            let p = &rule.pattern;
            if rule.pattern.count.is_some_and(|c| rule.dropped >= c)
                || !p.matches(kind, env.from, env.to, env.msg.height, now)
            {
                continue;
            }
            let hit = match p.probability {
                Some(prob) if prob < 1.0 => self.rng.random_range(0.0..1.0) < prob,
                _ => true,
            };
            if hit {
                rule.dropped += 1;
                return true;
            }
        }
        false
    }

    fn send(&mut self, from: usize, to: usize, height: u64, ballot: u64, body: MessageBody) {
        let msg = ConsensusMessage::signed(&self.keys, &self.nodes[from].id, height, ballot, body)
            .expect("node keys are registered");
        self.in_flight.push_back(Envelope {
            deliver_at: self.clock + self.config.latency,
            from,
            to,
            msg,
        });
    }

    fn broadcast(&mut self, from: usize, height: u64, ballot: u64, body: MessageBody) {
        let targets: Vec<usize> = self
            .nodes
            .iter()
            .filter(|n| n.is_up() && n.index != from)
            .map(|n| n.index)
            .collect();
        for to in targets {
            self.send(from, to, height, ballot, body.clone());
        }
    }

    fn handle(&mut self, from: usize, to: usize, msg: ConsensusMessage) {
        let (h, b) = (msg.height, msg.ballot);
        match msg.body {
            MessageBody::Prepare => {
                if self.answer_decided(to, from, h, b) {
                    return;
                }
                self.catch_up(to, from, h - 1);
                let node = &mut self.nodes[to];
                if node.height() + 1 != h || node.promised(h).is_some_and(|p| p >= b) {
                    return;
                }
                node.promised.insert(h, b);
                let accepted = node.accepted(h).cloned();
                self.send(to, from, h, b, MessageBody::Promise { accepted });
            }
            MessageBody::Promise { accepted } => {
                let Some(round) = self.round.as_mut() else {
                    return;
                };
                if round.height != h || round.ballot != b || round.leader != to {
                    return;
                }
                let Phase::Preparing { promises, .. } = &mut round.phase else {
                    return;
                };
                promises.insert(from, accepted);
                if promises.len() >= self.config.quorum() {
                    self.finish_prepare();
                }
            }
            MessageBody::Propose { block } => {
                if self.answer_decided(to, from, h, b) {
                    return;
                }
                self.catch_up(to, from, h - 1);
                let verdict = {
                    let node = &self.nodes[to];
                    if node.promised(h).is_some_and(|p| p > b) {
                        Err(RejectReason::StaleBallot)
                    } else {
                        node.validate_proposal(&block, &self.members)
                    }
                };
                let accept = verdict.is_ok();
                let hash = block.block_hash.clone();
                if accept {
                    let node = &mut self.nodes[to];
                    node.promised.insert(h, b);
                    node.accepted.insert(h, (b, block));
                }
                let reason = verdict.err();
                if let Some(r) = &reason {
                    self.events.push(WorldEvent::Rejected {
                        tick: self.clock,
                        node: to,
                        height: h,
                        reason: r.clone(),
                    });
                }
                let vote = Vote::sign(&self.keys, &self.nodes[to].id, h, &hash, accept)
                    .expect("node keys are registered");
                self.send(
                    to,
                    from,
                    h,
                    b,
                    MessageBody::Vote {
                        vote,
                        block_hash: hash,
                        reason,
                    },
                );
            }
            MessageBody::Vote {
                vote, block_hash, ..
            } => {
                let Some(round) = self.round.as_mut() else {
                    return;
                };
                if round.height != h || round.ballot != b || round.leader != to {
                    return;
                }
                let Phase::Proposing {
                    block,
                    votes,
                    rejects,
                } = &mut round.phase
                else {
                    return;
                };
                if block.block_hash != block_hash {
                    return;
                }
                if vote.accept {
                    rejects.remove(&from);
                    votes.entry(from).or_insert(vote);
                } else if !votes.contains_key(&from) {
                    rejects.insert(from);
                }
                let (accepts, rejected) = (votes.len(), rejects.len());
                if accepts >= self.config.quorum() {
                    self.commit_round();
                } else if rejected > self.config.n_nodes - self.config.quorum() {
                    self.abort("rejected by validators");
                }
            }
            MessageBody::Commit { block } => self.learn(to, from, block),
        }
    }

    /// Replies with a commit when `node` already holds `height`.
    fn answer_decided(&mut self, node: usize, to: usize, height: u64, ballot: u64) -> bool {
        match self.nodes[node].chain.block(height) {
            Some(block) => {
                let block = block.clone();
                self.send(node, to, height, ballot, MessageBody::Commit { block });
                true
            }
            None => false,
        }
    }

    /// Copies certified blocks up to `upto` from `from` into `node`.
    fn catch_up(&mut self, node: usize, from: usize, upto: u64) {
        if node == from || !self.nodes[from].is_up() {
            return;
        }
        let top = upto.min(self.nodes[from].height());
        while self.nodes[node].height() < top {
            let h = self.nodes[node].height() + 1;
            let block = self.nodes[from]
                .chain
                .block(h)
                .expect("height below peer tip")
                .clone();
            if !self.append(node, block) {
                return;
            }
        }
    }

    fn sync_leader(&mut self, leader: usize) {
        let best = self
            .nodes
            .iter()
            .filter(|n| n.is_up())
            .max_by_key(|n| (n.height(), std::cmp::Reverse(n.index)))
            .map(|n| n.index);
        if let Some(best) = best {
            self.catch_up(leader, best, u64::MAX);
        }
    }

    fn learn(&mut self, node: usize, from: usize, block: Block) {
        let h = block.height;
        if let Some(mine) = self.nodes[node].chain.block(h) {
            if mine.block_hash != block.block_hash {
                let found = mine.block_hash.clone();
                self.violation(SafetyViolation {
                    height: h,
                    node,
                    expected: block.block_hash,
                    found,
                });
            }
            return;
        }
        self.catch_up(node, from, h - 1);
        if self.nodes[node].height() + 1 != h || !self.append(node, block) {
            return;
        }
        if self
            .round
            .as_ref()
            .is_some_and(|r| r.height == h && r.leader == node)
        {
            let round = self.round.take().expect("checked");
            self.requeue(round.taken);
        }
    }

    /// Appends a certified block to one replica and records the decision.
    fn append(&mut self, node: usize, block: Block) -> bool {
        let (height, hash) = (block.height, block.block_hash.clone());
        let ids: Vec<String> = block.transactions.iter().map(|t| t.tx_id.clone()).collect();
        if self.nodes[node].append(block, &self.members).is_err() {
            return false;
        }
        match self.decided.get(&height) {
            Some(known) if *known != hash => {
                let expected = known.clone();
                self.violation(SafetyViolation {
                    height,
                    node,
                    expected,
                    found: hash,
                });
            }
            Some(_) => {}
            None => {
                self.decided.insert(height, hash.clone());
                self.last_progress = self.clock;
                for id in &ids {
                    if self.in_mempool.remove(id) {
                        self.mempool.retain(|t| &t.tx_id != id);
                    }
                    match self.statuses.get_mut(id) {
                        Some(status @ TxStatus::Pending) => {
                            *status = TxStatus::Committed {
                                height,
                                block_hash: hash.clone(),
                            };
                            self.committed_txs += 1;
                        }
                        Some(status @ TxStatus::Expired { .. }) => {
                            *status = TxStatus::Committed {
                                height,
                                block_hash: hash.clone(),
                            };
                            self.committed_txs += 1;
                            self.expired_txs -= 1;
                        }
                        _ => {}
                    }
                }
                self.events.push(WorldEvent::Committed {
                    tick: self.clock,
                    height,
                    block_hash: hash,
                    txs: ids.len(),
                });
            }
        }
        true
    }

    fn violation(&mut self, violation: SafetyViolation) {
        self.events.push(WorldEvent::Violation {
            tick: self.clock,
            violation: violation.clone(),
        });
        self.violations.push(violation);
    }

    fn expire(&mut self, tx_id: String, reason: String) {
        if let Some(status @ TxStatus::Pending) = self.statuses.get_mut(&tx_id) {
            *status = TxStatus::Expired {
                reason: reason.clone(),
            };
            self.expired_txs += 1;
            self.events.push(WorldEvent::Expired {
                tick: self.clock,
                tx_id,
                reason,
            });
        }
    }

    /// Returns still-pending transactions to the head of the mempool.
    fn requeue(&mut self, taken: Vec<TransactionRecord>) {
        for tx in taken.into_iter().rev() {
            if matches!(self.statuses.get(&tx.tx_id), Some(TxStatus::Pending))
                && self.in_mempool.insert(tx.tx_id.clone())
            {
                self.mempool.push_front(tx);
            }
        }
    }

    /// Pacemaker: abandons a dead round or starts the next one.
    fn drive(&mut self) {
        if let Some(round) = &self.round {
            let (h, b, leader) = (round.height, round.ballot, round.leader);
            if !self.nodes[leader].is_up() {
                self.events.push(WorldEvent::LeaderCrashed {
                    tick: self.clock,
                    height: h,
                    ballot: b,
                    leader,
                });
                self.abort("leader crashed");
            } else if self.clock - round.started_at >= self.config.vote_timeout {
                self.abort("vote timeout");
            }
            return;
        }
        if !self.nodes.iter().any(|n| n.is_up())
            || (self.mempool.is_empty() && !self.has_accepted_work())
        {
            return;
        }
        let height = self.next_height();
        let ballot = self.next_ballot(height);
        let leader = self.leader_for(height, ballot);
        self.ballots.insert(height, ballot + 1);
        if !self.nodes[leader].is_up() {
            self.events.push(WorldEvent::LeaderCrashed {
                tick: self.clock,
                height,
                ballot,
                leader,
            });
            return;
        }
        self.sync_leader(leader);
        if ballot == 0 {
            if let Some((block, taken)) = self.build_block(leader, height) {
                self.begin(height, ballot, leader, Some(block), taken);
            }
        } else {
            self.begin(height, ballot, leader, None, Vec::new());
        }
    }

    fn begin(
        &mut self,
        height: u64,
        ballot: u64,
        leader: usize,
        candidate: Option<Block>,
        taken: Vec<TransactionRecord>,
    ) {
        self.events.push(WorldEvent::RoundStarted {
            tick: self.clock,
            height,
            ballot,
            leader,
        });
        let phase = match (ballot, candidate) {
            (0, Some(block)) => Phase::Proposing {
                block,
                votes: BTreeMap::new(),
                rejects: BTreeSet::new(),
            },
            (_, candidate) => Phase::Preparing {
                promises: BTreeMap::new(),
                candidate,
            },
        };
        self.round = Some(Round {
            height,
            ballot,
            leader,
            started_at: self.clock,
            phase,
            taken,
        });
        match &self.round.as_ref().expect("just set").phase {
            Phase::Proposing { block, .. } => {
                let block = block.clone();
                self.propose(block);
            }
            Phase::Preparing { .. } => {
                let node = &mut self.nodes[leader];
                node.promised.insert(height, ballot);
                let own = node.accepted(height).cloned();
                if let Some(Round {
                    phase: Phase::Preparing { promises, .. },
                    ..
                }) = self.round.as_mut()
                {
                    promises.insert(leader, own);
                }
                self.broadcast(leader, height, ballot, MessageBody::Prepare);
                if self.config.quorum() == 1 {
                    self.finish_prepare();
                }
            }
        }
    }

    /// Picks the value for a prepared ballot and proposes it.
    fn finish_prepare(&mut self) {
        let Some(round) = self.round.as_mut() else {
            return;
        };
        let Phase::Preparing {
            promises,
            candidate,
        } = &mut round.phase
        else {
            return;
        };
        let prior = promises
            .values()
            .flatten()
            .max_by_key(|(b, _)| *b)
            .map(|(_, block)| block.clone());
        let chosen = prior.or_else(|| candidate.take());
        let (leader, height) = (round.leader, round.height);
        let block = match chosen {
            Some(mut b) => {
                b.votes.clear();
                b
            }
            None => match self.build_block(leader, height) {
                Some((block, taken)) => {
                    self.round.as_mut().expect("active").taken = taken;
                    block
                }
                None => {
                    self.round = None;
                    return;
                }
            },
        };
        self.round.as_mut().expect("active").phase = Phase::Proposing {
            block: block.clone(),
            votes: BTreeMap::new(),
            rejects: BTreeSet::new(),
        };
        self.propose(block);
    }

    /// Leader accepts its own proposal and sends it to every up peer.
    fn propose(&mut self, block: Block) {
        let round = self.round.as_ref().expect("active round");
        let (h, b, leader) = (round.height, round.ballot, round.leader);
        if let Err(reason) = self.nodes[leader].validate_proposal(&block, &self.members) {
            self.abort(&format!("leader rejected own proposal: {reason}"));
            return;
        }
        let node = &mut self.nodes[leader];
        node.promised.insert(h, b);
        node.accepted.insert(h, (b, block.clone()));
        let vote = Vote::sign(&self.keys, &node.id, h, &block.block_hash, true)
            .expect("node keys are registered");
        if let Some(Round {
            phase: Phase::Proposing { votes, .. },
            ..
        }) = self.round.as_mut()
        {
            votes.insert(leader, vote);
        }
        self.broadcast(leader, h, b, MessageBody::Propose { block });
        if self.config.quorum() == 1 {
            self.commit_round();
        }
    }

    fn commit_round(&mut self) {
        let round = self.round.take().expect("active round");
        let Phase::Proposing {
            mut block, votes, ..
        } = round.phase
        else {
            unreachable!("commit while preparing")
        };
        block.votes = votes.into_values().collect();
        let leader = round.leader;
        if self.nodes[leader].height() + 1 == block.height && self.append(leader, block.clone()) {
            self.broadcast(
                leader,
                block.height,
                round.ballot,
                MessageBody::Commit { block },
            );
        }
        self.requeue(round.taken);
    }

    fn abort(&mut self, reason: &str) {
        if let Some(round) = self.round.take() {
            self.aborted += 1;
            self.events.push(WorldEvent::Aborted {
                tick: self.clock,
                height: round.height,
                ballot: round.ballot,
                reason: reason.to_string(),
            });
            self.requeue(round.taken);
        }
    }

    /// Fills a fresh block from the head of the mempool, expiring
    /// transactions the leader can never include.
    fn build_block(
        &mut self,
        leader: usize,
        height: u64,
    ) -> Option<(Block, Vec<TransactionRecord>)> {
        if self.nodes[leader].height() + 1 != height {
            return None;
        }
        let mut gate: CommitGate = self.nodes[leader].gate.clone();
        let mut taken = Vec::new();
        let mut ids = HashSet::new();
        while taken.len() < self.config.batch_size {
            let Some(tx) = self.mempool.pop_front() else {
                break;
            };
            self.in_mempool.remove(&tx.tx_id);
            if !matches!(self.statuses.get(&tx.tx_id), Some(TxStatus::Pending)) {
                continue;
            }
            let problem = if self.nodes[leader].chain.contains_tx(&tx.tx_id)
                || !ids.insert(tx.tx_id.clone())
            {
                Some("duplicate transaction".to_string())
            } else if !tx.content_hash_ok() {
                Some("transaction id does not match its content".to_string())
            } else if !tx.signature_ok(&self.members) {
                Some("bad author signature".to_string())
            } else {
                gate.check(&tx).err().map(|v| v.0)
            };
            match problem {
                Some(reason) => self.expire(tx.tx_id.clone(), reason),
                None => {
                    gate.apply(&tx);
                    taken.push(tx);
                }
            }
        }
        if taken.is_empty() {
            return None;
        }
        let node = &self.nodes[leader];
        let block = Block::assemble(
            height,
            node.chain.tip_hash().to_string(),
            taken.clone(),
            node.id.clone(),
            self.clock,
        )
        .expect("tip hash is well formed");
        Some((block, taken))
    }

    fn account(&mut self) {
        let mut up = 0;
        for n in &mut self.nodes {
            if n.is_up() {
                n.up_ticks += 1;
                up += 1;
            }
        }
        let work = !self.mempool.is_empty() || self.round.is_some() || self.has_accepted_work();
        if !work {
            self.last_progress = self.clock;
        } else if up < self.config.quorum()
            || self.clock - self.last_progress > self.config.vote_timeout
        {
            self.stall_ticks += 1;
        }
    }
}
