//! Deterministic discrete-event network simulation.
//!
//! N replicas exchange messages under configurable adversarial behaviors:
//! dropping, duplication, delay, and reordering. Every stochastic choice
//! draws from one seeded [`DetRng`] stream in a fixed order, so identical
//! (scenario, seed) pairs produce byte-identical transcripts.
//!
//! Histories record `Broadcast` and `Deliver` events per node and always
//! satisfy two invariants: every delivered message id was broadcast by some
//! node, and every broadcast is followed by its local delivery at the
//! broadcasting node. Message ids are unique per broadcast event, but several
//! envelopes (and therefore several `Deliver` events) may share one id when
//! duplication or retransmission is active — that is exactly the relaxation
//! under test.
//!
//! Virtual time is an integer event counter; delays add integer jitter.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use thiserror::Error;

use crate::antientropy::{AeError, AeNode, AeSettings};
use crate::crdt::{ReplicaId, ReplicaSet};
use crate::message::{ClientOp, Message};
use crate::reduce::{DeliveryMode, MachineState, OpMachine, ReduceError};
use crate::rng::DetRng;

pub type MsgId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("unknown replica {0}")]
    UnknownReplica(ReplicaId),
    #[error("replica {0} has crashed")]
    Crashed(ReplicaId),
    #[error("max-events bound of {0} exceeded before quiescence")]
    MaxEventsExceeded(u64),
    #[error("prepare failed: {0}")]
    Prepare(#[from] ReduceError),
    #[error("anti-entropy failure: {0}")]
    AntiEntropy(#[from] AeError),
    #[error("no message with id {0} was broadcast")]
    NoSuchMessage(MsgId),
}

/// Network behavior knobs for a run.
#[derive(Debug, Clone)]
pub struct NetworkConfig {
    pub drop_probability: f64,
    pub duplicate_probability: f64,
    pub max_duplicates: u32,
    pub delay_min: u64,
    pub delay_max: u64,
    pub reorder: bool,
    pub mode: DeliveryMode,
    pub seed: u64,
    pub fairness: bool,
    pub max_events: u64,
    /// Links that silently lose every message: the targeted-drop adversary.
    /// A dead link models a message delayed forever, so the fairness
    /// retransmission loop does not re-offer across it.
    pub dead_links: BTreeSet<(u32, u32)>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            drop_probability: 0.0,
            duplicate_probability: 0.0,
            max_duplicates: 1,
            delay_min: 0,
            delay_max: 0,
            reorder: false,
            mode: DeliveryMode::Relaxed,
            seed: 0,
            fairness: true,
            max_events: 10_000,
            dead_links: BTreeSet::new(),
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("drop-probability", self.drop_probability),
            ("duplicate-probability", self.duplicate_probability),
        ] {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(format!("{name} {p} outside [0,1]"));
            }
        }
        if self.max_duplicates < 1 {
            return Err("max-duplicates must be at least 1".into());
        }
        if self.delay_min > self.delay_max {
            return Err("delay range is inverted".into());
        }
        if self.mode == DeliveryMode::CausalAtMostOnce && self.duplicate_probability > 0.0 {
            return Err("causal at-most-once delivery forces duplicate-probability 0".into());
        }
        Ok(())
    }
}

/// A scheduled copy of a broadcast message.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub msg_id: MsgId,
    pub origin: ReplicaId,
    pub target: ReplicaId,
    /// Distinguishes duplicate copies of the same message to one target.
    pub dup_index: u32,
    pub deliver_at: u64,
    pub payload: Message,
    /// Vector timestamp, attached in causal mode.
    pub clock: Option<Vec<u64>>,
}

/// One broadcast event as recorded by the simulator.
#[derive(Debug, Clone)]
pub struct BroadcastRecord {
    pub msg_id: MsgId,
    pub origin: ReplicaId,
    pub payload: Message,
    pub clock: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Broadcast,
    Deliver,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Broadcast => write!(f, "Broadcast"),
            EventKind::Deliver => write!(f, "Deliver"),
        }
    }
}

/// One entry in a node history.
#[derive(Debug, Clone)]
pub struct Event {
    pub time: u64,
    pub kind: EventKind,
    pub msg_id: MsgId,
    pub dup_index: u32,
    pub payload: Message,
}

/// Ordered sequence of broadcast/deliver events at one replica.
#[derive(Debug, Clone, Default)]
pub struct NodeHistory {
    pub events: Vec<Event>,
}

impl NodeHistory {
    /// Payloads delivered at this node, duplicates collapsed.
    pub fn delivered_payloads(&self) -> BTreeSet<Message> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Deliver)
            .map(|e| e.payload.clone())
            .collect()
    }

    pub fn delivered_ids(&self) -> BTreeSet<MsgId> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Deliver)
            .map(|e| e.msg_id)
            .collect()
    }

    pub fn broadcast_ids(&self) -> BTreeSet<MsgId> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Broadcast)
            .map(|e| e.msg_id)
            .collect()
    }
}

/// What a single `step` delivered.
#[derive(Debug, Clone)]
pub struct DeliveryRecord {
    pub target: ReplicaId,
    pub msg_id: MsgId,
    pub dup_index: u32,
    pub payload: Message,
    /// Set when the effect was undefined and the replica crashed.
    pub crashed: bool,
}

/// Counters reported in run summaries.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimStats {
    pub broadcasts: u64,
    pub deliveries: u64,
    pub drops: u64,
    pub duplicates: u64,
    pub reoffers: u64,
    pub suppressed: u64,
}

#[derive(Debug)]
struct Node {
    machine: OpMachine,
    history: NodeHistory,
    crashed: bool,
    clock: Vec<u64>,
    delivered_ids: BTreeSet<MsgId>,
    holdback: Vec<Envelope>,
    ae: Option<AeNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct QueueKey {
    deliver_at: u64,
    msg_id: MsgId,
    dup_index: u32,
    seq: u64,
}

/// Deterministic discrete-event simulator over a set of op-based machines.
pub struct Simulator {
    config: NetworkConfig,
    members: ReplicaSet,
    rng: DetRng,
    nodes: Vec<Node>,
    queue: BinaryHeap<Reverse<(QueueKey, usize)>>,
    envelopes: Vec<Envelope>,
    broadcasts: Vec<BroadcastRecord>,
    next_msg_id: MsgId,
    next_seq: u64,
    next_dup: BTreeMap<(MsgId, u32), u32>,
    now: u64,
    events: u64,
    transcript: Vec<String>,
    stats: SimStats,
}

impl Simulator {
    /// Builds a simulator over pre-constructed machines, one per replica in
    /// index order.
    pub fn new(config: NetworkConfig, machines: Vec<OpMachine>) -> Self {
        let members = ReplicaSet::new(machines.len() as u32);
        let n = machines.len();
        let rng = DetRng::new(config.seed);
        let nodes = machines
            .into_iter()
            .map(|machine| Node {
                machine,
                history: NodeHistory::default(),
                crashed: false,
                clock: vec![0; n],
                delivered_ids: BTreeSet::new(),
                holdback: Vec::new(),
                ae: None,
            })
            .collect();
        Simulator {
            config,
            members,
            rng,
            nodes,
            queue: BinaryHeap::new(),
            envelopes: Vec::new(),
            broadcasts: Vec::new(),
            next_msg_id: 0,
            next_seq: 0,
            next_dup: BTreeMap::new(),
            now: 0,
            events: 0,
            transcript: Vec::new(),
            stats: SimStats::default(),
        }
    }

    /// Enables anti-entropy bookkeeping on every node.
    pub fn enable_anti_entropy(&mut self, settings: AeSettings) {
        for node in &mut self.nodes {
            node.ae = Some(AeNode::new(node.machine.kind(), settings.clone()));
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn stats(&self) -> SimStats {
        self.stats
    }

    pub fn members(&self) -> ReplicaSet {
        self.members
    }

    pub fn histories(&self) -> Vec<&NodeHistory> {
        self.nodes.iter().map(|n| &n.history).collect()
    }

    pub fn machine(&self, id: ReplicaId) -> &OpMachine {
        &self.nodes[id.index()].machine
    }

    pub fn ae_node(&self, id: ReplicaId) -> Option<&AeNode> {
        self.nodes[id.index()].ae.as_ref()
    }

    pub fn final_states(&self) -> Vec<MachineState> {
        self.nodes
            .iter()
            .map(|n| n.machine.state().clone())
            .collect()
    }

    pub fn live_flags(&self) -> Vec<bool> {
        self.nodes.iter().map(|n| !n.crashed).collect()
    }

    pub fn is_live(&self, id: ReplicaId) -> bool {
        !self.nodes[id.index()].crashed
    }

    pub fn transcript(&self) -> String {
        let mut out = self.transcript.join("\n");
        if !out.is_empty() {
            out.push('\n');
        }
        out
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// All broadcast records in broadcast order.
    pub fn broadcast_log(&self) -> &[BroadcastRecord] {
        &self.broadcasts
    }

    fn bump_events(&mut self) -> Result<(), SimError> {
        self.events += 1;
        if self.events > self.config.max_events {
            return Err(SimError::MaxEventsExceeded(self.config.max_events));
        }
        Ok(())
    }

    fn record(
        &mut self,
        replica: ReplicaId,
        kind: EventKind,
        msg_id: MsgId,
        dup: u32,
        payload: &Message,
    ) {
        self.transcript.push(format!(
            "{} {} {} {} {} {}",
            self.now, replica, kind, msg_id, dup, payload
        ));
        self.nodes[replica.index()].history.events.push(Event {
            time: self.now,
            kind,
            msg_id,
            dup_index: dup,
            payload: payload.clone(),
        });
    }

    /// Advances virtual time to at least `t` without delivering anything.
    pub fn advance_time(&mut self, t: u64) {
        self.now = self.now.max(t);
    }

    /// Prepares `op` at `origin` and broadcasts the resulting message.
    pub fn inject(&mut self, origin: ReplicaId, op: &ClientOp) -> Result<MsgId, SimError> {
        let node = self
            .nodes
            .get(origin.index())
            .ok_or(SimError::UnknownReplica(origin))?;
        let payload = node.machine.prepare(op)?;
        self.broadcast(origin, payload)
    }

    /// Broadcasts a payload from `origin`: appends the `Broadcast` event,
    /// delivers locally (every broadcast is followed by its own delivery),
    /// and schedules zero or more remote envelopes per the network config.
    pub fn broadcast(&mut self, origin: ReplicaId, payload: Message) -> Result<MsgId, SimError> {
        if !self.members.contains(origin) {
            return Err(SimError::UnknownReplica(origin));
        }
        if self.nodes[origin.index()].crashed {
            return Err(SimError::Crashed(origin));
        }
        self.bump_events()?;
        let msg_id = self.next_msg_id;
        self.next_msg_id += 1;
        self.stats.broadcasts += 1;

        let clock = if self.config.mode == DeliveryMode::CausalAtMostOnce {
            let node = &mut self.nodes[origin.index()];
            node.clock[origin.index()] += 1;
            Some(node.clock.clone())
        } else {
            None
        };

        self.broadcasts.push(BroadcastRecord {
            msg_id,
            origin,
            payload: payload.clone(),
            clock: clock.clone(),
        });
        self.record(origin, EventKind::Broadcast, msg_id, 0, &payload);

        // Local delivery happens synchronously so the next prepare at this
        // node sees its own update.
        self.deliver_now(origin, origin, msg_id, 0, &payload)?;

        // Remote scheduling, replicas in ascending order for determinism.
        for target in self.members.iter() {
            if target == origin {
                continue;
            }
            if self
                .config
                .dead_links
                .contains(&(origin.index() as u32, target.index() as u32))
            {
                self.stats.drops += 1;
                continue;
            }
            if self.rng.coin(self.config.drop_probability) {
                self.stats.drops += 1;
                continue;
            }
            let mut copies = 1u32;
            for _ in 1..self.config.max_duplicates {
                if self.rng.coin(self.config.duplicate_probability) {
                    copies += 1;
                }
            }
            if copies > 1 {
                self.stats.duplicates += (copies - 1) as u64;
            }
            for _ in 0..copies {
                self.schedule_copy(msg_id, origin, target, payload.clone(), clock.clone());
            }
        }
        Ok(msg_id)
    }

    fn schedule_copy(
        &mut self,
        msg_id: MsgId,
        origin: ReplicaId,
        target: ReplicaId,
        payload: Message,
        clock: Option<Vec<u64>>,
    ) {
        // With reordering off every envelope takes the minimum delay, so
        // arrival order follows broadcast order; jitter inside the delay
        // range is what lets messages overtake each other.
        let delay = if self.config.reorder {
            self.rng.range(self.config.delay_min, self.config.delay_max)
        } else {
            self.config.delay_min
        };
        let dup = self
            .next_dup
            .entry((msg_id, target.index() as u32))
            .or_insert(0);
        let dup_index = *dup;
        *dup += 1;
        let envelope = Envelope {
            msg_id,
            origin,
            target,
            dup_index,
            deliver_at: self.now + 1 + delay,
            payload,
            clock,
        };
        let key = QueueKey {
            deliver_at: envelope.deliver_at,
            msg_id,
            dup_index,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        self.envelopes.push(envelope);
        self.queue.push(Reverse((key, self.envelopes.len() - 1)));
    }

    /// Applies a payload at `target` right now, recording the Deliver event.
    /// An undefined effect marks the target crashed.
    fn deliver_now(
        &mut self,
        origin: ReplicaId,
        target: ReplicaId,
        msg_id: MsgId,
        dup_index: u32,
        payload: &Message,
    ) -> Result<DeliveryRecord, SimError> {
        self.record(target, EventKind::Deliver, msg_id, dup_index, payload);
        self.stats.deliveries += 1;
        let node = &mut self.nodes[target.index()];
        node.delivered_ids.insert(msg_id);

        let outcome: Result<(), AeError> = match (&mut node.ae, payload) {
            (Some(ae), Message::FullState { upto, state }) => {
                ae.on_receive_full_from(&mut node.machine, origin, *upto, state)
            }
            (Some(ae), Message::Interval(interval)) => ae
                .on_receive_interval(&mut node.machine, interval)
                .map(|_| ()),
            _ => node.machine.effect(payload).map_err(AeError::from),
        };
        let crashed = outcome.is_err();
        if crashed {
            // The partial effect returned no state: the replica is crashed
            // and excluded from convergence verdicts.
            node.crashed = true;
        }
        Ok(DeliveryRecord {
            target,
            msg_id,
            dup_index,
            payload: payload.clone(),
            crashed,
        })
    }

    fn causally_ready(&self, env: &Envelope) -> bool {
        let Some(ts) = &env.clock else {
            return true;
        };
        let node = &self.nodes[env.target.index()];
        let origin = env.origin.index();
        for (i, (&seen, &stamp)) in node.clock.iter().zip(ts.iter()).enumerate() {
            if i == origin {
                if stamp != seen + 1 {
                    return false;
                }
            } else if stamp > seen {
                return false;
            }
        }
        true
    }

    fn merge_clock(&mut self, target: ReplicaId, ts: &[u64]) {
        let node = &mut self.nodes[target.index()];
        for (seen, &stamp) in node.clock.iter_mut().zip(ts.iter()) {
            *seen = (*seen).max(stamp);
        }
    }

    /// Causal-mode delivery: suppress duplicates by message id, gate on the
    /// vector timestamp, park non-ready envelopes in the holdback buffer.
    fn apply_causal_delivery(
        &mut self,
        env: &Envelope,
    ) -> Result<Option<DeliveryRecord>, SimError> {
        if self.nodes[env.target.index()]
            .delivered_ids
            .contains(&env.msg_id)
        {
            self.stats.suppressed += 1;
            return Ok(None);
        }
        if !self.causally_ready(env) {
            self.nodes[env.target.index()].holdback.push(env.clone());
            return Ok(None);
        }
        self.bump_events()?;
        let record = self.deliver_now(env.origin, env.target, env.msg_id, env.dup_index, &env.payload)?;
        if let Some(ts) = env.clock.clone() {
            self.merge_clock(env.target, &ts);
        }
        self.drain_holdback(env.target)?;
        Ok(Some(record))
    }

    /// Delivers every held-back envelope that has become causally ready.
    fn drain_holdback(&mut self, target: ReplicaId) -> Result<(), SimError> {
        loop {
            if self.nodes[target.index()].crashed {
                return Ok(());
            }
            {
                let node = &mut self.nodes[target.index()];
                let delivered = node.delivered_ids.clone();
                let before = node.holdback.len();
                node.holdback.retain(|e| !delivered.contains(&e.msg_id));
                self.stats.suppressed += (before - node.holdback.len()) as u64;
            }
            let pos = {
                let node = &self.nodes[target.index()];
                node.holdback.iter().position(|e| self.causally_ready(e))
            };
            let Some(pos) = pos else {
                return Ok(());
            };
            let env = self.nodes[target.index()].holdback.remove(pos);
            self.bump_events()?;
            self.deliver_now(env.origin, env.target, env.msg_id, env.dup_index, &env.payload)?;
            if let Some(ts) = env.clock.clone() {
                self.merge_clock(env.target, &ts);
            }
        }
    }

    /// Pops the earliest scheduled envelope (ties broken by message id, then
    /// duplicate index, then scheduling order), appends the Deliver event,
    /// and invokes the target machine's effect. Returns what was delivered,
    /// or `None` when nothing remains deliverable.
    pub fn step(&mut self) -> Result<Option<DeliveryRecord>, SimError> {
        loop {
            let Some(Reverse((key, idx))) = self.queue.pop() else {
                return Ok(None);
            };
            let env = self.envelopes[idx].clone();
            self.now = self.now.max(key.deliver_at);
            if self.nodes[env.target.index()].crashed {
                self.stats.suppressed += 1;
                continue;
            }
            if env.clock.is_some() {
                match self.apply_causal_delivery(&env)? {
                    Some(record) => return Ok(Some(record)),
                    None => continue,
                }
            }
            self.bump_events()?;
            let record =
                self.deliver_now(env.origin, env.target, env.msg_id, env.dup_index, &env.payload)?;
            return Ok(Some(record));
        }
    }

    /// Processes every envelope due at or before `t`, then advances to `t`.
    pub fn run_due(&mut self, t: u64) -> Result<(), SimError> {
        loop {
            let due = self
                .queue
                .peek()
                .map(|Reverse((key, _))| key.deliver_at <= t)
                .unwrap_or(false);
            if !due {
                break;
            }
            self.step()?;
        }
        self.advance_time(t);
        Ok(())
    }

    /// Delivers one copy of a previously broadcast message to `target`
    /// immediately, bypassing the queue. This is the forcing-schedule hook
    /// used to replay externally enumerated schedules.
    pub fn force_deliver(
        &mut self,
        msg_id: MsgId,
        target: ReplicaId,
    ) -> Result<DeliveryRecord, SimError> {
        let record = self
            .broadcasts
            .iter()
            .find(|b| b.msg_id == msg_id)
            .cloned()
            .ok_or(SimError::NoSuchMessage(msg_id))?;
        if !self.members.contains(target) {
            return Err(SimError::UnknownReplica(target));
        }
        self.bump_events()?;
        let dup = self
            .next_dup
            .entry((msg_id, target.index() as u32))
            .or_insert(0);
        let dup_index = *dup;
        *dup += 1;
        self.deliver_now(record.origin, target, msg_id, dup_index, &record.payload)
    }

    /// Runs until the queue drains. With fairness on, every broadcast
    /// payload is then re-offered (over live links) until each live replica
    /// has delivered it at least once; envelopes lost to dead links stay
    /// lost. Bounded by `max_events`.
    pub fn run_to_quiescence(&mut self) -> Result<(), SimError> {
        loop {
            while self.step()?.is_some() {}
            if !self.config.fairness {
                return Ok(());
            }
            let missing = self.missing_deliveries();
            if missing.is_empty() {
                return Ok(());
            }
            for (msg_id, target) in missing {
                self.bump_events()?;
                self.stats.reoffers += 1;
                // Each retransmission faces the loss coin again; fair loss
                // means it eventually gets through.
                if self.rng.coin(self.config.drop_probability) {
                    self.stats.drops += 1;
                    continue;
                }
                let record = self
                    .broadcasts
                    .iter()
                    .find(|b| b.msg_id == msg_id)
                    .cloned()
                    .expect("re-offered message was broadcast");
                self.schedule_copy(msg_id, record.origin, target, record.payload, record.clock);
            }
        }
    }

    /// (message, live target) pairs whose payload the target has not yet
    /// delivered, excluding dead links (those model infinite delay).
    fn missing_deliveries(&self) -> Vec<(MsgId, ReplicaId)> {
        let mut out = Vec::new();
        for record in &self.broadcasts {
            for target in self.members.iter() {
                if target == record.origin || self.nodes[target.index()].crashed {
                    continue;
                }
                if self
                    .config
                    .dead_links
                    .contains(&(record.origin.index() as u32, target.index() as u32))
                {
                    continue;
                }
                let delivered = self.nodes[target.index()]
                    .history
                    .delivered_payloads()
                    .contains(&record.payload);
                if !delivered {
                    out.push((record.msg_id, target));
                }
            }
        }
        out
    }

    // Anti-entropy driver hooks; see the antientropy module for semantics.

    /// Applies a client update locally: delta joined into state and group,
    /// no broadcast (the periodic sync is the only network activity).
    pub fn ae_local_update(&mut self, origin: ReplicaId, op: &ClientOp) -> Result<(), SimError> {
        if !self.members.contains(origin) {
            return Err(SimError::UnknownReplica(origin));
        }
        self.bump_events()?;
        let node = &mut self.nodes[origin.index()];
        if node.crashed {
            return Err(SimError::Crashed(origin));
        }
        let ae = node.ae.as_mut().expect("anti-entropy not enabled");
        ae.on_local_update(&mut node.machine, origin, op)?;
        Ok(())
    }

    /// Runs one periodic sync at `origin`: flips a coin from the scenario
    /// RNG stream, broadcasts either the full state or the delta-group as an
    /// interval, and flushes the group. Empty syncs are suppressed unless
    /// configured otherwise.
    pub fn ae_sync(&mut self, origin: ReplicaId) -> Result<Option<MsgId>, SimError> {
        let coin = self.rng.bit();
        let node = &mut self.nodes[origin.index()];
        if node.crashed {
            return Ok(None);
        }
        let ae = node.ae.as_mut().expect("anti-entropy not enabled");
        let payload = ae.sync_payload(&node.machine, origin, coin);
        match payload {
            Some(msg) => Ok(Some(self.broadcast(origin, msg)?)),
            None => {
                self.stats.suppressed += 1;
                Ok(None)
            }
        }
    }

    /// All live lattice states are equal and nothing is in flight.
    pub fn converged(&self) -> bool {
        if !self.queue.is_empty() {
            return false;
        }
        let mut live = self
            .nodes
            .iter()
            .filter(|n| !n.crashed)
            .map(|n| n.machine.state());
        let Some(first) = live.next() else {
            return true;
        };
        live.all(|s| s == first)
    }
}
