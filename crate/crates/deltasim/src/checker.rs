//! Strong eventual consistency verdicts, the exhaustive small-scope oracle,
//! and the randomized lattice-law suite.
//!
//! Verdicts are pure functions of (histories, final states): re-running the
//! checker over the same transcript yields the same verdict. Strong
//! convergence compares every pair of live replicas whose delivered payload
//! sets (duplicates collapsed) are equal and demands equal states; eventual
//! delivery demands every broadcast payload was delivered at least once at
//! every live replica, and is not applicable when the run deliberately broke
//! the fair-loss precondition by disabling retransmission.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::crdt::{GCounterState, GSetState, PairState, ReplicaId, ReplicaSet};
use crate::message::{ClientOp, CrdtKind, CrdtState, Message, Style};
use crate::netsim::{EventKind, MsgId, NodeHistory};
use crate::reduce::{MachineState, OpMachine};
use crate::rng::DetRng;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("malformed history: {0}")]
    MalformedHistory(String),
    #[error("oracle bounds exceeded: {0}")]
    BoundsExceeded(String),
    #[error("oracle setup failed: {0}")]
    Setup(String),
}

/// Outcome of one verdict component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    NotApplicable,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Pass => write!(f, "pass"),
            Outcome::Fail => write!(f, "fail"),
            Outcome::NotApplicable => write!(f, "n/a"),
        }
    }
}

/// A concrete witness of a strong-convergence violation.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub left: ReplicaId,
    pub right: ReplicaId,
    pub delivered: BTreeSet<Message>,
    pub left_state: String,
    pub right_state: String,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "counterexample:")?;
        writeln!(
            f,
            "  replicas {} and {} delivered the same payload set:",
            self.left, self.right
        )?;
        for m in &self.delivered {
            writeln!(f, "    {m}")?;
        }
        writeln!(f, "  {} state: {}", self.left, self.left_state)?;
        write!(f, "  {} state: {}", self.right, self.right_state)
    }
}

/// Per-replica digest reported alongside verdicts.
#[derive(Debug, Clone)]
pub struct ReplicaDetail {
    pub id: ReplicaId,
    pub live: bool,
    pub delivered_distinct: usize,
    pub digest: String,
    pub state: String,
    pub query: String,
}

/// SEC verdict over one finished run.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub strong_convergence: Outcome,
    pub eventual_delivery: Outcome,
    pub counterexample: Option<Counterexample>,
    /// (replica, payload repr) pairs a live replica never delivered.
    pub missing: Vec<(ReplicaId, String)>,
    pub details: Vec<ReplicaDetail>,
}

impl Verdict {
    pub fn exit_code(&self) -> i32 {
        if self.strong_convergence == Outcome::Fail || self.eventual_delivery == Outcome::Fail {
            1
        } else {
            0
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "strong_convergence: {}", self.strong_convergence)?;
        writeln!(f, "eventual_delivery: {}", self.eventual_delivery)?;
        if let Some(cex) = &self.counterexample {
            writeln!(f, "{cex}")?;
        }
        if !self.missing.is_empty() {
            writeln!(f, "missing deliveries:")?;
            for (id, payload) in &self.missing {
                writeln!(f, "  {id} never delivered {payload}")?;
            }
        }
        writeln!(f, "details:")?;
        for d in &self.details {
            writeln!(
                f,
                "  {} live={} delivered={} digest={} state={} query={}",
                d.id, d.live, d.delivered_distinct, d.digest, d.state, d.query
            )?;
        }
        Ok(())
    }
}

/// FNV-1a over the canonical payload reprs, printed as a short hex digest.
fn delivered_digest(payloads: &BTreeSet<Message>) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for p in payloads {
        for byte in p.to_string().bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x1000_0000_01b3);
        }
        hash ^= 0x1f;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    format!("{hash:016x}")
}

/// Validates the two history invariants every run must satisfy: each
/// delivered id was broadcast somewhere, and each broadcast is followed by a
/// local delivery at the broadcasting node.
pub fn validate_histories(histories: &[&NodeHistory]) -> Result<(), CheckError> {
    let all_broadcast: BTreeSet<MsgId> = histories.iter().flat_map(|h| h.broadcast_ids()).collect();
    for (i, h) in histories.iter().enumerate() {
        for id in h.delivered_ids() {
            if !all_broadcast.contains(&id) {
                return Err(CheckError::MalformedHistory(format!(
                    "replica r{i} delivered message {id} that was never broadcast"
                )));
            }
        }
        for (pos, e) in h.events.iter().enumerate() {
            if e.kind == EventKind::Broadcast {
                let delivered_later = h.events[pos..]
                    .iter()
                    .any(|later| later.kind == EventKind::Deliver && later.msg_id == e.msg_id);
                if !delivered_later {
                    return Err(CheckError::MalformedHistory(format!(
                        "replica r{i} broadcast {} without a local delivery",
                        e.msg_id
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Strong convergence: replicas with equal delivered payload sets must hold
/// equal states. Zero or one live replicas pass vacuously.
pub fn strong_convergence_check(
    histories: &[&NodeHistory],
    finals: &[MachineState],
    live: &[bool],
) -> Result<(Outcome, Option<Counterexample>), CheckError> {
    validate_histories(histories)?;
    let delivered: Vec<BTreeSet<Message>> =
        histories.iter().map(|h| h.delivered_payloads()).collect();
    for i in 0..histories.len() {
        for j in (i + 1)..histories.len() {
            if !(live[i] && live[j]) {
                continue;
            }
            if delivered[i] == delivered[j] && finals[i] != finals[j] {
                return Ok((
                    Outcome::Fail,
                    Some(Counterexample {
                        left: ReplicaId::new(i as u32),
                        right: ReplicaId::new(j as u32),
                        delivered: delivered[i].clone(),
                        left_state: finals[i].to_string(),
                        right_state: finals[j].to_string(),
                    }),
                ));
            }
        }
    }
    Ok((Outcome::Pass, None))
}

/// Eventual delivery: every broadcast payload reached every live replica at
/// least once. Not applicable when fairness was off, since the fair-loss
/// precondition was deliberately unmet.
pub fn eventual_delivery_check(
    histories: &[&NodeHistory],
    broadcasts: &[(MsgId, ReplicaId, Message)],
    live: &[bool],
    fairness_was_on: bool,
) -> (Outcome, Vec<(ReplicaId, String)>) {
    if !fairness_was_on {
        return (Outcome::NotApplicable, Vec::new());
    }
    let delivered: Vec<BTreeSet<Message>> =
        histories.iter().map(|h| h.delivered_payloads()).collect();
    let mut missing = Vec::new();
    let mut seen = BTreeSet::new();
    for (_, _, payload) in broadcasts {
        if !seen.insert(payload.clone()) {
            continue;
        }
        for (i, is_live) in live.iter().enumerate() {
            if *is_live && !delivered[i].contains(payload) {
                missing.push((ReplicaId::new(i as u32), payload.to_string()));
            }
        }
    }
    if missing.is_empty() {
        (Outcome::Pass, missing)
    } else {
        (Outcome::Fail, missing)
    }
}

/// Which verdict components a run wants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Checks {
    pub convergence: bool,
    pub delivery: bool,
}

impl Default for Checks {
    fn default() -> Self {
        Checks {
            convergence: true,
            delivery: true,
        }
    }
}

/// Assembles the full verdict for a finished run.
pub fn verdict(
    histories: &[&NodeHistory],
    finals: &[MachineState],
    live: &[bool],
    broadcasts: &[(MsgId, ReplicaId, Message)],
    fairness_was_on: bool,
    checks: Checks,
    queries: &[String],
) -> Result<Verdict, CheckError> {
    let (strong, counterexample) = if checks.convergence {
        strong_convergence_check(histories, finals, live)?
    } else {
        validate_histories(histories)?;
        (Outcome::NotApplicable, None)
    };
    let (delivery, missing) = if checks.delivery {
        eventual_delivery_check(histories, broadcasts, live, fairness_was_on)
    } else {
        (Outcome::NotApplicable, Vec::new())
    };
    let details = histories
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let payloads = h.delivered_payloads();
            ReplicaDetail {
                id: ReplicaId::new(i as u32),
                live: live[i],
                delivered_distinct: payloads.len(),
                digest: delivered_digest(&payloads),
                state: finals[i].to_string(),
                query: queries[i].clone(),
            }
        })
        .collect();
    Ok(Verdict {
        strong_convergence: strong,
        eventual_delivery: delivery,
        counterexample,
        missing,
        details,
    })
}

// ---------------------------------------------------------------------------
// Exhaustive small-scope oracle
// ---------------------------------------------------------------------------

/// Report from one oracle run.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub kind: CrdtKind,
    pub style: Style,
    pub replicas: u32,
    pub ops: Vec<(ReplicaId, ClientOp)>,
    /// Number of delivery schedules enumerated.
    pub schedules: u64,
    /// Lexicographic index and rendering of the first diverging schedule.
    pub failure: Option<(u64, String)>,
}

impl OracleReport {
    pub fn converged(&self) -> bool {
        self.failure.is_none()
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "oracle: crdt={} style={} replicas={} ops={}",
            self.kind,
            self.style,
            self.replicas,
            self.ops.len()
        )?;
        writeln!(f, "schedules: {}", self.schedules)?;
        match &self.failure {
            None => write!(f, "result: pass (every schedule converged)"),
            Some((index, desc)) => {
                writeln!(f, "result: fail")?;
                write!(f, "diverging schedule #{index}: {desc}")
            }
        }
    }
}

/// The default operation sequence the oracle drives: `ops` operations dealt
/// round-robin over the replicas, counters incrementing (PN alternating
/// inc/dec) and sets inserting distinct elements (2P alternating add/remove
/// of the same element).
pub fn oracle_ops(kind: CrdtKind, replicas: u32, ops: u32) -> Vec<(ReplicaId, ClientOp)> {
    (0..ops)
        .map(|k| {
            let origin = ReplicaId::new(k % replicas);
            let op = match kind {
                CrdtKind::GCounter => ClientOp::Inc,
                CrdtKind::PnCounter => {
                    if k % 2 == 0 {
                        ClientOp::Inc
                    } else {
                        ClientOp::Dec
                    }
                }
                CrdtKind::GSet => ClientOp::Insert(format!("e{k}")),
                CrdtKind::TwoPSet => {
                    if k % 2 == 0 {
                        ClientOp::Add(format!("e{}", k / 2))
                    } else {
                        ClientOp::Remove(format!("e{}", k / 2))
                    }
                }
            };
            (origin, op)
        })
        .collect()
}

/// One event in a per-replica oracle timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleEvent {
    /// The replica's own k-th global operation: prepare + local delivery.
    Prepare(usize),
    /// Delivery of one copy of message k.
    Deliver(usize),
}

/// One product schedule: a timeline per replica.
#[derive(Debug, Clone)]
pub struct OracleSchedule {
    pub timelines: Vec<Vec<OracleEvent>>,
}

fn check_bounds(replicas: u32, ops: u32, max_dup: u32) -> Result<(), CheckError> {
    if replicas == 0 || replicas > 3 {
        return Err(CheckError::BoundsExceeded(format!(
            "replicas must be in 1..=3, got {replicas}"
        )));
    }
    if ops > 4 {
        return Err(CheckError::BoundsExceeded(format!(
            "ops must be at most 4, got {ops}"
        )));
    }
    if max_dup == 0 || max_dup > 2 {
        return Err(CheckError::BoundsExceeded(format!(
            "max-dup must be 1 or 2, got {max_dup}"
        )));
    }
    Ok(())
}

/// Materializes the oracle's schedule space, in the same lexicographic order
/// `brute_force_oracle` enumerates it. Intended for replaying schedules
/// through other executors at small scope.
pub fn oracle_schedules(
    kind: CrdtKind,
    style: Style,
    replicas: u32,
    ops: u32,
    max_dup: u32,
) -> Result<Vec<OracleSchedule>, CheckError> {
    check_bounds(replicas, ops, max_dup)?;
    let op_list = oracle_ops(kind, replicas, ops);
    let per_replica: Vec<Vec<Vec<OracleEvent>>> = (0..replicas)
        .map(|r| enumerate_timelines(ReplicaId::new(r), &op_list, max_dup, style == Style::Op))
        .collect();
    let mut out = Vec::new();
    let mut indices = vec![0usize; replicas as usize];
    'outer: loop {
        out.push(OracleSchedule {
            timelines: indices
                .iter()
                .enumerate()
                .map(|(r, &i)| per_replica[r][i].clone())
                .collect(),
        });
        for r in 0..indices.len() {
            indices[r] += 1;
            if indices[r] < per_replica[r].len() {
                continue 'outer;
            }
            indices[r] = 0;
        }
        break;
    }
    Ok(out)
}

/// Replays one schedule against fresh machines; returns the final states.
pub fn execute_oracle_schedule(
    kind: CrdtKind,
    style: Style,
    replicas: u32,
    ops: &[(ReplicaId, ClientOp)],
    schedule: &OracleSchedule,
) -> Result<Vec<MachineState>, CheckError> {
    let members = ReplicaSet::new(replicas);
    let timelines: Vec<&Vec<OracleEvent>> = schedule.timelines.iter().collect();
    execute_schedule(kind, style, members, ops, &timelines).map_err(CheckError::Setup)
}

/// Enumerates every delivery schedule for the given operations and asserts
/// strong convergence on each.
///
/// The schedule space, enumerated lexicographically:
/// - operations are prepared in list order, each applied locally at its
///   origin when prepared;
/// - per (message, remote replica), between 1 and `max_dup` copies are
///   delivered (exactly one first copy in origin order under the op style,
///   which needs causal at-most-once delivery; duplicates model the network
///   violating that contract);
/// - per replica, delivery events interleave freely with the replica's own
///   prepares, except that a message cannot arrive before its own prepare
///   (enforced as: message k may precede the replica's own operation m only
///   when k < m).
///
/// Cross-replica interleavings beyond that cannot change any final state,
/// because a delivery only touches its target and message contents are fixed
/// at prepare time, so the product of per-replica timelines covers every
/// distinguishable global schedule.
pub fn brute_force_oracle(
    kind: CrdtKind,
    style: Style,
    replicas: u32,
    ops: u32,
    max_dup: u32,
) -> Result<OracleReport, CheckError> {
    check_bounds(replicas, ops, max_dup)?;
    let op_list = oracle_ops(kind, replicas, ops);
    let members = ReplicaSet::new(replicas);
    OpMachine::new(kind, style, ReplicaId::new(0), members)
        .map_err(|e| CheckError::Setup(e.to_string()))?;

    // Enumerate per-replica timelines.
    let per_replica: Vec<Vec<Vec<OracleEvent>>> = (0..replicas)
        .map(|r| {
            enumerate_timelines(
                ReplicaId::new(r),
                &op_list,
                max_dup,
                style == Style::Op,
            )
        })
        .collect();

    let mut schedules = 0u64;
    let mut indices = vec![0usize; replicas as usize];
    let mut failure = None;
    'outer: loop {
        let timelines: Vec<&Vec<OracleEvent>> = indices
            .iter()
            .enumerate()
            .map(|(r, &i)| &per_replica[r][i])
            .collect();
        let finals = execute_schedule(kind, style, members, &op_list, &timelines)
            .map_err(CheckError::Setup)?;
        let all_equal = finals.windows(2).all(|w| w[0] == w[1]);
        if !all_equal && failure.is_none() {
            failure = Some((schedules, render_schedule(&timelines)));
        }
        schedules += 1;
        // Advance the mixed-radix index vector.
        for r in 0..indices.len() {
            indices[r] += 1;
            if indices[r] < per_replica[r].len() {
                continue 'outer;
            }
            indices[r] = 0;
        }
        break;
    }
    Ok(OracleReport {
        kind,
        style,
        replicas,
        ops: op_list,
        schedules,
        failure,
    })
}

struct TimelineSpace<'a> {
    /// This replica's own global op indices, ascending.
    own: &'a [usize],
    /// Incoming global op indices, ascending.
    incoming: &'a [usize],
    /// Origin of every global op.
    origins: &'a [ReplicaId],
    /// Chosen copy count per incoming position.
    initial: Vec<u32>,
    /// Op style: first copies of same-origin messages arrive in origin
    /// order, approximating the causal delivery its contract demands.
    op_mode: bool,
}

/// All valid timelines at one replica: interleavings of its own prepares
/// (fixed order) with 1..=max_dup copies of every remote message, subject to
/// the "no delivery before its prepare" rule (and first-copy origin order in
/// op mode).
fn enumerate_timelines(
    replica: ReplicaId,
    ops: &[(ReplicaId, ClientOp)],
    max_dup: u32,
    op_mode: bool,
) -> Vec<Vec<OracleEvent>> {
    let own: Vec<usize> = ops
        .iter()
        .enumerate()
        .filter(|(_, (o, _))| *o == replica)
        .map(|(k, _)| k)
        .collect();
    let incoming: Vec<usize> = ops
        .iter()
        .enumerate()
        .filter(|(_, (o, _))| *o != replica)
        .map(|(k, _)| k)
        .collect();
    let origins: Vec<ReplicaId> = ops.iter().map(|(o, _)| *o).collect();

    // Choose a copy count per incoming message, then interleave.
    let mut results = Vec::new();
    let mut copies = vec![1u32; incoming.len()];
    loop {
        let space = TimelineSpace {
            own: &own,
            incoming: &incoming,
            origins: &origins,
            initial: copies.clone(),
            op_mode,
        };
        let mut timeline = Vec::new();
        let mut remaining = copies.clone();
        extend_timelines(&space, &mut remaining, &mut timeline, 0, &mut results);
        // Advance copy counts (mixed radix 1..=max_dup).
        let mut pos = 0;
        loop {
            if pos == copies.len() {
                return results;
            }
            copies[pos] += 1;
            if copies[pos] <= max_dup {
                break;
            }
            copies[pos] = 1;
            pos += 1;
        }
    }
}

fn extend_timelines(
    space: &TimelineSpace<'_>,
    remaining: &mut Vec<u32>,
    timeline: &mut Vec<OracleEvent>,
    own_done: usize,
    results: &mut Vec<Vec<OracleEvent>>,
) {
    let deliveries_left: u32 = remaining.iter().sum();
    if own_done == space.own.len() && deliveries_left == 0 {
        results.push(timeline.clone());
        return;
    }
    // Option 1: the replica's next own operation.
    if own_done < space.own.len() {
        timeline.push(OracleEvent::Prepare(space.own[own_done]));
        extend_timelines(space, remaining, timeline, own_done + 1, results);
        timeline.pop();
    }
    // Option 2: deliver one copy of some incoming message.
    for (i, &msg) in space.incoming.iter().enumerate() {
        if remaining[i] == 0 {
            continue;
        }
        // A message cannot arrive before its own prepare: if this replica
        // still has own op m < msg pending, delivering msg now would place
        // msg's delivery before prepare m while prepare msg happens after
        // prepare m, which no real execution can realize.
        if own_done < space.own.len() && space.own[own_done] < msg {
            continue;
        }
        if space.op_mode {
            // First copies of same-origin messages arrive in origin order.
            let is_first_copy = remaining[i] == space.initial[i];
            if is_first_copy {
                let blocked = space.incoming.iter().enumerate().any(|(j, &other)| {
                    other < msg
                        && space.origins[other] == space.origins[msg]
                        && remaining[j] == space.initial[j]
                });
                if blocked {
                    continue;
                }
            }
        }
        remaining[i] -= 1;
        timeline.push(OracleEvent::Deliver(msg));
        extend_timelines(space, remaining, timeline, own_done, results);
        timeline.pop();
        remaining[i] += 1;
    }
}

fn render_schedule(timelines: &[&Vec<OracleEvent>]) -> String {
    let mut parts = Vec::new();
    for (r, t) in timelines.iter().enumerate() {
        let events: Vec<String> = t
            .iter()
            .map(|e| match e {
                OracleEvent::Prepare(k) => format!("P{k}"),
                OracleEvent::Deliver(k) => format!("D{k}"),
            })
            .collect();
        parts.push(format!("r{r}:[{}]", events.join(" ")));
    }
    parts.join(" ")
}

/// Replays one product schedule directly against machines and returns the
/// final states.
fn execute_schedule(
    kind: CrdtKind,
    style: Style,
    members: ReplicaSet,
    ops: &[(ReplicaId, ClientOp)],
    timelines: &[&Vec<OracleEvent>],
) -> Result<Vec<MachineState>, String> {
    let n = timelines.len();
    let mut machines: Vec<OpMachine> = (0..n)
        .map(|i| OpMachine::new(kind, style, ReplicaId::new(i as u32), members).unwrap())
        .collect();
    let mut contents: Vec<Option<Message>> = vec![None; ops.len()];
    let mut cursors = vec![0usize; n];

    // Drive prepares in global op order; a prepare can run once its origin's
    // timeline has consumed every event before it.
    for (k, (origin, _)) in ops.iter().enumerate() {
        let r = origin.index();
        // Execute the origin timeline up to and including Prepare(k).
        loop {
            let t = timelines[r];
            let Some(event) = t.get(cursors[r]) else {
                return Err(format!("timeline at r{r} ended before prepare {k}"));
            };
            cursors[r] += 1;
            match event {
                OracleEvent::Prepare(m) => {
                    let msg = machines[r]
                        .prepare(&ops[*m].1)
                        .map_err(|e| e.to_string())?;
                    machines[r].effect(&msg).map_err(|e| e.to_string())?;
                    contents[*m] = Some(msg);
                    if *m == k {
                        break;
                    }
                }
                OracleEvent::Deliver(m) => {
                    let msg = contents[*m]
                        .as_ref()
                        .ok_or_else(|| format!("message {m} delivered before prepared"))?
                        .clone();
                    machines[r].effect(&msg).map_err(|e| e.to_string())?;
                }
            }
        }
    }
    // Flush the remaining deliveries on every timeline.
    for r in 0..n {
        let t = timelines[r];
        while let Some(event) = t.get(cursors[r]) {
            cursors[r] += 1;
            match event {
                OracleEvent::Prepare(_) => return Err("prepare after all ops consumed".into()),
                OracleEvent::Deliver(m) => {
                    let msg = contents[*m]
                        .as_ref()
                        .ok_or_else(|| format!("message {m} delivered before prepared"))?
                        .clone();
                    machines[r].effect(&msg).map_err(|e| e.to_string())?;
                }
            }
        }
    }
    Ok(machines.into_iter().map(|m| m.state().clone()).collect())
}

// ---------------------------------------------------------------------------
// Randomized lattice-law suite
// ---------------------------------------------------------------------------

/// Report from the law suite.
#[derive(Debug, Clone)]
pub struct LawReport {
    pub kind: CrdtKind,
    pub trials: u32,
    pub failures: Vec<String>,
}

impl LawReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for LawReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "laws: crdt={} trials={}", self.kind, self.trials)?;
        if self.failures.is_empty() {
            write!(
                f,
                "result: pass (commutativity, associativity, idempotency, inflation)"
            )
        } else {
            writeln!(f, "result: fail")?;
            for failure in &self.failures {
                writeln!(f, "  {failure}")?;
            }
            Ok(())
        }
    }
}

fn random_counter(rng: &mut DetRng) -> GCounterState {
    let replicas = 4;
    GCounterState::from_counts((0..replicas).map(|i| (ReplicaId::new(i), rng.range(0, 3))))
}

fn random_set(rng: &mut DetRng) -> GSetState<String> {
    let universe = ["a", "b", "c", "d", "e", "f"];
    GSetState::from_elements(
        universe
            .iter()
            .filter(|_| rng.coin(0.45))
            .map(|s| s.to_string()),
    )
}

fn random_state(kind: CrdtKind, rng: &mut DetRng) -> CrdtState {
    match kind {
        CrdtKind::GCounter => CrdtState::GCounter(random_counter(rng)),
        CrdtKind::GSet => CrdtState::GSet(random_set(rng)),
        CrdtKind::PnCounter => {
            CrdtState::PnCounter(PairState::new(random_counter(rng), random_counter(rng)))
        }
        CrdtKind::TwoPSet => CrdtState::TwoPSet(PairState::new(random_set(rng), random_set(rng))),
    }
}

fn random_update(state: &CrdtState, rng: &mut DetRng) -> CrdtState {
    let members = ReplicaSet::new(4);
    let who = ReplicaId::new(rng.range(0, 3) as u32);
    let fresh = ["a", "b", "c", "d", "e", "f", "g", "h"];
    let pick = fresh[rng.range(0, fresh.len() as u64 - 1) as usize].to_string();
    let op = match state.kind() {
        CrdtKind::GCounter => ClientOp::Inc,
        CrdtKind::PnCounter => {
            if rng.bit() == 0 {
                ClientOp::Inc
            } else {
                ClientOp::Dec
            }
        }
        CrdtKind::GSet => ClientOp::Insert(pick),
        CrdtKind::TwoPSet => {
            if rng.bit() == 0 {
                ClientOp::Add(pick)
            } else {
                ClientOp::Remove(pick)
            }
        }
    };
    state
        .apply_op(who, &members, &op)
        .expect("law-suite updates stay in range")
}

/// Runs randomized commutativity, associativity, idempotency, and inflation
/// checks with a generic join, reporting counterexample states on failure.
fn run_law_trials(
    kind: CrdtKind,
    trials: u32,
    seed: u64,
    join: impl Fn(&CrdtState, &CrdtState) -> CrdtState,
) -> LawReport {
    let mut rng = DetRng::new(seed);
    let mut failures = Vec::new();
    for trial in 0..trials {
        let a = random_state(kind, &mut rng);
        let b = random_state(kind, &mut rng);
        let c = random_state(kind, &mut rng);
        let ab = join(&a, &b);
        let ba = join(&b, &a);
        if ab != ba {
            failures.push(format!(
                "trial {trial}: commutativity: a={a} b={b} a⊔b={ab} b⊔a={ba}"
            ));
        }
        let assoc_l = join(&a, &join(&b, &c));
        let assoc_r = join(&join(&a, &b), &c);
        if assoc_l != assoc_r {
            failures.push(format!(
                "trial {trial}: associativity: a={a} b={b} c={c}"
            ));
        }
        let idem = join(&ab, &b);
        if idem != ab {
            failures.push(format!(
                "trial {trial}: idempotency: a={a} b={b} (a⊔b)⊔b={idem}"
            ));
        }
        let updated = random_update(&a, &mut rng);
        // Inflation via the induced order: s ⊑ update(s).
        if join(&a, &updated) != updated {
            failures.push(format!(
                "trial {trial}: inflation: s={a} updated={updated}"
            ));
        }
        if failures.len() >= 5 {
            break;
        }
    }
    LawReport {
        kind,
        trials,
        failures,
    }
}

/// The public law suite over the real join.
pub fn lattice_law_suite(kind: CrdtKind, trials: u32, seed: u64) -> LawReport {
    run_law_trials(kind, trials, seed, |a, b| {
        a.join(b).expect("same-kind states")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crdt::BoundedJoinSemilattice as _;

    #[test]
    fn law_suite_passes_for_all_kinds() {
        for kind in CrdtKind::ALL {
            let report = lattice_law_suite(kind, 300, 7);
            assert!(report.passed(), "{report}");
        }
    }

    #[test]
    fn broken_join_is_caught_by_the_law_suite() {
        // Overwrite instead of max: last writer wins, which breaks
        // commutativity (and idempotency via the induced order).
        let broken = |a: &CrdtState, b: &CrdtState| -> CrdtState {
            match (a, b) {
                (CrdtState::GCounter(left), CrdtState::GCounter(right)) => {
                    let mut merged: std::collections::BTreeMap<ReplicaId, u64> =
                        left.entries().collect();
                    for (id, n) in right.entries() {
                        merged.insert(id, n);
                    }
                    CrdtState::GCounter(GCounterState::from_counts(merged))
                }
                _ => unreachable!(),
            }
        };
        let report = run_law_trials(CrdtKind::GCounter, 300, 11, broken);
        assert!(!report.passed(), "broken join must produce counterexamples");
    }

    #[test]
    fn oracle_small_gset_converges_and_counts_schedules() {
        let report = brute_force_oracle(CrdtKind::GSet, Style::Delta, 2, 2, 2).unwrap();
        assert!(report.converged(), "{report}");
        assert!(report.schedules > 0);
    }

    #[test]
    fn oracle_finds_native_op_divergence_under_duplication() {
        let report = brute_force_oracle(CrdtKind::GCounter, Style::Op, 2, 1, 2).unwrap();
        assert!(!report.converged(), "duplicated native ops must diverge");
    }

    #[test]
    fn oracle_native_op_converges_exactly_once() {
        let report = brute_force_oracle(CrdtKind::GCounter, Style::Op, 3, 3, 1).unwrap();
        assert!(report.converged(), "{report}");
    }

    #[test]
    fn oracle_rejects_out_of_bounds() {
        assert!(brute_force_oracle(CrdtKind::GSet, Style::Delta, 4, 2, 2).is_err());
        assert!(brute_force_oracle(CrdtKind::GSet, Style::Delta, 2, 5, 2).is_err());
        assert!(brute_force_oracle(CrdtKind::GSet, Style::Delta, 2, 2, 3).is_err());
    }

    #[test]
    fn strong_convergence_vacuous_with_one_replica() {
        let h = NodeHistory::default();
        let histories = vec![&h];
        let finals = vec![MachineState::Lattice(CrdtState::GCounter(
            GCounterState::bottom(),
        ))];
        let (outcome, cex) = strong_convergence_check(&histories, &finals, &[true]).unwrap();
        assert_eq!(outcome, Outcome::Pass);
        assert!(cex.is_none());
    }

    #[test]
    fn eventual_delivery_passes_with_no_broadcasts() {
        let h = NodeHistory::default();
        let histories = vec![&h];
        let (outcome, missing) = eventual_delivery_check(&histories, &[], &[true], true);
        assert_eq!(outcome, Outcome::Pass);
        assert!(missing.is_empty());
    }

    #[test]
    fn eventual_delivery_is_not_applicable_without_fairness() {
        // With retransmission off the fair-loss precondition is unmet.
        let h = NodeHistory::default();
        let histories = vec![&h];
        let broadcasts = vec![(
            0,
            ReplicaId::new(0),
            crate::message::Message::Op(crate::message::NativeOp::Inc),
        )];
        let (outcome, missing) = eventual_delivery_check(&histories, &broadcasts, &[true], false);
        assert_eq!(outcome, Outcome::NotApplicable);
        assert!(missing.is_empty());
    }

    #[test]
    fn verdicts_are_pure_functions_of_their_inputs() {
        use crate::netsim::{NetworkConfig, Simulator};
        use crate::reduce::OpMachine;
        let machines = (0..2)
            .map(|i| {
                OpMachine::new(
                    CrdtKind::GCounter,
                    Style::Delta,
                    ReplicaId::new(i),
                    ReplicaSet::new(2),
                )
                .unwrap()
            })
            .collect();
        let mut sim = Simulator::new(NetworkConfig::default(), machines);
        sim.inject(ReplicaId::new(0), &ClientOp::Inc).unwrap();
        sim.run_to_quiescence().unwrap();
        let histories = sim.histories();
        let finals = sim.final_states();
        let live = sim.live_flags();
        let broadcasts: Vec<_> = sim
            .broadcast_log()
            .iter()
            .map(|b| (b.msg_id, b.origin, b.payload.clone()))
            .collect();
        let queries = vec!["1".to_string(), "1".to_string()];
        let run = || {
            verdict(
                &histories,
                &finals,
                &live,
                &broadcasts,
                true,
                Checks::default(),
                &queries,
            )
            .unwrap()
            .to_string()
        };
        assert_eq!(run(), run());
    }
}
