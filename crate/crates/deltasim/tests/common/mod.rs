//! Shared test support: textbook reference executors and a test-local
//! delivery-schedule enumerator.
//!
//! The executors here apply updates and merges directly from the lattice
//! definitions (update assigns the updated state at the origin; merge joins
//! a received value), with no prepare/effect machinery in the path. They are
//! the reference the machine-based runs are compared against, so they must
//! stay independent of `OpMachine`.

use deltasim::crdt::{BoundedJoinSemilattice, GSetState, PairState, ReplicaId, ReplicaSet};
use deltasim::message::{ClientOp, CrdtKind, CrdtState, Style};
use deltasim::reduce::{MachineState, OpMachine};

/// One event at one replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// The replica performs its k-th global operation.
    Prepare(usize),
    /// The replica receives message k.
    Deliver(usize),
}

pub type Timeline = Vec<Step>;

/// All valid single-delivery timelines at one replica: interleavings of its
/// own operations (fixed order) with one delivery per remote message, where
/// message k may precede the replica's own operation m only when k < m.
pub fn enumerate_timelines(replica: ReplicaId, ops: &[(ReplicaId, ClientOp)]) -> Vec<Timeline> {
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
    let mut results = Vec::new();
    let mut pending: Vec<bool> = vec![true; incoming.len()];
    let mut timeline = Vec::new();
    extend(&own, &incoming, &mut pending, &mut timeline, 0, &mut results);
    results
}

fn extend(
    own: &[usize],
    incoming: &[usize],
    pending: &mut Vec<bool>,
    timeline: &mut Timeline,
    own_done: usize,
    results: &mut Vec<Timeline>,
) {
    if own_done == own.len() && pending.iter().all(|p| !p) {
        results.push(timeline.clone());
        return;
    }
    if own_done < own.len() {
        timeline.push(Step::Prepare(own[own_done]));
        extend(own, incoming, pending, timeline, own_done + 1, results);
        timeline.pop();
    }
    for i in 0..incoming.len() {
        if !pending[i] {
            continue;
        }
        let msg = incoming[i];
        if own_done < own.len() && own[own_done] < msg {
            continue;
        }
        pending[i] = false;
        timeline.push(Step::Deliver(msg));
        extend(own, incoming, pending, timeline, own_done, results);
        timeline.pop();
        pending[i] = true;
    }
}

/// The cartesian product of per-replica timelines.
pub fn product_schedules(ops: &[(ReplicaId, ClientOp)], replicas: u32) -> Vec<Vec<Timeline>> {
    let per_replica: Vec<Vec<Timeline>> = (0..replicas)
        .map(|r| enumerate_timelines(ReplicaId::new(r), ops))
        .collect();
    let mut out = Vec::new();
    let mut indices = vec![0usize; replicas as usize];
    'outer: loop {
        out.push(
            indices
                .iter()
                .enumerate()
                .map(|(r, &i)| per_replica[r][i].clone())
                .collect(),
        );
        for r in 0..indices.len() {
            indices[r] += 1;
            if indices[r] < per_replica[r].len() {
                continue 'outer;
            }
            indices[r] = 0;
        }
        break;
    }
    out
}

/// Which textbook semantics the reference executor runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NativeStyle {
    /// Update assigns the updated state; messages carry that full state;
    /// merge is the join.
    FullState,
    /// Update produces a delta fragment; the origin pseudo-joins it; the
    /// message carries the fragment; merge is the join.
    Delta,
}

/// Delta-mutator spelled directly from the definitions: singleton map for
/// the counter, singleton set for the set, one-sided pairs for the composed
/// CRDTs.
fn delta_mutate(
    state: &CrdtState,
    who: ReplicaId,
    members: &ReplicaSet,
    op: &ClientOp,
) -> CrdtState {
    match (state, op) {
        (CrdtState::GCounter(c), ClientOp::Inc) => {
            CrdtState::GCounter(c.inc_delta(who, members).unwrap())
        }
        (CrdtState::GSet(_), ClientOp::Insert(x)) => {
            CrdtState::GSet(GSetState::insert_delta(x.clone()))
        }
        (CrdtState::PnCounter(c), ClientOp::Inc) => CrdtState::PnCounter(PairState::new(
            c.pos().inc_delta(who, members).unwrap(),
            BoundedJoinSemilattice::bottom(),
        )),
        (CrdtState::PnCounter(c), ClientOp::Dec) => CrdtState::PnCounter(PairState::new(
            BoundedJoinSemilattice::bottom(),
            c.neg().inc_delta(who, members).unwrap(),
        )),
        (CrdtState::TwoPSet(_), ClientOp::Add(x)) => CrdtState::TwoPSet(PairState::new(
            GSetState::insert_delta(x.clone()),
            BoundedJoinSemilattice::bottom(),
        )),
        (CrdtState::TwoPSet(_), ClientOp::Remove(x)) => CrdtState::TwoPSet(PairState::new(
            BoundedJoinSemilattice::bottom(),
            GSetState::insert_delta(x.clone()),
        )),
        _ => panic!("operation {op} not valid for this state"),
    }
}

/// Runs the textbook execution over one schedule; returns final states.
pub fn native_run(
    kind: CrdtKind,
    native: NativeStyle,
    ops: &[(ReplicaId, ClientOp)],
    schedule: &[Timeline],
) -> Vec<CrdtState> {
    let n = schedule.len();
    let members = ReplicaSet::new(n as u32);
    let mut states: Vec<CrdtState> = (0..n).map(|_| CrdtState::bottom(kind)).collect();
    let mut contents: Vec<Option<CrdtState>> = vec![None; ops.len()];
    let mut cursors = vec![0usize; n];

    let apply = |states: &mut Vec<CrdtState>,
                     contents: &mut Vec<Option<CrdtState>>,
                     r: usize,
                     step: &Step| {
        match step {
            Step::Prepare(k) => {
                let (who, op) = &ops[*k];
                match native {
                    NativeStyle::FullState => {
                        let updated = states[r].apply_op(*who, &members, op).unwrap();
                        states[r] = updated.clone();
                        contents[*k] = Some(updated);
                    }
                    NativeStyle::Delta => {
                        let frag = delta_mutate(&states[r], *who, &members, op);
                        states[r] = states[r].join(&frag).unwrap();
                        contents[*k] = Some(frag);
                    }
                }
            }
            Step::Deliver(k) => {
                let msg = contents[*k].as_ref().expect("delivered before prepared");
                states[r] = states[r].join(msg).unwrap();
            }
        }
    };

    for (k, (origin, _)) in ops.iter().enumerate() {
        let r = origin.index();
        loop {
            let step = schedule[r][cursors[r]];
            cursors[r] += 1;
            apply(&mut states, &mut contents, r, &step);
            if step == Step::Prepare(k) {
                break;
            }
        }
    }
    for r in 0..n {
        while cursors[r] < schedule[r].len() {
            let step = schedule[r][cursors[r]];
            cursors[r] += 1;
            apply(&mut states, &mut contents, r, &step);
        }
    }
    states
}

/// Runs the reduction-backed machines over the same schedule; returns final
/// lattice states.
pub fn machine_run(
    kind: CrdtKind,
    style: Style,
    ops: &[(ReplicaId, ClientOp)],
    schedule: &[Timeline],
) -> Vec<CrdtState> {
    let n = schedule.len();
    let members = ReplicaSet::new(n as u32);
    let mut machines: Vec<OpMachine> = (0..n)
        .map(|i| OpMachine::new(kind, style, ReplicaId::new(i as u32), members).unwrap())
        .collect();
    let mut contents = vec![None; ops.len()];
    let mut cursors = vec![0usize; n];

    let apply = |machines: &mut Vec<OpMachine>,
                     contents: &mut Vec<Option<deltasim::message::Message>>,
                     r: usize,
                     step: &Step| {
        match step {
            Step::Prepare(k) => {
                let msg = machines[r].prepare(&ops[*k].1).unwrap();
                machines[r].effect(&msg).unwrap();
                contents[*k] = Some(msg);
            }
            Step::Deliver(k) => {
                let msg = contents[*k].clone().expect("delivered before prepared");
                machines[r].effect(&msg).unwrap();
            }
        }
    };

    for (k, (origin, _)) in ops.iter().enumerate() {
        let r = origin.index();
        loop {
            let step = schedule[r][cursors[r]];
            cursors[r] += 1;
            apply(&mut machines, &mut contents, r, &step);
            if step == Step::Prepare(k) {
                break;
            }
        }
    }
    for r in 0..n {
        while cursors[r] < schedule[r].len() {
            let step = schedule[r][cursors[r]];
            cursors[r] += 1;
            apply(&mut machines, &mut contents, r, &step);
        }
    }
    machines
        .into_iter()
        .map(|m| match m.state() {
            MachineState::Lattice(s) => s.clone(),
            other => panic!("expected a lattice machine, got {other}"),
        })
        .collect()
}

/// Every op sequence of length `len` over the given alphabet.
pub fn op_sequences(
    alphabet: &[(ReplicaId, ClientOp)],
    len: usize,
) -> Vec<Vec<(ReplicaId, ClientOp)>> {
    let mut out: Vec<Vec<(ReplicaId, ClientOp)>> = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::with_capacity(out.len() * alphabet.len());
        for seq in &out {
            for item in alphabet {
                let mut extended = seq.clone();
                extended.push(item.clone());
                next.push(extended);
            }
        }
        out = next;
    }
    out
}
