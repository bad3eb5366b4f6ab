//! Reductions from state-typed CRDTs to op-based machines.
//!
//! An op-based machine exchanges prepared operation representations through a
//! side-effect-free `prepare` phase and a (partial) `effect` phase. Any join
//! semi-lattice CRDT reduces to such a machine two ways:
//!
//! - state as operation: `prepare` returns the full updated state and
//!   `effect` joins it into the receiver (style [`Style::State`]);
//! - delta as operation: `prepare` emits only the delta fragment and
//!   `effect` is the pseudo-join of the current state with the fragment
//!   (styles [`Style::Delta`] and [`Style::DeltaRefined`]).
//!
//! Both reductions tolerate dropped, reordered, delayed, and duplicated
//! messages, so their delivery mode is [`DeliveryMode::Relaxed`]. The native
//! op-based machines ([`Style::Op`]) are different: their effects are not
//! idempotent, so they require causal at-most-once delivery and exist here to
//! make the duplicated-message safety violation demonstrable.

use std::fmt;

use thiserror::Error;

use crate::crdt::{
    leq, BoundedJoinSemilattice, CounterUpdate, CrdtError, GCounterState, GSetState, ReplicaId,
    ReplicaSet,
};
use crate::message::{
    ClientOp, CrdtKind, CrdtState, DeltaFragment, Message, NativeOp, QueryValue, StateMismatch,
    Style,
};

/// Delivery guarantees a machine needs from the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryMode {
    /// Drop, reorder, delay, duplicate all tolerated.
    Relaxed,
    /// Causal order and at-most-once delivery.
    CausalAtMostOnce,
}

impl fmt::Display for DeliveryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeliveryMode::Relaxed => write!(f, "relaxed"),
            DeliveryMode::CausalAtMostOnce => write!(f, "causal"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReduceError {
    #[error("style {style} is not available for {kind}")]
    UnsupportedStyle { kind: CrdtKind, style: Style },
    #[error("operation `{op}` is not valid for {kind}")]
    InvalidOp { kind: CrdtKind, op: ClientOp },
    #[error("first state is not dominated by the second")]
    NotDominated,
    #[error("delta between equal states is undefined")]
    EqualStates,
    #[error(transparent)]
    Crdt(#[from] CrdtError),
}

/// The partial effect relation failed: the machine cannot incorporate the
/// message. In a simulation this marks the replica crashed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EffectError {
    #[error("payload does not fit this machine: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Crdt(#[from] CrdtError),
}

/// The internal state of a machine: a lattice value for the reduced styles,
/// or the native op-based representations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MachineState {
    Lattice(CrdtState),
    /// Native op-based counter: the number of increment effects applied.
    OpCounter(u64),
    /// Native op-based set.
    OpSet(GSetState<String>),
}

impl fmt::Display for MachineState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MachineState::Lattice(s) => write!(f, "{s}"),
            MachineState::OpCounter(n) => write!(f, "{n}"),
            MachineState::OpSet(s) => write!(f, "{s}"),
        }
    }
}

/// An op-based machine: one replica's state plus its prepare/effect behavior.
///
/// `prepare` never mutates the machine; the local application happens when
/// the simulator delivers the broadcast locally, mirroring remote delivery.
#[derive(Debug, Clone)]
pub struct OpMachine {
    id: ReplicaId,
    members: ReplicaSet,
    kind: CrdtKind,
    style: Style,
    state: MachineState,
}

impl OpMachine {
    pub fn new(
        kind: CrdtKind,
        style: Style,
        id: ReplicaId,
        members: ReplicaSet,
    ) -> Result<Self, ReduceError> {
        let state = match style {
            Style::State | Style::Delta | Style::DeltaRefined => {
                MachineState::Lattice(CrdtState::bottom(kind))
            }
            Style::Op => match kind {
                CrdtKind::GCounter => MachineState::OpCounter(0),
                CrdtKind::GSet => MachineState::OpSet(GSetState::bottom()),
                _ => return Err(ReduceError::UnsupportedStyle { kind, style }),
            },
        };
        Ok(OpMachine {
            id,
            members,
            kind,
            style,
            state,
        })
    }

    pub fn id(&self) -> ReplicaId {
        self.id
    }

    pub fn kind(&self) -> CrdtKind {
        self.kind
    }

    pub fn style(&self) -> Style {
        self.style
    }

    pub fn state(&self) -> &MachineState {
        &self.state
    }

    /// The lattice state, when this machine has one.
    pub fn lattice_state(&self) -> Option<&CrdtState> {
        match &self.state {
            MachineState::Lattice(s) => Some(s),
            _ => None,
        }
    }

    pub fn delivery_mode(&self) -> DeliveryMode {
        match self.style {
            Style::Op => DeliveryMode::CausalAtMostOnce,
            _ => DeliveryMode::Relaxed,
        }
    }

    /// Prepare phase: computes the message representing `op` against the
    /// current state, without applying it.
    pub fn prepare(&self, op: &ClientOp) -> Result<Message, ReduceError> {
        if !op.valid_for(self.kind) {
            return Err(ReduceError::InvalidOp {
                kind: self.kind,
                op: op.clone(),
            });
        }
        let who = self.id;
        let members = &self.members;
        match (&self.state, self.style) {
            (MachineState::Lattice(s), Style::State) => {
                Ok(Message::State(s.apply_op(who, members, op)?))
            }
            (MachineState::Lattice(s), Style::Delta) => {
                let frag = match (s, op) {
                    (CrdtState::GCounter(c), ClientOp::Inc) => {
                        DeltaFragment::Counter(c.inc_delta(who, members)?)
                    }
                    (CrdtState::GSet(_), ClientOp::Insert(x)) => {
                        DeltaFragment::Set(GSetState::insert_delta(x.clone()))
                    }
                    (CrdtState::PnCounter(c), ClientOp::Inc) => DeltaFragment::Pair {
                        left: Some(Box::new(DeltaFragment::Counter(
                            c.pos().inc_delta(who, members)?,
                        ))),
                        right: None,
                    },
                    (CrdtState::PnCounter(c), ClientOp::Dec) => DeltaFragment::Pair {
                        left: None,
                        right: Some(Box::new(DeltaFragment::Counter(
                            c.neg().inc_delta(who, members)?,
                        ))),
                    },
                    (CrdtState::TwoPSet(_), ClientOp::Add(x)) => DeltaFragment::Pair {
                        left: Some(Box::new(DeltaFragment::Set(GSetState::insert_delta(
                            x.clone(),
                        )))),
                        right: None,
                    },
                    (CrdtState::TwoPSet(_), ClientOp::Remove(x)) => DeltaFragment::Pair {
                        left: None,
                        right: Some(Box::new(DeltaFragment::Set(GSetState::insert_delta(
                            x.clone(),
                        )))),
                    },
                    _ => unreachable!("validated above"),
                };
                Ok(Message::Delta(frag))
            }
            (MachineState::Lattice(s), Style::DeltaRefined) => {
                let frag = match (s, op) {
                    (CrdtState::GCounter(c), ClientOp::Inc) => {
                        DeltaFragment::CounterRefined(c.inc_refined(who, members)?)
                    }
                    (CrdtState::GSet(_), ClientOp::Insert(x)) => {
                        DeltaFragment::SetRefined(x.clone())
                    }
                    (CrdtState::PnCounter(c), ClientOp::Inc) => DeltaFragment::Pair {
                        left: Some(Box::new(DeltaFragment::CounterRefined(
                            c.pos().inc_refined(who, members)?,
                        ))),
                        right: None,
                    },
                    (CrdtState::PnCounter(c), ClientOp::Dec) => DeltaFragment::Pair {
                        left: None,
                        right: Some(Box::new(DeltaFragment::CounterRefined(
                            c.neg().inc_refined(who, members)?,
                        ))),
                    },
                    (CrdtState::TwoPSet(_), ClientOp::Add(x)) => DeltaFragment::Pair {
                        left: Some(Box::new(DeltaFragment::SetRefined(x.clone()))),
                        right: None,
                    },
                    (CrdtState::TwoPSet(_), ClientOp::Remove(x)) => DeltaFragment::Pair {
                        left: None,
                        right: Some(Box::new(DeltaFragment::SetRefined(x.clone()))),
                    },
                    _ => unreachable!("validated above"),
                };
                Ok(Message::Delta(frag))
            }
            (MachineState::OpCounter(_), Style::Op) => Ok(Message::Op(NativeOp::Inc)),
            (MachineState::OpSet(_), Style::Op) => match op {
                ClientOp::Insert(x) => Ok(Message::Op(NativeOp::Insert(x.clone()))),
                _ => unreachable!("validated above"),
            },
            _ => unreachable!("state/style pairing fixed at construction"),
        }
    }

    /// Effect phase: incorporates a delivered message into the state.
    ///
    /// For the reduced styles this is a join (idempotent); for the native
    /// machines it applies the operation (not idempotent).
    pub fn effect(&mut self, msg: &Message) -> Result<(), EffectError> {
        match (&mut self.state, msg) {
            (MachineState::Lattice(s), Message::State(other)) => {
                *s = s.join(other).map_err(mismatch)?;
                Ok(())
            }
            (MachineState::Lattice(s), Message::Delta(frag)) => {
                let embedded = frag.to_state(s.kind()).map_err(mismatch)?;
                *s = s.join(&embedded).map_err(mismatch)?;
                Ok(())
            }
            (MachineState::Lattice(s), Message::FullState { state, .. }) => {
                *s = s.join(state).map_err(mismatch)?;
                Ok(())
            }
            (MachineState::Lattice(s), Message::Interval(iv)) => {
                *s = s.join(&iv.value).map_err(mismatch)?;
                Ok(())
            }
            (MachineState::OpCounter(n), Message::Op(NativeOp::Inc)) => {
                *n = n.checked_add(1).ok_or(CrdtError::Overflow)?;
                Ok(())
            }
            (MachineState::OpSet(s), Message::Op(NativeOp::Insert(x))) => {
                *s = s.insert(x.clone());
                Ok(())
            }
            (state, msg) => Err(EffectError::Mismatch(format!(
                "machine state `{state}` cannot apply `{msg}`"
            ))),
        }
    }

    /// Joins a bare lattice state into the machine (anti-entropy path).
    pub fn merge_state(&mut self, other: &CrdtState) -> Result<(), EffectError> {
        match &mut self.state {
            MachineState::Lattice(s) => {
                *s = s.join(other).map_err(mismatch)?;
                Ok(())
            }
            state => Err(EffectError::Mismatch(format!(
                "machine state `{state}` cannot merge a lattice state"
            ))),
        }
    }

    /// Client-visible readout.
    pub fn query(&self) -> Result<QueryValue, CrdtError> {
        match &self.state {
            MachineState::Lattice(s) => s.query(),
            MachineState::OpCounter(n) => Ok(QueryValue::Count(*n)),
            MachineState::OpSet(s) => Ok(QueryValue::Elements(s.elements().clone())),
        }
    }
}

fn mismatch(err: StateMismatch) -> EffectError {
    EffectError::Mismatch(err.to_string())
}

/// Delta fragment between two comparable set states: `next \ prev`.
///
/// Defined whenever `prev ⊑ next`; reapplying the fragment to `prev`
/// reconstructs `next` exactly.
pub fn gset_delta<T: Ord + Clone>(
    prev: &GSetState<T>,
    next: &GSetState<T>,
) -> Result<GSetState<T>, ReduceError> {
    if !leq(prev, next) {
        return Err(ReduceError::NotDominated);
    }
    Ok(next.difference(prev))
}

/// Refined delta fragment between two comparable counter states: the pair
/// `(i, next[i])` for the smallest replica id whose count differs.
///
/// Undefined for equal states; after a single delta-mutation exactly one
/// index differs, so the minimum is that index.
pub fn gcounter_delta(
    prev: &GCounterState,
    next: &GCounterState,
) -> Result<CounterUpdate, ReduceError> {
    if !leq(prev, next) {
        return Err(ReduceError::NotDominated);
    }
    for (id, count) in next.entries() {
        if prev.get(id) != count {
            return Ok(CounterUpdate { who: id, count });
        }
    }
    Err(ReduceError::EqualStates)
}
