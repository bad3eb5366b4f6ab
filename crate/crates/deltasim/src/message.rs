//! Dynamically-typed states, delta fragments, and wire messages.
//!
//! The lattice types in [`crate::crdt`] are plain values; scenarios pick one
//! of four CRDTs and one of four wire styles at runtime, so the simulator,
//! checker, and CLI work over the closed enums here. Set elements are opaque
//! strings at this boundary.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::antientropy::DeltaInterval;
use crate::crdt::{
    BoundedJoinSemilattice, CounterUpdate, CrdtError, GCounterState, GSetState, JoinSemilattice,
    PairState, PnCounterState, ReplicaId, ReplicaSet, TwoPSetState,
};

/// Which replicated object a scenario runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CrdtKind {
    GCounter,
    GSet,
    PnCounter,
    TwoPSet,
}

impl CrdtKind {
    pub const ALL: [CrdtKind; 4] = [
        CrdtKind::GCounter,
        CrdtKind::GSet,
        CrdtKind::PnCounter,
        CrdtKind::TwoPSet,
    ];
}

impl fmt::Display for CrdtKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CrdtKind::GCounter => "gcounter",
            CrdtKind::GSet => "gset",
            CrdtKind::PnCounter => "pncounter",
            CrdtKind::TwoPSet => "twopset",
        };
        f.write_str(s)
    }
}

impl FromStr for CrdtKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gcounter" => Ok(CrdtKind::GCounter),
            "gset" => Ok(CrdtKind::GSet),
            "pncounter" => Ok(CrdtKind::PnCounter),
            "twopset" => Ok(CrdtKind::TwoPSet),
            other => Err(format!("unknown crdt kind `{other}`")),
        }
    }
}

/// How updates travel between replicas.
///
/// `State` ships the full updated state, `Delta` ships state-typed fragments,
/// `DeltaRefined` ships the compact per-update encodings, and `Op` runs the
/// native op-based machine (counter and set only).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    State,
    Op,
    Delta,
    DeltaRefined,
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Style::State => "state",
            Style::Op => "op",
            Style::Delta => "delta",
            Style::DeltaRefined => "delta-refined",
        };
        f.write_str(s)
    }
}

impl FromStr for Style {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "state" => Ok(Style::State),
            "op" => Ok(Style::Op),
            "delta" => Ok(Style::Delta),
            "delta-refined" => Ok(Style::DeltaRefined),
            other => Err(format!("unknown style `{other}`")),
        }
    }
}

/// A client-issued update.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ClientOp {
    Inc,
    Dec,
    Insert(String),
    Add(String),
    Remove(String),
}

impl ClientOp {
    /// Whether this operation is meaningful for the given CRDT.
    pub fn valid_for(&self, kind: CrdtKind) -> bool {
        matches!(
            (kind, self),
            (CrdtKind::GCounter, ClientOp::Inc)
                | (CrdtKind::PnCounter, ClientOp::Inc)
                | (CrdtKind::PnCounter, ClientOp::Dec)
                | (CrdtKind::GSet, ClientOp::Insert(_))
                | (CrdtKind::TwoPSet, ClientOp::Add(_))
                | (CrdtKind::TwoPSet, ClientOp::Remove(_))
        )
    }
}

impl fmt::Display for ClientOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClientOp::Inc => write!(f, "inc"),
            ClientOp::Dec => write!(f, "dec"),
            ClientOp::Insert(x) => write!(f, "insert {x}"),
            ClientOp::Add(x) => write!(f, "add {x}"),
            ClientOp::Remove(x) => write!(f, "remove {x}"),
        }
    }
}

/// A lattice state of any of the four CRDTs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum CrdtState {
    GCounter(GCounterState),
    GSet(GSetState<String>),
    PnCounter(PnCounterState),
    TwoPSet(TwoPSetState<String>),
}

impl CrdtState {
    pub fn bottom(kind: CrdtKind) -> Self {
        match kind {
            CrdtKind::GCounter => CrdtState::GCounter(GCounterState::bottom()),
            CrdtKind::GSet => CrdtState::GSet(GSetState::bottom()),
            CrdtKind::PnCounter => CrdtState::PnCounter(PnCounterState::bottom()),
            CrdtKind::TwoPSet => CrdtState::TwoPSet(TwoPSetState::bottom()),
        }
    }

    pub fn kind(&self) -> CrdtKind {
        match self {
            CrdtState::GCounter(_) => CrdtKind::GCounter,
            CrdtState::GSet(_) => CrdtKind::GSet,
            CrdtState::PnCounter(_) => CrdtKind::PnCounter,
            CrdtState::TwoPSet(_) => CrdtKind::TwoPSet,
        }
    }

    /// Join with a state of the same kind.
    pub fn join(&self, other: &CrdtState) -> Result<CrdtState, StateMismatch> {
        match (self, other) {
            (CrdtState::GCounter(a), CrdtState::GCounter(b)) => {
                Ok(CrdtState::GCounter(a.join(b)))
            }
            (CrdtState::GSet(a), CrdtState::GSet(b)) => Ok(CrdtState::GSet(a.join(b))),
            (CrdtState::PnCounter(a), CrdtState::PnCounter(b)) => {
                Ok(CrdtState::PnCounter(a.join(b)))
            }
            (CrdtState::TwoPSet(a), CrdtState::TwoPSet(b)) => Ok(CrdtState::TwoPSet(a.join(b))),
            _ => Err(StateMismatch {
                expected: self.kind(),
                got: other.kind(),
            }),
        }
    }

    /// The client-visible readout of the state.
    pub fn query(&self) -> Result<QueryValue, CrdtError> {
        Ok(match self {
            CrdtState::GCounter(s) => QueryValue::Count(s.query()?),
            CrdtState::GSet(s) => QueryValue::Elements(s.elements().clone()),
            CrdtState::PnCounter(s) => QueryValue::Int(s.query()?),
            CrdtState::TwoPSet(s) => QueryValue::Elements(s.live_elements()),
        })
    }

    /// Full-state update for a client operation; the returned value is the
    /// whole updated state.
    pub fn apply_op(
        &self,
        who: ReplicaId,
        members: &ReplicaSet,
        op: &ClientOp,
    ) -> Result<CrdtState, CrdtError> {
        match (self, op) {
            (CrdtState::GCounter(s), ClientOp::Inc) => Ok(CrdtState::GCounter(s.inc(who, members)?)),
            (CrdtState::PnCounter(s), ClientOp::Inc) => {
                Ok(CrdtState::PnCounter(s.inc(who, members)?))
            }
            (CrdtState::PnCounter(s), ClientOp::Dec) => {
                Ok(CrdtState::PnCounter(s.dec(who, members)?))
            }
            (CrdtState::GSet(s), ClientOp::Insert(x)) => Ok(CrdtState::GSet(s.insert(x.clone()))),
            (CrdtState::TwoPSet(s), ClientOp::Add(x)) => Ok(CrdtState::TwoPSet(s.add(x.clone()))),
            (CrdtState::TwoPSet(s), ClientOp::Remove(x)) => {
                Ok(CrdtState::TwoPSet(s.remove(x.clone())))
            }
            _ => panic!("operation {op} is not valid for {}", self.kind()),
        }
    }
}

impl fmt::Display for CrdtState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrdtState::GCounter(s) => write!(f, "{s}"),
            CrdtState::GSet(s) => write!(f, "{s}"),
            CrdtState::PnCounter(s) => write!(f, "({},{})", s.left, s.right),
            CrdtState::TwoPSet(s) => write!(f, "({},{})", s.left, s.right),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("state kind mismatch: expected {expected}, got {got}")]
pub struct StateMismatch {
    pub expected: CrdtKind,
    pub got: CrdtKind,
}

/// A delta fragment in either encoding.
///
/// A single delta-mutator produces a singleton map (counter), a singleton set
/// (set), a `(replica, count)` pair or bare element (refined encodings), or a
/// pair of component fragments for the composed CRDTs with the untouched side
/// absent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum DeltaFragment {
    Counter(GCounterState),
    CounterRefined(CounterUpdate),
    Set(GSetState<String>),
    SetRefined(String),
    Pair {
        left: Option<Box<DeltaFragment>>,
        right: Option<Box<DeltaFragment>>,
    },
}

impl DeltaFragment {
    /// Embeds the fragment into the state lattice of `kind` so it can be
    /// joined. Refined encodings expand to their singleton-state form.
    pub fn to_state(&self, kind: CrdtKind) -> Result<CrdtState, StateMismatch> {
        let got_kind = |frag: &DeltaFragment| match frag {
            DeltaFragment::Counter(_) | DeltaFragment::CounterRefined(_) => CrdtKind::GCounter,
            DeltaFragment::Set(_) | DeltaFragment::SetRefined(_) => CrdtKind::GSet,
            DeltaFragment::Pair { .. } => CrdtKind::PnCounter,
        };
        let mismatch = || StateMismatch {
            expected: kind,
            got: got_kind(self),
        };
        match (kind, self) {
            (CrdtKind::GCounter, DeltaFragment::Counter(s)) => Ok(CrdtState::GCounter(s.clone())),
            (CrdtKind::GCounter, DeltaFragment::CounterRefined(u)) => {
                Ok(CrdtState::GCounter(u.to_state()))
            }
            (CrdtKind::GSet, DeltaFragment::Set(s)) => Ok(CrdtState::GSet(s.clone())),
            (CrdtKind::GSet, DeltaFragment::SetRefined(x)) => {
                Ok(CrdtState::GSet(GSetState::insert_delta(x.clone())))
            }
            (CrdtKind::PnCounter, DeltaFragment::Pair { left, right }) => {
                let side = |frag: &Option<Box<DeltaFragment>>| -> Result<GCounterState, StateMismatch> {
                    match frag {
                        None => Ok(GCounterState::bottom()),
                        Some(inner) => match inner.to_state(CrdtKind::GCounter)? {
                            CrdtState::GCounter(s) => Ok(s),
                            _ => unreachable!(),
                        },
                    }
                };
                Ok(CrdtState::PnCounter(PairState::new(side(left)?, side(right)?)))
            }
            (CrdtKind::TwoPSet, DeltaFragment::Pair { left, right }) => {
                let side = |frag: &Option<Box<DeltaFragment>>| -> Result<GSetState<String>, StateMismatch> {
                    match frag {
                        None => Ok(GSetState::bottom()),
                        Some(inner) => match inner.to_state(CrdtKind::GSet)? {
                            CrdtState::GSet(s) => Ok(s),
                            _ => unreachable!(),
                        },
                    }
                };
                Ok(CrdtState::TwoPSet(PairState::new(side(left)?, side(right)?)))
            }
            _ => Err(mismatch()),
        }
    }
}

impl fmt::Display for DeltaFragment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaFragment::Counter(s) => write!(f, "{s}"),
            DeltaFragment::CounterRefined(u) => write!(f, "{u}"),
            DeltaFragment::Set(s) => write!(f, "{s}"),
            DeltaFragment::SetRefined(x) => write!(f, "{x}"),
            DeltaFragment::Pair { left, right } => {
                let side = |f: &mut fmt::Formatter<'_>, s: &Option<Box<DeltaFragment>>| match s {
                    None => write!(f, "_"),
                    Some(inner) => write!(f, "{inner}"),
                };
                write!(f, "(")?;
                side(f, left)?;
                write!(f, ",")?;
                side(f, right)?;
                write!(f, ")")
            }
        }
    }
}

/// Native op-based operation representations.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum NativeOp {
    /// Increment sentinel for the scalar op-based counter.
    Inc,
    /// Tagged insertion for the op-based set.
    Insert(String),
}

impl fmt::Display for NativeOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NativeOp::Inc => write!(f, "inc"),
            NativeOp::Insert(x) => write!(f, "ins({x})"),
        }
    }
}

/// Tagged payload carried by the simulator.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Message {
    /// Full updated state (the wire form of state-style machines).
    State(CrdtState),
    /// Delta fragment in either encoding.
    Delta(DeltaFragment),
    /// Native op-based operation representation.
    Op(NativeOp),
    /// Anti-entropy full-state sync. `upto` is the origin's local update
    /// sequence watermark at send time; it lets receivers advance their
    /// per-origin progress map, since joining this state covers every update
    /// below the watermark.
    FullState { upto: u64, state: CrdtState },
    /// Anti-entropy delta-interval sync.
    Interval(DeltaInterval),
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::State(s) => write!(f, "STATE {s}"),
            Message::Delta(d) => write!(f, "DELTA {d}"),
            Message::Op(op) => write!(f, "OP {op}"),
            Message::FullState { state, .. } => write!(f, "FULLSTATE {state}"),
            Message::Interval(iv) => {
                write!(f, "INTERVAL {} {} {} {}", iv.origin, iv.a, iv.b, iv.value)
            }
        }
    }
}

/// Client-visible readouts, comparable across replicas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryValue {
    Count(u64),
    Int(i64),
    Elements(BTreeSet<String>),
}

impl fmt::Display for QueryValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryValue::Count(n) => write!(f, "{n}"),
            QueryValue::Int(n) => write!(f, "{n}"),
            QueryValue::Elements(xs) => {
                write!(f, "{{")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "}}")
            }
        }
    }
}
