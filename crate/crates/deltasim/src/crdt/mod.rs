//! Join semi-lattice state CRDTs.
//!
//! Everything in this module is a pure function on immutable values: updates
//! return new states (or fragments) and never mutate their input, so states
//! are safe to copy, diff, and replay. Equality is structural on canonical
//! form — counter maps never hold zero entries and sets are ordered — which
//! makes structural equality coincide with semantic equality, the property
//! the convergence verdicts rely on.

mod counter;
mod gset;
mod lattice;
mod pair;

pub use counter::{CounterUpdate, GCounterState};
pub use gset::GSetState;
pub use lattice::{leq, BoundedJoinSemilattice, JoinSemilattice, PairState};
pub use pair::{PnCounterState, TwoPSetState};

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CrdtError {
    /// The replica is not a member of the fixed replica set.
    #[error("unknown replica {0} (replica set has {1} members)")]
    UnknownReplica(ReplicaId, u32),
    /// A checked 64-bit count or sum overflowed.
    #[error("counter overflow")]
    Overflow,
}

/// Opaque, totally ordered identifier of a replica.
///
/// The order is the numeric order of the index and is stable for the
/// lifetime of a run; vector states are keyed by it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReplicaId(u32);

impl ReplicaId {
    pub const fn new(index: u32) -> Self {
        ReplicaId(index)
    }

    pub const fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// The fixed set of active replicas.
///
/// The set is chosen at scenario start and never changes during execution;
/// membership checks on update operations report [`CrdtError::UnknownReplica`]
/// for identifiers outside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicaSet {
    count: u32,
}

impl ReplicaSet {
    pub fn new(count: u32) -> Self {
        ReplicaSet { count }
    }

    pub fn len(&self) -> usize {
        self.count as usize
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn contains(&self, id: ReplicaId) -> bool {
        id.0 < self.count
    }

    pub fn iter(&self) -> impl Iterator<Item = ReplicaId> {
        (0..self.count).map(ReplicaId)
    }

    pub fn require(&self, id: ReplicaId) -> Result<(), CrdtError> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(CrdtError::UnknownReplica(id, self.count))
        }
    }
}
