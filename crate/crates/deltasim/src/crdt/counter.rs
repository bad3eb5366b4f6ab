//! Grow-only counter.
//!
//! The state is a partial map from replica id to the number of increments
//! performed at that replica. An absent key means "no increments known", so
//! the map is kept canonical: no entry is ever zero, and the bottom state is
//! the empty map. The join takes the key-wise maximum over the union of
//! domains, where a present value always beats an absent one.

use std::collections::BTreeMap;
use std::fmt;

use super::lattice::{BoundedJoinSemilattice, JoinSemilattice};
use super::{CrdtError, ReplicaId, ReplicaSet};

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GCounterState {
    entries: BTreeMap<ReplicaId, u64>,
}

impl GCounterState {
    /// The bottom state: no increments known anywhere.
    pub fn new() -> Self {
        GCounterState::default()
    }

    /// Builds a state from raw counts; zero entries are dropped so the
    /// result is canonical.
    pub fn from_counts<I: IntoIterator<Item = (ReplicaId, u64)>>(counts: I) -> Self {
        GCounterState {
            entries: counts.into_iter().filter(|&(_, n)| n > 0).collect(),
        }
    }

    /// Count known for `id`; absent keys read as zero.
    pub fn get(&self, id: ReplicaId) -> u64 {
        self.entries.get(&id).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (ReplicaId, u64)> + '_ {
        self.entries.iter().map(|(&id, &n)| (id, n))
    }

    /// Sum of all present counts; zero for the empty map.
    pub fn query(&self) -> Result<u64, CrdtError> {
        let mut total: u64 = 0;
        for &n in self.entries.values() {
            total = total.checked_add(n).ok_or(CrdtError::Overflow)?;
        }
        Ok(total)
    }

    /// Full-state update: `who`'s entry incremented by one, everything else
    /// unchanged. Returns the whole updated state.
    pub fn inc(&self, who: ReplicaId, members: &ReplicaSet) -> Result<Self, CrdtError> {
        members.require(who)?;
        let next = self.get(who).checked_add(1).ok_or(CrdtError::Overflow)?;
        let mut entries = self.entries.clone();
        entries.insert(who, next);
        Ok(GCounterState { entries })
    }

    /// Delta-mutator: the singleton map `{who -> count+1}`. The receiver
    /// joins the fragment, which is equivalent to receiving the full updated
    /// state because the join maximizes key-wise over the union of domains.
    pub fn inc_delta(&self, who: ReplicaId, members: &ReplicaSet) -> Result<Self, CrdtError> {
        members.require(who)?;
        let next = self.get(who).checked_add(1).ok_or(CrdtError::Overflow)?;
        Ok(GCounterState::from_counts([(who, next)]))
    }

    /// Refined delta encoding: the pair `(who, count+1)` instead of a
    /// singleton map.
    pub fn inc_refined(
        &self,
        who: ReplicaId,
        members: &ReplicaSet,
    ) -> Result<CounterUpdate, CrdtError> {
        members.require(who)?;
        let next = self.get(who).checked_add(1).ok_or(CrdtError::Overflow)?;
        Ok(CounterUpdate { who, count: next })
    }
}

impl JoinSemilattice for GCounterState {
    fn join(&self, other: &Self) -> Self {
        let mut entries = self.entries.clone();
        for (&id, &n) in &other.entries {
            entries
                .entry(id)
                .and_modify(|m| *m = (*m).max(n))
                .or_insert(n);
        }
        GCounterState { entries }
    }
}

impl BoundedJoinSemilattice for GCounterState {
    fn bottom() -> Self {
        GCounterState::new()
    }
}

impl fmt::Display for GCounterState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (id, n)) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{id}:{n}")?;
        }
        write!(f, "}}")
    }
}

/// Refined counter delta: the identifier of the updated replica paired with
/// the count it reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CounterUpdate {
    pub who: ReplicaId,
    pub count: u64,
}

impl CounterUpdate {
    /// Embeds the refined update back into the state lattice: a map defined
    /// only for `who`.
    pub fn to_state(self) -> GCounterState {
        GCounterState::from_counts([(self.who, self.count)])
    }
}

impl fmt::Display for CounterUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.who, self.count)
    }
}
