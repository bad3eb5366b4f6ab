//! Composed CRDTs built from the product lattice.
//!
//! The PN-Counter pairs two grow-only counters (increments, decrements); the
//! 2P-Set pairs two grow-only sets (added, removed). Both inherit bottom and
//! join from [`PairState`] componentwise, and each delta-mutator fills in
//! only the side it touches, leaving the other side at bottom.

use std::collections::BTreeSet;

use super::counter::GCounterState;
use super::gset::GSetState;
use super::lattice::{BoundedJoinSemilattice, PairState};
use super::{CrdtError, ReplicaId, ReplicaSet};

/// Positive/negative counter: `query = sum(pos) - sum(neg)`, may be negative.
pub type PnCounterState = PairState<GCounterState, GCounterState>;

impl PnCounterState {
    pub fn pos(&self) -> &GCounterState {
        &self.left
    }

    pub fn neg(&self) -> &GCounterState {
        &self.right
    }

    pub fn query(&self) -> Result<i64, CrdtError> {
        let pos = self.left.query()?;
        let neg = self.right.query()?;
        let diff = (pos as i128) - (neg as i128);
        i64::try_from(diff).map_err(|_| CrdtError::Overflow)
    }

    pub fn inc(&self, who: ReplicaId, members: &ReplicaSet) -> Result<Self, CrdtError> {
        Ok(PairState::new(self.left.inc(who, members)?, self.right.clone()))
    }

    pub fn dec(&self, who: ReplicaId, members: &ReplicaSet) -> Result<Self, CrdtError> {
        Ok(PairState::new(self.left.clone(), self.right.inc(who, members)?))
    }

    /// Delta for an increment: the positive side carries a singleton map,
    /// the negative side stays at bottom.
    pub fn inc_delta(&self, who: ReplicaId, members: &ReplicaSet) -> Result<Self, CrdtError> {
        Ok(PairState::new(
            self.left.inc_delta(who, members)?,
            GCounterState::bottom(),
        ))
    }

    /// Delta for a decrement: dually, only the negative side is populated.
    pub fn dec_delta(&self, who: ReplicaId, members: &ReplicaSet) -> Result<Self, CrdtError> {
        Ok(PairState::new(
            GCounterState::bottom(),
            self.right.inc_delta(who, members)?,
        ))
    }
}

/// Two-phase set: membership is `x ∈ added ∧ x ∉ removed`. Both components
/// grow monotonically, so a removed element can never come back.
pub type TwoPSetState<T> = PairState<GSetState<T>, GSetState<T>>;

impl<T: Ord + Clone> TwoPSetState<T> {
    pub fn added(&self) -> &GSetState<T> {
        &self.left
    }

    pub fn removed(&self) -> &GSetState<T> {
        &self.right
    }

    pub fn contains(&self, x: &T) -> bool {
        self.left.contains(x) && !self.right.contains(x)
    }

    /// The live membership readout: `added \ removed`.
    pub fn live_elements(&self) -> BTreeSet<T> {
        self.left
            .iter()
            .filter(|x| !self.right.contains(x))
            .cloned()
            .collect()
    }

    pub fn add(&self, x: T) -> Self {
        PairState::new(self.left.insert(x), self.right.clone())
    }

    pub fn remove(&self, x: T) -> Self {
        PairState::new(self.left.clone(), self.right.insert(x))
    }

    pub fn add_delta(x: T) -> Self {
        PairState::new(GSetState::insert_delta(x), GSetState::bottom())
    }

    pub fn remove_delta(x: T) -> Self {
        PairState::new(GSetState::bottom(), GSetState::insert_delta(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crdt::JoinSemilattice;

    fn r(i: u32) -> ReplicaId {
        ReplicaId::new(i)
    }

    #[test]
    fn pn_inc_then_dec_queries_zero() {
        let m = ReplicaSet::new(2);
        let bot = PnCounterState::bottom();
        let inc = bot.inc_delta(r(1), &m).unwrap();
        let after_inc = bot.join(&inc);
        let dec = after_inc.dec_delta(r(1), &m).unwrap();
        let after_dec = after_inc.join(&dec);
        assert_eq!(after_dec.query().unwrap(), 0);
    }

    #[test]
    fn pn_inc_delta_has_empty_negative_side() {
        let m = ReplicaSet::new(2);
        let frag = PnCounterState::bottom().inc_delta(r(1), &m).unwrap();
        assert_eq!(frag.left, GCounterState::from_counts([(r(1), 1)]));
        assert!(frag.right.is_empty());
        let dual = PnCounterState::bottom().dec_delta(r(1), &m).unwrap();
        assert!(dual.left.is_empty());
        assert_eq!(dual.right, GCounterState::from_counts([(r(1), 1)]));
    }

    #[test]
    fn pn_query_may_be_negative() {
        let m = ReplicaSet::new(1);
        let s = PnCounterState::bottom()
            .dec(r(0), &m)
            .unwrap()
            .dec(r(0), &m)
            .unwrap();
        assert_eq!(s.query().unwrap(), -2);
    }

    #[test]
    fn twopset_removal_wins_in_any_delivery_order() {
        // add x, remove x, add x: whatever order the three fragments are
        // joined in, membership ends up false.
        let add1 = TwoPSetState::add_delta("x");
        let rem = TwoPSetState::remove_delta("x");
        let add2 = TwoPSetState::add_delta("x");
        let frags = [add1, rem, add2];
        let orders: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for order in orders {
            let mut s = TwoPSetState::bottom();
            for i in order {
                s = s.join(&frags[i]);
            }
            assert!(!s.contains(&"x"), "removed element resurfaced");
            assert!(s.live_elements().is_empty());
        }
    }

    #[test]
    fn twopset_components_only_grow() {
        let s = TwoPSetState::bottom().add("a").remove("a");
        assert_eq!(s.added().len(), 1);
        assert_eq!(s.removed().len(), 1);
        assert!(!s.contains(&"a"));
        // A later add cannot shrink the removed side.
        let s = s.add("a");
        assert!(!s.contains(&"a"));
    }
}
