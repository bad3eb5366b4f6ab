//! Join semi-lattice traits and the product lattice.

/// A join semi-lattice: `join` is commutative, associative, and idempotent.
///
/// The derived partial order is `a ⊑ b  iff  join(a, b) == b`; see [`leq`].
pub trait JoinSemilattice {
    fn join(&self, other: &Self) -> Self;
}

/// A lattice with a least element that is the identity of `join`.
pub trait BoundedJoinSemilattice: JoinSemilattice {
    fn bottom() -> Self;
}

/// The partial order induced by the join: `a ⊑ b` iff `a ⊔ b = b`.
pub fn leq<T: JoinSemilattice + PartialEq>(a: &T, b: &T) -> bool {
    &a.join(b) == b
}

/// Product of two lattices: componentwise bottom and join.
///
/// Composing two delta-state CRDTs this way yields another delta-state CRDT
/// whose fragments are pairs of component fragments; the query is supplied by
/// the concrete composition (difference of sums for the PN-Counter, membership
/// minus removals for the 2P-Set).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairState<L, R> {
    pub left: L,
    pub right: R,
}

impl<L, R> PairState<L, R> {
    pub fn new(left: L, right: R) -> Self {
        PairState { left, right }
    }
}

impl<L: JoinSemilattice, R: JoinSemilattice> JoinSemilattice for PairState<L, R> {
    fn join(&self, other: &Self) -> Self {
        PairState {
            left: self.left.join(&other.left),
            right: self.right.join(&other.right),
        }
    }
}

impl<L: BoundedJoinSemilattice, R: BoundedJoinSemilattice> BoundedJoinSemilattice
    for PairState<L, R>
{
    fn bottom() -> Self {
        PairState {
            left: L::bottom(),
            right: R::bottom(),
        }
    }
}
