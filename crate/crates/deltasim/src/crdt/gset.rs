//! Grow-only set.
//!
//! A finite set of opaque elements that only ever grows; the join is set
//! union and the bottom is the empty set. Elements are generic in the
//! library; the scenario layer instantiates them at `String`.

use std::collections::BTreeSet;
use std::fmt;

use super::lattice::{BoundedJoinSemilattice, JoinSemilattice};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GSetState<T: Ord + Clone> {
    elements: BTreeSet<T>,
}

impl<T: Ord + Clone> Default for GSetState<T> {
    fn default() -> Self {
        GSetState {
            elements: BTreeSet::new(),
        }
    }
}

impl<T: Ord + Clone> GSetState<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_elements<I: IntoIterator<Item = T>>(elements: I) -> Self {
        GSetState {
            elements: elements.into_iter().collect(),
        }
    }

    /// Membership query.
    pub fn contains(&self, x: &T) -> bool {
        self.elements.contains(x)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.elements.iter()
    }

    pub fn elements(&self) -> &BTreeSet<T> {
        &self.elements
    }

    /// Full-state update: `self ∪ {x}`.
    pub fn insert(&self, x: T) -> Self {
        let mut elements = self.elements.clone();
        elements.insert(x);
        GSetState { elements }
    }

    /// Delta-mutator: the singleton `{x}`; the state argument is ignored.
    /// Joining the fragment into any state equals the full-state insert.
    pub fn insert_delta(x: T) -> Self {
        GSetState {
            elements: BTreeSet::from([x]),
        }
    }

    /// Set difference, used when deriving delta fragments between states.
    pub fn difference(&self, smaller: &Self) -> Self {
        GSetState {
            elements: self.elements.difference(&smaller.elements).cloned().collect(),
        }
    }
}

impl<T: Ord + Clone> JoinSemilattice for GSetState<T> {
    fn join(&self, other: &Self) -> Self {
        let mut elements = self.elements.clone();
        elements.extend(other.elements.iter().cloned());
        GSetState { elements }
    }
}

impl<T: Ord + Clone> BoundedJoinSemilattice for GSetState<T> {
    fn bottom() -> Self {
        GSetState::new()
    }
}

impl<T: Ord + Clone + fmt::Display> fmt::Display for GSetState<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, x) in self.elements.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, "}}")
    }
}
