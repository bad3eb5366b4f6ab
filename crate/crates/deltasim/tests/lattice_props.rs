//! Property suite over the lattice invariants: join laws, inflation,
//! permutation invariance, and delta/full-update equivalence for the
//! composed CRDTs.

use proptest::prelude::*;

use deltasim::crdt::{
    leq, BoundedJoinSemilattice, GCounterState, GSetState, JoinSemilattice, PairState,
    PnCounterState, ReplicaId, ReplicaSet, TwoPSetState,
};
use deltasim::message::{ClientOp, CrdtState};

fn r(i: u32) -> ReplicaId {
    ReplicaId::new(i)
}

fn counter_strategy() -> impl Strategy<Value = GCounterState> {
    proptest::collection::vec(0u64..=3, 4).prop_map(|counts| {
        GCounterState::from_counts(
            counts
                .into_iter()
                .enumerate()
                .map(|(i, n)| (r(i as u32), n)),
        )
    })
}

fn set_strategy() -> impl Strategy<Value = GSetState<String>> {
    proptest::collection::btree_set("[a-f]", 0..=5).prop_map(GSetState::from_elements)
}

fn state_strategy() -> impl Strategy<Value = CrdtState> {
    prop_oneof![
        counter_strategy().prop_map(CrdtState::GCounter),
        set_strategy().prop_map(CrdtState::GSet),
        (counter_strategy(), counter_strategy())
            .prop_map(|(p, n)| CrdtState::PnCounter(PairState::new(p, n))),
        (set_strategy(), set_strategy())
            .prop_map(|(a, d)| CrdtState::TwoPSet(PairState::new(a, d))),
    ]
}

/// Same-kind state pairs, so joins are defined.
fn state_pair() -> impl Strategy<Value = (CrdtState, CrdtState)> {
    prop_oneof![
        (counter_strategy(), counter_strategy())
            .prop_map(|(a, b)| (CrdtState::GCounter(a), CrdtState::GCounter(b))),
        (set_strategy(), set_strategy())
            .prop_map(|(a, b)| (CrdtState::GSet(a), CrdtState::GSet(b))),
        (
            counter_strategy(),
            counter_strategy(),
            counter_strategy(),
            counter_strategy()
        )
            .prop_map(|(a, b, c, d)| (
                CrdtState::PnCounter(PairState::new(a, b)),
                CrdtState::PnCounter(PairState::new(c, d))
            )),
        (set_strategy(), set_strategy(), set_strategy(), set_strategy()).prop_map(
            |(a, b, c, d)| (
                CrdtState::TwoPSet(PairState::new(a, b)),
                CrdtState::TwoPSet(PairState::new(c, d))
            )
        ),
    ]
}

fn state_triple() -> impl Strategy<Value = (CrdtState, CrdtState, CrdtState)> {
    prop_oneof![
        (counter_strategy(), counter_strategy(), counter_strategy()).prop_map(|(a, b, c)| (
            CrdtState::GCounter(a),
            CrdtState::GCounter(b),
            CrdtState::GCounter(c)
        )),
        (set_strategy(), set_strategy(), set_strategy()).prop_map(|(a, b, c)| (
            CrdtState::GSet(a),
            CrdtState::GSet(b),
            CrdtState::GSet(c)
        )),
    ]
}

fn random_op_for(state: &CrdtState, pick: u8) -> ClientOp {
    let element = ["a", "b", "c", "g"][(pick % 4) as usize].to_string();
    match state {
        CrdtState::GCounter(_) => ClientOp::Inc,
        CrdtState::PnCounter(_) => {
            if pick.is_multiple_of(2) {
                ClientOp::Inc
            } else {
                ClientOp::Dec
            }
        }
        CrdtState::GSet(_) => ClientOp::Insert(element),
        CrdtState::TwoPSet(_) => {
            if pick.is_multiple_of(2) {
                ClientOp::Add(element)
            } else {
                ClientOp::Remove(element)
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn join_is_commutative((a, b) in state_pair()) {
        prop_assert_eq!(a.join(&b).unwrap(), b.join(&a).unwrap());
    }

    #[test]
    fn join_is_associative((a, b, c) in state_triple()) {
        let left = a.join(&b.join(&c).unwrap()).unwrap();
        let right = a.join(&b).unwrap().join(&c).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn join_is_idempotent((a, b) in state_pair()) {
        let ab = a.join(&b).unwrap();
        prop_assert_eq!(ab.join(&b).unwrap(), ab);
    }

    #[test]
    fn updates_inflate_the_state(s in state_strategy(), who in 0u32..4, pick in 0u8..8) {
        let members = ReplicaSet::new(4);
        let op = random_op_for(&s, pick);
        let updated = s.apply_op(r(who), &members, &op).unwrap();
        // s ⊑ updated in the induced order.
        prop_assert_eq!(s.join(&updated).unwrap(), updated);
    }

    #[test]
    fn fold_is_permutation_invariant(states in proptest::collection::vec(counter_strategy(), 4)) {
        // Exhaustive over all 4! orders of joining the same multiset.
        let reference = states
            .iter()
            .fold(GCounterState::bottom(), |acc, s| acc.join(s));
        let mut indices = [0usize, 1, 2, 3];
        let mut orders = Vec::new();
        heap_permutations(&mut indices, 4, &mut orders);
        prop_assert_eq!(orders.len(), 24);
        for order in orders {
            let folded = order
                .iter()
                .fold(GCounterState::bottom(), |acc, &i| acc.join(&states[i]));
            prop_assert_eq!(&folded, &reference);
        }
    }

    #[test]
    fn larger_random_permutations_agree(
        states in proptest::collection::vec(set_strategy(), 6),
        seed in any::<u64>(),
    ) {
        // Fisher-Yates over a deterministic stream.
        let mut rng = deltasim::rng::DetRng::new(seed);
        let mut order: Vec<usize> = (0..6).collect();
        for i in (1..6usize).rev() {
            let j = rng.range(0, i as u64) as usize;
            order.swap(i, j);
        }
        let reference = states
            .iter()
            .fold(GSetState::bottom(), |acc, s| acc.join(s));
        let folded = order
            .iter()
            .fold(GSetState::bottom(), |acc, &i| acc.join(&states[i]));
        prop_assert_eq!(folded, reference);
    }
}

fn heap_permutations(indices: &mut [usize; 4], k: usize, out: &mut Vec<[usize; 4]>) {
    if k == 1 {
        out.push(*indices);
        return;
    }
    for i in 0..k {
        heap_permutations(indices, k - 1, out);
        if k.is_multiple_of(2) {
            indices.swap(i, k - 1);
        } else {
            indices.swap(0, k - 1);
        }
    }
}

// Delta/full equivalence for the composed CRDTs, exhaustive at small scope.

#[test]
fn pn_counter_delta_equals_full_update_exhaustively() {
    let members = ReplicaSet::new(2);
    let counters: Vec<GCounterState> = (0..=2u64)
        .flat_map(|a| (0..=2u64).map(move |b| GCounterState::from_counts([(r(0), a), (r(1), b)])))
        .collect();
    for pos in &counters {
        for neg in &counters {
            let s = PnCounterState::new(pos.clone(), neg.clone());
            for who in members.iter() {
                let inc_full = s.inc(who, &members).unwrap();
                let inc_delta = s.inc_delta(who, &members).unwrap();
                assert_eq!(s.join(&inc_delta), inc_full);
                assert!(leq(&s, &inc_full));
                let dec_full = s.dec(who, &members).unwrap();
                let dec_delta = s.dec_delta(who, &members).unwrap();
                assert_eq!(s.join(&dec_delta), dec_full);
            }
        }
    }
}

#[test]
fn twop_set_delta_equals_full_update_exhaustively() {
    let universe = ["a", "b"];
    let subsets: Vec<GSetState<&str>> = (0..4u32)
        .map(|mask| {
            GSetState::from_elements(
                universe
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, x)| *x),
            )
        })
        .collect();
    for added in &subsets {
        for removed in &subsets {
            let s = TwoPSetState::new(added.clone(), removed.clone());
            for x in universe {
                let add_full = s.add(x);
                assert_eq!(s.join(&TwoPSetState::add_delta(x)), add_full);
                let remove_full = s.remove(x);
                assert_eq!(s.join(&TwoPSetState::remove_delta(x)), remove_full);
                assert!(leq(&s, &add_full));
                assert!(leq(&s, &remove_full));
            }
        }
    }
}
