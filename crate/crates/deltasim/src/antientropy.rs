//! Delta-group anti-entropy with delta-intervals and the causal merging
//! guard.
//!
//! Under this algorithm client updates never broadcast directly. Each update
//! generates a delta-mutation that is joined into both the local state and a
//! temporary delta-group. Periodically a node flips a coin and sends either
//! its full state or the accumulated group to all other replicas, flushing
//! the group in both cases. Full states eventually repair any replica that
//! missed a fragment, which is what restores eventual delivery over lossy
//! links.
//!
//! Intervals carry the half-open sequence range `[a, b)` of local updates
//! they cover. A receiver tracks, per origin, the watermark of updates it has
//! already incorporated and only joins an interval whose range starts at or
//! below that watermark; anything else has a gap and is rejected (or
//! buffered, when configured). The watermark map is the sequence-number
//! operationalization of the lattice condition "receiver state dominates the
//! origin's state at `a`": full states advance it to their send watermark,
//! accepted intervals advance it to `b`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::crdt::{CrdtError, ReplicaId};
use crate::message::{ClientOp, CrdtKind, CrdtState, Message};
use crate::reduce::{EffectError, OpMachine, ReduceError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AeError {
    #[error("malformed interval: a={a} must be below b={b}")]
    MalformedInterval { a: u64, b: u64 },
    #[error(transparent)]
    Effect(#[from] EffectError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Crdt(#[from] CrdtError),
}

/// Joined accumulation of delta fragments since the last flush.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaGroup {
    /// Join of all fragments accumulated since the last flush; bottom when
    /// the group is empty.
    pub pending: CrdtState,
    /// Sequence index of the oldest accumulated delta.
    pub since: u64,
}

/// The join of one replica's deltas with sequence indices in `[a, b)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DeltaInterval {
    pub origin: ReplicaId,
    /// Inclusive start of the covered range.
    pub a: u64,
    /// Exclusive end of the covered range.
    pub b: u64,
    pub value: CrdtState,
}

impl DeltaInterval {
    pub fn validate(&self) -> Result<(), AeError> {
        if self.a >= self.b {
            return Err(AeError::MalformedInterval { a: self.a, b: self.b });
        }
        Ok(())
    }
}

impl fmt::Display for DeltaInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "INTERVAL {} {} {} {}", self.origin, self.a, self.b, self.value)
    }
}

/// Whether the causal merging guard admits an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardDecision {
    Accepted,
    Rejected,
    Buffered,
}

/// The causal merging guard: accept an interval from `origin` only when the
/// receiver has already incorporated every update below its start.
///
/// Redelivered intervals (range entirely at or below the watermark) are
/// accepted; the join is idempotent so they are harmless.
pub fn causal_merge_guard(
    known: &BTreeMap<ReplicaId, u64>,
    interval: &DeltaInterval,
) -> Result<bool, AeError> {
    interval.validate()?;
    let watermark = known.get(&interval.origin).copied().unwrap_or(0);
    Ok(watermark >= interval.a)
}

/// Per-node anti-entropy behavior knobs.
#[derive(Debug, Clone)]
pub struct AeSettings {
    /// Apply the causal merging guard to incoming intervals. With the guard
    /// off every interval is joined unconditionally.
    pub guard: bool,
    /// Keep rejected intervals and retry them once the gap fills, instead of
    /// discarding them.
    pub buffer_rejected: bool,
    /// Send syncs even when the group is empty.
    pub force_empty_sync: bool,
}

impl Default for AeSettings {
    fn default() -> Self {
        AeSettings {
            guard: true,
            buffer_rejected: false,
            force_empty_sync: false,
        }
    }
}

/// Anti-entropy state carried by one simulator node.
#[derive(Debug, Clone)]
pub struct AeNode {
    pub group: DeltaGroup,
    /// Number of local updates performed; the next update takes this index.
    pub seq: u64,
    /// Per-origin watermark of incorporated updates.
    pub known: BTreeMap<ReplicaId, u64>,
    buffered: Vec<DeltaInterval>,
    settings: AeSettings,
}

impl AeNode {
    pub fn new(kind: CrdtKind, settings: AeSettings) -> Self {
        AeNode {
            group: DeltaGroup {
                pending: CrdtState::bottom(kind),
                since: 0,
            },
            seq: 0,
            known: BTreeMap::new(),
            buffered: Vec::new(),
            settings,
        }
    }

    pub fn buffered(&self) -> &[DeltaInterval] {
        &self.buffered
    }

    /// Client update: generate the delta-mutation and join it into both the
    /// local state and the temporary delta-group, recording it under the
    /// node's next sequence index.
    pub fn on_local_update(
        &mut self,
        machine: &mut OpMachine,
        origin: ReplicaId,
        op: &ClientOp,
    ) -> Result<(), AeError> {
        let msg = machine.prepare(op)?;
        let Message::Delta(frag) = &msg else {
            return Err(AeError::Effect(EffectError::Mismatch(
                "anti-entropy requires delta-style machines".into(),
            )));
        };
        let kind = machine.kind();
        let frag_state = frag
            .to_state(kind)
            .map_err(|e| AeError::Effect(EffectError::Mismatch(e.to_string())))?;
        machine.effect(&msg)?;
        self.group.pending = self
            .group
            .pending
            .join(&frag_state)
            .map_err(|e| AeError::Effect(EffectError::Mismatch(e.to_string())))?;
        self.seq += 1;
        // A node trivially dominates its own updates.
        self.known.insert(origin, self.seq);
        Ok(())
    }

    /// Periodic sync: coin 0 broadcasts the full state, coin 1 broadcasts the
    /// delta-group contents as an interval. The group is flushed either way.
    ///
    /// Syncs with nothing to say (a bottom full state, an empty group) are
    /// suppressed unless force-empty-sync is set; a forced sync with an empty
    /// group degrades to a full-state sync, since an interval covering no
    /// updates would be malformed.
    pub fn sync_payload(
        &mut self,
        machine: &OpMachine,
        origin: ReplicaId,
        coin: u64,
    ) -> Option<Message> {
        let kind = machine.kind();
        let state = machine
            .lattice_state()
            .expect("anti-entropy machines hold lattice states")
            .clone();
        let state_bottom = state == CrdtState::bottom(kind);
        let group_empty = self.group.pending == CrdtState::bottom(kind);
        let full_state = Message::FullState {
            upto: self.seq,
            state,
        };
        let payload = if coin == 0 {
            if state_bottom && !self.settings.force_empty_sync {
                None
            } else {
                Some(full_state)
            }
        } else if group_empty {
            if self.settings.force_empty_sync {
                Some(full_state)
            } else {
                None
            }
        } else {
            Some(Message::Interval(DeltaInterval {
                origin,
                a: self.group.since,
                b: self.seq,
                value: self.group.pending.clone(),
            }))
        };
        self.flush(kind);
        payload
    }

    fn flush(&mut self, kind: CrdtKind) {
        self.group.pending = CrdtState::bottom(kind);
        self.group.since = self.seq;
    }

    /// Incoming full-state sync: always safe to join (it covers everything
    /// from the beginning of time), and it advances the sender's watermark
    /// to the sequence watermark taken when it was sent. The origin comes
    /// from the envelope, not the payload.
    pub fn on_receive_full_from(
        &mut self,
        machine: &mut OpMachine,
        origin: ReplicaId,
        upto: u64,
        state: &CrdtState,
    ) -> Result<(), AeError> {
        machine.merge_state(state)?;
        let known = self.known.entry(origin).or_insert(0);
        *known = (*known).max(upto);
        self.retry_buffered(machine)?;
        Ok(())
    }

    /// Incoming interval: run the causal merging guard; on acceptance join
    /// the value and advance the watermark to `b`; on rejection discard or
    /// buffer per settings.
    pub fn on_receive_interval(
        &mut self,
        machine: &mut OpMachine,
        interval: &DeltaInterval,
    ) -> Result<GuardDecision, AeError> {
        let accept = !self.settings.guard || causal_merge_guard(&self.known, interval)?;
        if !accept {
            if self.settings.buffer_rejected {
                self.buffered.push(interval.clone());
                return Ok(GuardDecision::Buffered);
            }
            return Ok(GuardDecision::Rejected);
        }
        machine.merge_state(&interval.value)?;
        let known = self.known.entry(interval.origin).or_insert(0);
        *known = (*known).max(interval.b);
        self.retry_buffered(machine)?;
        Ok(GuardDecision::Accepted)
    }

    /// Re-offers buffered intervals until none of them can make progress.
    fn retry_buffered(&mut self, machine: &mut OpMachine) -> Result<(), AeError> {
        if self.buffered.is_empty() {
            return Ok(());
        }
        loop {
            let mut progressed = false;
            let mut i = 0;
            while i < self.buffered.len() {
                if causal_merge_guard(&self.known, &self.buffered[i])? {
                    let interval = self.buffered.remove(i);
                    machine.merge_state(&interval.value)?;
                    let known = self.known.entry(interval.origin).or_insert(0);
                    *known = (*known).max(interval.b);
                    progressed = true;
                } else {
                    i += 1;
                }
            }
            if !progressed {
                return Ok(());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crdt::{GCounterState, ReplicaSet};
    use crate::message::Style;

    fn r(i: u32) -> ReplicaId {
        ReplicaId::new(i)
    }

    fn delta_counter(id: u32, n: u32) -> OpMachine {
        OpMachine::new(CrdtKind::GCounter, Style::Delta, r(id), ReplicaSet::new(n)).unwrap()
    }

    fn counter_state(pairs: &[(u32, u64)]) -> CrdtState {
        CrdtState::GCounter(GCounterState::from_counts(
            pairs.iter().map(|&(i, n)| (r(i), n)),
        ))
    }

    #[test]
    fn local_update_joins_state_and_group() {
        let mut machine = delta_counter(0, 3);
        let mut ae = AeNode::new(CrdtKind::GCounter, AeSettings::default());
        ae.on_local_update(&mut machine, r(0), &ClientOp::Inc).unwrap();
        assert_eq!(machine.lattice_state().unwrap(), &counter_state(&[(0, 1)]));
        assert_eq!(ae.group.pending, counter_state(&[(0, 1)]));
        assert_eq!(ae.seq, 1);
    }

    #[test]
    fn two_updates_before_flush_accumulate_joined_not_listed() {
        let mut machine = delta_counter(0, 3);
        let mut ae = AeNode::new(CrdtKind::GCounter, AeSettings::default());
        ae.on_local_update(&mut machine, r(0), &ClientOp::Inc).unwrap();
        ae.on_local_update(&mut machine, r(0), &ClientOp::Inc).unwrap();
        // join of {r0:1} and {r0:2} is {r0:2}
        assert_eq!(ae.group.pending, counter_state(&[(0, 2)]));
        assert_eq!(ae.group.since, 0);
        assert_eq!(ae.seq, 2);
    }

    #[test]
    fn update_flush_update_keeps_only_post_flush_delta() {
        let mut machine = delta_counter(0, 3);
        let mut ae = AeNode::new(CrdtKind::GCounter, AeSettings::default());
        ae.on_local_update(&mut machine, r(0), &ClientOp::Inc).unwrap();
        let payload = ae.sync_payload(&machine, r(0), 1);
        assert!(matches!(payload, Some(Message::Interval(_))));
        assert_eq!(ae.group.pending, CrdtState::bottom(CrdtKind::GCounter));
        assert_eq!(ae.group.since, 1);
        ae.on_local_update(&mut machine, r(0), &ClientOp::Inc).unwrap();
        assert_eq!(ae.group.pending, counter_state(&[(0, 2)]));
        assert_eq!(ae.group.since, 1);
    }

    #[test]
    fn sync_coin_zero_sends_full_state() {
        let mut machine = delta_counter(0, 3);
        let mut ae = AeNode::new(CrdtKind::GCounter, AeSettings::default());
        ae.on_local_update(&mut machine, r(0), &ClientOp::Inc).unwrap();
        let payload = ae.sync_payload(&machine, r(0), 0).unwrap();
        assert_eq!(
            payload,
            Message::FullState {
                upto: 1,
                state: counter_state(&[(0, 1)]),
            }
        );
        // Flushed in both cases.
        assert_eq!(ae.group.since, 1);
    }

    #[test]
    fn empty_group_sync_is_suppressed_unless_forced() {
        let machine = delta_counter(0, 3);
        let mut ae = AeNode::new(CrdtKind::GCounter, AeSettings::default());
        assert!(ae.sync_payload(&machine, r(0), 1).is_none());
        assert!(ae.sync_payload(&machine, r(0), 0).is_none());

        // Forced syncs with nothing to say broadcast bottom, and receiving
        // bottom leaves every state at bottom.
        let mut forced = AeNode::new(
            CrdtKind::GCounter,
            AeSettings {
                force_empty_sync: true,
                ..AeSettings::default()
            },
        );
        let payload = forced.sync_payload(&machine, r(0), 1).unwrap();
        assert_eq!(
            payload,
            Message::FullState {
                upto: 0,
                state: CrdtState::bottom(CrdtKind::GCounter),
            }
        );
        let mut receiver = delta_counter(1, 3);
        let mut receiver_ae = AeNode::new(CrdtKind::GCounter, AeSettings::default());
        receiver_ae
            .on_receive_full_from(&mut receiver, r(0), 0, &CrdtState::bottom(CrdtKind::GCounter))
            .unwrap();
        assert_eq!(
            receiver.lattice_state().unwrap(),
            &CrdtState::bottom(CrdtKind::GCounter)
        );
    }

    #[test]
    fn always_full_state_syncs_behave_like_classical_state_based_crdt() {
        // With coin = 0 at every sync and a lossless exchange, each node's
        // full state reaches the others and all replicas converge.
        let n = 3;
        let mut machines: Vec<OpMachine> = (0..n).map(|i| delta_counter(i, n)).collect();
        let mut nodes: Vec<AeNode> = (0..n)
            .map(|_| AeNode::new(CrdtKind::GCounter, AeSettings::default()))
            .collect();
        for round in 0..3u32 {
            let updater = (round % n) as usize;
            nodes[updater]
                .on_local_update(&mut machines[updater], r(updater as u32), &ClientOp::Inc)
                .unwrap();
            // Everybody syncs full state to everybody else.
            let payloads: Vec<Option<Message>> = (0..n as usize)
                .map(|i| nodes[i].sync_payload(&machines[i], r(i as u32), 0))
                .collect();
            for (sender, payload) in payloads.into_iter().enumerate() {
                let Some(Message::FullState { upto, state }) = payload else {
                    continue;
                };
                for target in 0..n as usize {
                    if target != sender {
                        nodes[target]
                            .on_receive_full_from(
                                &mut machines[target],
                                r(sender as u32),
                                upto,
                                &state,
                            )
                            .unwrap();
                    }
                }
            }
        }
        let expected = counter_state(&[(0, 1), (1, 1), (2, 1)]);
        for machine in &machines {
            assert_eq!(machine.lattice_state().unwrap(), &expected);
        }
    }

    #[test]
    fn guard_accepts_contiguous_interval_and_advances_watermark() {
        let mut machine = delta_counter(1, 3);
        let mut ae = AeNode::new(CrdtKind::GCounter, AeSettings::default());
        let interval = DeltaInterval {
            origin: r(0),
            a: 0,
            b: 2,
            value: counter_state(&[(0, 2)]),
        };
        let decision = ae.on_receive_interval(&mut machine, &interval).unwrap();
        assert_eq!(decision, GuardDecision::Accepted);
        assert_eq!(ae.known.get(&r(0)), Some(&2));
        assert_eq!(machine.lattice_state().unwrap(), &counter_state(&[(0, 2)]));
    }

    #[test]
    fn guard_rejects_gapped_interval() {
        let mut machine = delta_counter(1, 3);
        let mut ae = AeNode::new(CrdtKind::GCounter, AeSettings::default());
        let gapped = DeltaInterval {
            origin: r(0),
            a: 1,
            b: 2,
            value: counter_state(&[(0, 2)]),
        };
        let decision = ae.on_receive_interval(&mut machine, &gapped).unwrap();
        assert_eq!(decision, GuardDecision::Rejected);
        assert_eq!(ae.known.get(&r(0)), None);
        // State untouched.
        assert_eq!(
            machine.lattice_state().unwrap(),
            &CrdtState::bottom(CrdtKind::GCounter)
        );
    }

    #[test]
    fn redelivered_interval_is_accepted_and_watermark_stays() {
        let mut machine = delta_counter(1, 3);
        let mut ae = AeNode::new(CrdtKind::GCounter, AeSettings::default());
        let interval = DeltaInterval {
            origin: r(0),
            a: 0,
            b: 2,
            value: counter_state(&[(0, 2)]),
        };
        ae.on_receive_interval(&mut machine, &interval).unwrap();
        let again = ae.on_receive_interval(&mut machine, &interval).unwrap();
        assert_eq!(again, GuardDecision::Accepted);
        assert_eq!(ae.known.get(&r(0)), Some(&2));
    }

    #[test]
    fn malformed_interval_is_an_error() {
        let interval = DeltaInterval {
            origin: r(0),
            a: 2,
            b: 2,
            value: counter_state(&[]),
        };
        assert!(matches!(
            causal_merge_guard(&BTreeMap::new(), &interval),
            Err(AeError::MalformedInterval { .. })
        ));
    }

    #[test]
    fn buffered_interval_applies_once_gap_fills() {
        let mut machine = delta_counter(1, 3);
        let mut ae = AeNode::new(
            CrdtKind::GCounter,
            AeSettings {
                buffer_rejected: true,
                ..AeSettings::default()
            },
        );
        let later = DeltaInterval {
            origin: r(0),
            a: 2,
            b: 3,
            value: counter_state(&[(0, 3)]),
        };
        let decision = ae.on_receive_interval(&mut machine, &later).unwrap();
        assert_eq!(decision, GuardDecision::Buffered);
        assert_eq!(ae.buffered().len(), 1);
        let earlier = DeltaInterval {
            origin: r(0),
            a: 0,
            b: 2,
            value: counter_state(&[(0, 2)]),
        };
        ae.on_receive_interval(&mut machine, &earlier).unwrap();
        assert!(ae.buffered().is_empty());
        assert_eq!(ae.known.get(&r(0)), Some(&3));
        assert_eq!(machine.lattice_state().unwrap(), &counter_state(&[(0, 3)]));
    }

    #[test]
    fn full_state_receipt_advances_watermark_past_flushed_intervals() {
        let mut machine = delta_counter(1, 3);
        let mut ae = AeNode::new(CrdtKind::GCounter, AeSettings::default());
        // Origin performed one update, synced full state (flushing its
        // group), then performed another and synced the interval [1, 2).
        ae.on_receive_full_from(&mut machine, r(0), 1, &counter_state(&[(0, 1)]))
            .unwrap();
        assert_eq!(ae.known.get(&r(0)), Some(&1));
        let second = DeltaInterval {
            origin: r(0),
            a: 1,
            b: 2,
            value: counter_state(&[(0, 2)]),
        };
        let decision = ae.on_receive_interval(&mut machine, &second).unwrap();
        assert_eq!(decision, GuardDecision::Accepted);
        assert_eq!(machine.lattice_state().unwrap(), &counter_state(&[(0, 2)]));
    }

    #[test]
    fn group_join_equals_individual_fragment_delivery() {
        // Broadcasting a delta-group is equivalent to broadcasting its
        // fragments one by one under relaxed delivery. With up to three
        // fragments, compare the fold-of-group path against every
        // permutation of individual joins.
        use crate::crdt::JoinSemilattice;
        let members = ReplicaSet::new(2);
        let mut origin_state = GCounterState::new();
        let mut frags = Vec::new();
        for _ in 0..3 {
            let frag = origin_state.inc_delta(r(0), &members).unwrap();
            origin_state = origin_state.join(&frag);
            frags.push(frag);
        }
        let mut group = GCounterState::new();
        for f in &frags {
            group = group.join(f);
        }
        let receiver_base = GCounterState::from_counts([(r(1), 2)]);
        let via_group = receiver_base.join(&group);
        let orders: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for order in orders {
            let mut via_individual = receiver_base.clone();
            for i in order {
                via_individual = via_individual.join(&frags[i]);
            }
            assert_eq!(via_group, via_individual);
        }
    }
}
