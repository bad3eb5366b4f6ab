//! Delta-state CRDTs with join semi-lattice cores, reductions to op-based
//! machines, and a deterministic adversarial network simulator.
//!
//! The crate is organized around a small pipeline:
//!
//! - [`crdt`] holds the lattice primitives: grow-only counters and sets,
//!   plus the pair composition that yields PN-Counters and 2P-Sets. All
//!   operations are pure functions on immutable values.
//! - [`reduce`] wraps any of those lattices as an op-based machine with
//!   `prepare`/`effect` phases, in three wire encodings (full state,
//!   state-typed delta fragments, refined delta operations), alongside the
//!   native op-based machines that require causal at-most-once delivery.
//! - [`netsim`] is a single-threaded discrete-event simulator that drives
//!   machines under configurable drop/duplicate/delay/reorder behaviors and
//!   records per-node broadcast/deliver histories.
//! - [`antientropy`] layers the delta-group gossip algorithm with
//!   delta-intervals and the causal merging guard over simulator nodes.
//! - [`checker`] computes strong-convergence and eventual-delivery verdicts
//!   over recorded histories, and provides the exhaustive small-scope oracle
//!   plus the randomized lattice-law suite.
//! - [`scenario`] and [`runner`] parse scenario files and execute them,
//!   emitting transcripts, verdicts, and summaries with a stable exit-code
//!   contract (0 pass, 1 fail, 2 malformed).

pub mod antientropy;
pub mod checker;
pub mod crdt;
pub mod message;
pub mod netsim;
pub mod reduce;
pub mod rng;
pub mod runner;
pub mod scenario;

pub use crdt::{
    leq, CrdtError, GCounterState, GSetState, JoinSemilattice, PairState, PnCounterState,
    ReplicaId, ReplicaSet, TwoPSetState,
};
pub use message::{ClientOp, CrdtKind, CrdtState, DeltaFragment, Message, QueryValue, Style};
pub use reduce::{DeliveryMode, OpMachine};
