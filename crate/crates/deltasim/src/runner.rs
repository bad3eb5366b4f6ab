//! Scenario execution: build replicas, run the network, emit artifacts.
//!
//! A run produces three artifacts with stable formats: `transcript.log` (one
//! line per broadcast/deliver event), `verdict.txt` (the checker output), and
//! `summary.txt` (final per-replica query values plus message counters).
//! Exit codes follow the checker contract: 0 pass, 1 fail, 2 malformed
//! input.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::antientropy::AeSettings;
use crate::checker::{self, Verdict};
use crate::crdt::{ReplicaId, ReplicaSet};
use crate::netsim::{SimError, Simulator};
use crate::reduce::OpMachine;
use crate::scenario::{Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Check(#[from] checker::CheckError),
    #[error("machine construction failed: {0}")]
    Machine(#[from] crate::reduce::ReduceError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl RunError {
    /// Exit-code contract: malformed input maps to 2, runtime failures to 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Scenario(_) | RunError::Machine(_) => 2,
            RunError::Check(checker::CheckError::MalformedHistory(_)) => 2,
            _ => 1,
        }
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub exit_code: i32,
    pub verdict: Verdict,
    pub transcript: String,
    pub summary: String,
    /// Simulator events consumed when the run reached its end state.
    pub events: u64,
    /// Whether all live replicas ended in equal states.
    pub converged: bool,
}

impl RunArtifacts {
    pub fn verdict_text(&self) -> String {
        self.verdict.to_string()
    }

    /// Writes `transcript.log`, `verdict.txt`, and `summary.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("transcript.log"), &self.transcript)?;
        fs::write(dir.join("verdict.txt"), self.verdict_text())?;
        fs::write(dir.join("summary.txt"), &self.summary)?;
        Ok(())
    }
}

fn build_machines(sc: &Scenario) -> Result<Vec<OpMachine>, RunError> {
    let members = ReplicaSet::new(sc.replicas);
    (0..sc.replicas)
        .map(|i| {
            OpMachine::new(sc.kind, sc.style, ReplicaId::new(i), members).map_err(RunError::from)
        })
        .collect()
}

/// Runs a validated scenario; `seed_override` substitutes the file's seed.
pub fn run_scenario(sc: &Scenario, seed_override: Option<u64>) -> Result<RunArtifacts, RunError> {
    sc.validate()?;
    let config = sc.network_config(seed_override);
    let mut sim = Simulator::new(config, build_machines(sc)?);

    let max_events_failure = if sc.antientropy.enabled {
        run_with_anti_entropy(sc, &mut sim)?
    } else {
        run_direct(sc, &mut sim)?
    };

    let histories = sim.histories();
    let finals = sim.final_states();
    let live = sim.live_flags();
    let queries: Vec<String> = (0..sc.replicas)
        .map(|i| match sim.machine(ReplicaId::new(i)).query() {
            Ok(q) => q.to_string(),
            Err(e) => format!("<{e}>"),
        })
        .collect();
    let broadcasts: Vec<_> = sim
        .broadcast_log()
        .iter()
        .map(|b| (b.msg_id, b.origin, b.payload.clone()))
        .collect();
    let verdict = checker::verdict(
        &histories,
        &finals,
        &live,
        &broadcasts,
        sc.fairness,
        sc.checks(),
        &queries,
    )?;

    let converged = {
        let mut live_states = finals
            .iter()
            .zip(&live)
            .filter(|(_, l)| **l)
            .map(|(s, _)| s);
        match live_states.next() {
            None => true,
            Some(first) => live_states.all(|s| s == first),
        }
    };

    let mut summary = String::new();
    let stats = sim.stats();
    let _ = writeln!(summary, "scenario: crdt={} style={}", sc.kind, sc.style);
    let _ = writeln!(
        summary,
        "seed: {}",
        seed_override.unwrap_or(sc.seed)
    );
    let _ = writeln!(summary, "events: {}", sim.events());
    let _ = writeln!(summary, "converged: {converged}");
    if let Some(limit) = max_events_failure {
        let _ = writeln!(summary, "max-events-exceeded: {limit}");
    }
    let _ = writeln!(
        summary,
        "messages: broadcasts={} deliveries={} drops={} duplicates={} reoffers={} suppressed={}",
        stats.broadcasts,
        stats.deliveries,
        stats.drops,
        stats.duplicates,
        stats.reoffers,
        stats.suppressed
    );
    for i in 0..sc.replicas {
        let id = ReplicaId::new(i);
        let _ = writeln!(
            summary,
            "{} live={} state={} query={}",
            id,
            sim.is_live(id),
            finals[i as usize],
            queries[i as usize]
        );
    }

    let exit_code = if max_events_failure.is_some() {
        1
    } else {
        verdict.exit_code()
    };
    Ok(RunArtifacts {
        exit_code,
        verdict,
        transcript: sim.transcript(),
        summary,
        events: sim.events(),
        converged,
    })
}

/// Direct mode: inject scheduled operations at their virtual times (each one
/// broadcasts), then run to quiescence. Returns the max-events bound when it
/// was exceeded.
fn run_direct(sc: &Scenario, sim: &mut Simulator) -> Result<Option<u64>, RunError> {
    for entry in &sc.schedule {
        // Deliveries due before this injection happen first.
        match sim.run_due(entry.time) {
            Ok(()) => {}
            Err(SimError::MaxEventsExceeded(limit)) => return Ok(Some(limit)),
            Err(e) => return Err(e.into()),
        }
        match sim.inject(entry.replica, &entry.op) {
            Ok(_) => {}
            Err(SimError::MaxEventsExceeded(limit)) => return Ok(Some(limit)),
            Err(e) => return Err(e.into()),
        }
    }
    match sim.run_to_quiescence() {
        Ok(()) => Ok(None),
        Err(SimError::MaxEventsExceeded(limit)) => Ok(Some(limit)),
        Err(e) => Err(e.into()),
    }
}

/// Anti-entropy mode: updates apply locally without broadcasting; every
/// sync-period ticks each live node randomly sends either its full state or
/// its delta-group. The loop runs until the replicas converge or the event
/// bound is hit.
fn run_with_anti_entropy(sc: &Scenario, sim: &mut Simulator) -> Result<Option<u64>, RunError> {
    sim.enable_anti_entropy(AeSettings {
        guard: sc.antientropy.guard,
        buffer_rejected: sc.antientropy.buffer_rejected,
        force_empty_sync: sc.antientropy.force_empty_sync,
    });
    let mut pending = sc.schedule.iter().peekable();
    let period = sc.antientropy.sync_period;
    let mut tick: u64 = 0;
    loop {
        let result = (|| -> Result<bool, SimError> {
            sim.advance_time(tick);
            while pending.peek().map(|e| e.time <= tick).unwrap_or(false) {
                let entry = pending.next().unwrap();
                sim.ae_local_update(entry.replica, &entry.op)?;
            }
            if tick > 0 && tick.is_multiple_of(period) {
                for i in 0..sc.replicas {
                    let id = ReplicaId::new(i);
                    if sim.is_live(id) {
                        sim.ae_sync(id)?;
                    }
                }
            }
            sim.run_due(tick)?;
            let done = pending.peek().is_none() && sim.converged();
            Ok(done)
        })();
        match result {
            Ok(true) => return Ok(None),
            Ok(false) => {}
            Err(SimError::MaxEventsExceeded(limit)) => return Ok(Some(limit)),
            Err(e) => return Err(e.into()),
        }
        tick += 1;
        if tick > sc.max_events {
            return Ok(Some(sc.max_events));
        }
    }
}

/// Aggregate results of a seed sweep.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub runs: u64,
    pub passes: u64,
    pub failing_seeds: Vec<u64>,
    pub min_events: u64,
    pub max_events: u64,
    pub total_events: u64,
}

impl SweepReport {
    pub fn all_passed(&self) -> bool {
        self.failing_seeds.is_empty()
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_passed() {
            0
        } else {
            1
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "runs: {}", self.runs);
        let _ = writeln!(out, "passes: {}", self.passes);
        if self.runs > 0 {
            let _ = writeln!(
                out,
                "events: min={} mean={:.1} max={}",
                self.min_events,
                self.total_events as f64 / self.runs as f64,
                self.max_events
            );
        }
        if self.failing_seeds.is_empty() {
            let _ = writeln!(out, "result: pass");
        } else {
            let _ = writeln!(out, "result: fail");
            let seeds: Vec<String> = self.failing_seeds.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "failing seeds: {}", seeds.join(" "));
        }
        out
    }
}

/// Runs the scenario once per seed in `[first, last]` and aggregates
/// verdicts; failures list the seed for replay.
pub fn sweep(sc: &Scenario, first: u64, last: u64) -> Result<SweepReport, RunError> {
    sc.validate()?;
    let mut report = SweepReport {
        runs: 0,
        passes: 0,
        failing_seeds: Vec::new(),
        min_events: u64::MAX,
        max_events: 0,
        total_events: 0,
    };
    if first > last {
        report.min_events = 0;
        return Ok(report);
    }
    for seed in first..=last {
        let artifacts = run_scenario(sc, Some(seed))?;
        report.runs += 1;
        report.min_events = report.min_events.min(artifacts.events);
        report.max_events = report.max_events.max(artifacts.events);
        report.total_events += artifacts.events;
        if artifacts.exit_code == 0 {
            report.passes += 1;
        } else {
            report.failing_seeds.push(seed);
        }
    }
    Ok(report)
}
