//! Scenario files: a flat, line-oriented key/value format with one schedule
//! block.
//!
//! ```text
//! # comment
//! crdt gcounter            # gcounter | gset | pncounter | twopset
//! style delta              # state | op | delta | delta-refined
//! replicas 3
//! seed 7
//! mode relaxed             # relaxed | causal
//! drop 0.3
//! duplicate 0.3
//! max-duplicates 2
//! delay 0 3
//! reorder on
//! fairness on
//! max-events 10000
//! unsafe false
//! antientropy off
//! sync-period 4
//! guard on
//! buffer-rejected off
//! force-empty-sync off
//! droplink r0 r2           # repeatable: silently lose every r0 -> r2 message
//! check convergence        # repeatable; omit to run every verdict
//! schedule
//!   0 r0 inc
//!   1 r1 insert x
//! end
//! ```
//!
//! Keys may appear in any order before the schedule block; unknown keys,
//! out-of-range values, and bad replica references are reported with line
//! and column. The native op style refuses relaxed delivery (and any
//! duplication) unless `unsafe true` opts in.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::checker::Checks;
use crate::crdt::ReplicaId;
use crate::message::{ClientOp, CrdtKind, Style};
use crate::netsim::NetworkConfig;
use crate::reduce::DeliveryMode;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: semantic error: {msg}")]
    Semantic { line: usize, col: usize, msg: String },
    #[error("semantic error: {0}")]
    Invalid(String),
}

/// One scheduled client operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduledOp {
    pub time: u64,
    pub replica: ReplicaId,
    pub op: ClientOp,
}

/// Anti-entropy settings carried by a scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AntiEntropyConfig {
    pub enabled: bool,
    pub sync_period: u64,
    pub guard: bool,
    pub buffer_rejected: bool,
    pub force_empty_sync: bool,
}

impl Default for AntiEntropyConfig {
    fn default() -> Self {
        AntiEntropyConfig {
            enabled: false,
            sync_period: 4,
            guard: true,
            buffer_rejected: false,
            force_empty_sync: false,
        }
    }
}

/// A parsed, validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: CrdtKind,
    pub style: Style,
    pub replicas: u32,
    pub seed: u64,
    pub mode: DeliveryMode,
    pub drop_probability: f64,
    pub duplicate_probability: f64,
    pub max_duplicates: u32,
    pub delay_min: u64,
    pub delay_max: u64,
    pub reorder: bool,
    pub fairness: bool,
    pub max_events: u64,
    pub unsafe_mode: bool,
    pub antientropy: AntiEntropyConfig,
    pub droplinks: Vec<(u32, u32)>,
    pub check_convergence: bool,
    pub check_delivery: bool,
    pub schedule: Vec<ScheduledOp>,
}

impl Scenario {
    pub fn checks(&self) -> Checks {
        Checks {
            convergence: self.check_convergence,
            delivery: self.check_delivery,
        }
    }

    pub fn network_config(&self, seed_override: Option<u64>) -> NetworkConfig {
        NetworkConfig {
            drop_probability: self.drop_probability,
            duplicate_probability: self.duplicate_probability,
            max_duplicates: self.max_duplicates,
            delay_min: self.delay_min,
            delay_max: self.delay_max,
            reorder: self.reorder,
            mode: self.mode,
            seed: seed_override.unwrap_or(self.seed),
            fairness: self.fairness,
            max_events: self.max_events,
            dead_links: self.droplinks.iter().copied().collect::<BTreeSet<_>>(),
        }
    }

    /// Cross-field validation, shared by the parser and programmatic
    /// construction.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::Invalid(msg));
        if self.replicas == 0 || self.replicas > 64 {
            return invalid(format!("replicas must be in 1..=64, got {}", self.replicas));
        }
        if let Err(msg) = self.network_config(None).validate() {
            return invalid(msg);
        }
        if self.style == Style::Op {
            if !matches!(self.kind, CrdtKind::GCounter | CrdtKind::GSet) {
                return invalid(format!("style op is not available for {}", self.kind));
            }
            let relaxed = self.mode == DeliveryMode::Relaxed;
            if (relaxed || self.duplicate_probability > 0.0) && !self.unsafe_mode {
                return invalid(
                    "style op requires causal delivery; set `unsafe true` to run it over a \
                     relaxed or duplicating network"
                        .into(),
                );
            }
        }
        if self.antientropy.enabled {
            if self.style != Style::Delta {
                return invalid("antientropy requires style delta".into());
            }
            if self.antientropy.sync_period == 0 {
                return invalid("sync-period must be at least 1".into());
            }
        }
        for (from, to) in &self.droplinks {
            if *from >= self.replicas || *to >= self.replicas {
                return invalid(format!("droplink r{from} r{to} references an unknown replica"));
            }
        }
        let mut last_time = 0u64;
        for op in &self.schedule {
            if op.replica.index() as u32 >= self.replicas {
                return invalid(format!(
                    "schedule references {} but there are only {} replicas",
                    op.replica, self.replicas
                ));
            }
            if !op.op.valid_for(self.kind) {
                return invalid(format!("operation `{}` is not valid for {}", op.op, self.kind));
            }
            if op.time < last_time {
                return invalid("schedule times must be non-decreasing".into());
            }
            last_time = op.time;
        }
        Ok(())
    }
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            kind: CrdtKind::GCounter,
            style: Style::Delta,
            replicas: 2,
            seed: 0,
            mode: DeliveryMode::Relaxed,
            drop_probability: 0.0,
            duplicate_probability: 0.0,
            max_duplicates: 1,
            delay_min: 0,
            delay_max: 0,
            reorder: false,
            fairness: true,
            max_events: 10_000,
            unsafe_mode: false,
            antientropy: AntiEntropyConfig::default(),
            droplinks: Vec::new(),
            check_convergence: true,
            check_delivery: true,
            schedule: Vec::new(),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "crdt {}", self.kind)?;
        writeln!(f, "style {}", self.style)?;
        writeln!(f, "replicas {}", self.replicas)?;
        writeln!(f, "seed {}", self.seed)?;
        let mode = match self.mode {
            DeliveryMode::Relaxed => "relaxed",
            DeliveryMode::CausalAtMostOnce => "causal",
        };
        writeln!(f, "mode {mode}")?;
        writeln!(f, "drop {}", self.drop_probability)?;
        writeln!(f, "duplicate {}", self.duplicate_probability)?;
        writeln!(f, "max-duplicates {}", self.max_duplicates)?;
        writeln!(f, "delay {} {}", self.delay_min, self.delay_max)?;
        writeln!(f, "reorder {}", onoff(self.reorder))?;
        writeln!(f, "fairness {}", onoff(self.fairness))?;
        writeln!(f, "max-events {}", self.max_events)?;
        writeln!(f, "unsafe {}", self.unsafe_mode)?;
        writeln!(f, "antientropy {}", onoff(self.antientropy.enabled))?;
        writeln!(f, "sync-period {}", self.antientropy.sync_period)?;
        writeln!(f, "guard {}", onoff(self.antientropy.guard))?;
        writeln!(f, "buffer-rejected {}", onoff(self.antientropy.buffer_rejected))?;
        writeln!(f, "force-empty-sync {}", onoff(self.antientropy.force_empty_sync))?;
        for (from, to) in &self.droplinks {
            writeln!(f, "droplink r{from} r{to}")?;
        }
        if self.check_convergence {
            writeln!(f, "check convergence")?;
        }
        if self.check_delivery {
            writeln!(f, "check delivery")?;
        }
        writeln!(f, "schedule")?;
        for op in &self.schedule {
            writeln!(f, "  {} {} {}", op.time, op.replica, op.op)?;
        }
        writeln!(f, "end")
    }
}

fn onoff(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

struct LineCtx<'a> {
    line_no: usize,
    raw: &'a str,
}

impl<'a> LineCtx<'a> {
    fn col_of(&self, token: &str) -> usize {
        // Byte offset of the token within the raw line, 1-based.
        self.raw.find(token).map(|i| i + 1).unwrap_or(1)
    }

    fn syntax(&self, token: &str, msg: impl Into<String>) -> ScenarioError {
        ScenarioError::Syntax {
            line: self.line_no,
            col: self.col_of(token),
            msg: msg.into(),
        }
    }

    fn semantic(&self, token: &str, msg: impl Into<String>) -> ScenarioError {
        ScenarioError::Semantic {
            line: self.line_no,
            col: self.col_of(token),
            msg: msg.into(),
        }
    }
}

fn parse_replica(ctx: &LineCtx<'_>, token: &str) -> Result<u32, ScenarioError> {
    let digits = token.strip_prefix('r').unwrap_or(token);
    digits
        .parse::<u32>()
        .map_err(|_| ctx.syntax(token, format!("expected a replica like r0, got `{token}`")))
}

fn parse_onoff(ctx: &LineCtx<'_>, token: &str) -> Result<bool, ScenarioError> {
    match token {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(ctx.syntax(token, format!("expected on/off, got `{token}`"))),
    }
}

fn parse_num<T: FromStr>(ctx: &LineCtx<'_>, token: &str, what: &str) -> Result<T, ScenarioError> {
    token
        .parse::<T>()
        .map_err(|_| ctx.syntax(token, format!("expected {what}, got `{token}`")))
}

fn valid_element(token: &str) -> bool {
    !token.is_empty()
        && token
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

/// Parses a scenario from text, reporting located syntax and semantic errors.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut sc = Scenario::default();
    let mut saw_kind = false;
    let mut saw_style = false;
    let mut saw_replicas = false;
    let mut explicit_checks = false;
    let mut in_schedule = false;
    let mut schedule_closed = false;

    for (i, raw) in text.lines().enumerate() {
        let ctx = LineCtx {
            line_no: i + 1,
            raw,
        };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let key = tokens.next().unwrap();
        let rest: Vec<&str> = tokens.collect();

        if in_schedule {
            if key == "end" {
                in_schedule = false;
                schedule_closed = true;
                continue;
            }
            // <time> <replica> <op> [arg]
            let time: u64 = parse_num(&ctx, key, "a virtual time")?;
            let [replica_tok, op_tok, args @ ..] = rest.as_slice() else {
                return Err(ctx.syntax(key, "schedule entry needs `<time> <replica> <op> [arg]`"));
            };
            let replica = ReplicaId::new(parse_replica(&ctx, replica_tok)?);
            let op = match (*op_tok, args) {
                ("inc", []) => ClientOp::Inc,
                ("dec", []) => ClientOp::Dec,
                ("insert", [x]) => ClientOp::Insert((*x).to_string()),
                ("add", [x]) => ClientOp::Add((*x).to_string()),
                ("remove", [x]) => ClientOp::Remove((*x).to_string()),
                ("insert" | "add" | "remove", []) => {
                    return Err(ctx.syntax(op_tok, format!("`{op_tok}` needs an element argument")))
                }
                _ => {
                    return Err(ctx.syntax(
                        op_tok,
                        format!("unknown operation `{op_tok}` (inc, dec, insert, add, remove)"),
                    ))
                }
            };
            if let ClientOp::Insert(x) | ClientOp::Add(x) | ClientOp::Remove(x) = &op {
                if !valid_element(x) {
                    return Err(ctx.semantic(
                        x,
                        "elements may use ASCII letters, digits, `_`, `-`, `.`",
                    ));
                }
            }
            sc.schedule.push(ScheduledOp { time, replica, op });
            continue;
        }

        match (key, rest.as_slice()) {
            ("crdt", [v]) => {
                sc.kind = v.parse().map_err(|e: String| ctx.semantic(v, e))?;
                saw_kind = true;
            }
            ("style", [v]) => {
                sc.style = v.parse().map_err(|e: String| ctx.semantic(v, e))?;
                saw_style = true;
            }
            ("replicas", [v]) => {
                sc.replicas = parse_num(&ctx, v, "a replica count")?;
                saw_replicas = true;
            }
            ("seed", [v]) => sc.seed = parse_num(&ctx, v, "a 64-bit seed")?,
            ("mode", [v]) => {
                sc.mode = match *v {
                    "relaxed" => DeliveryMode::Relaxed,
                    "causal" => DeliveryMode::CausalAtMostOnce,
                    _ => return Err(ctx.semantic(v, format!("unknown mode `{v}`"))),
                }
            }
            ("drop", [v]) => {
                sc.drop_probability = parse_num(&ctx, v, "a probability")?;
                if !(0.0..=1.0).contains(&sc.drop_probability) {
                    return Err(ctx.semantic(v, format!("probability {v} outside [0,1]")));
                }
            }
            ("duplicate", [v]) => {
                sc.duplicate_probability = parse_num(&ctx, v, "a probability")?;
                if !(0.0..=1.0).contains(&sc.duplicate_probability) {
                    return Err(ctx.semantic(v, format!("probability {v} outside [0,1]")));
                }
            }
            ("max-duplicates", [v]) => sc.max_duplicates = parse_num(&ctx, v, "a count")?,
            ("delay", [lo, hi]) => {
                sc.delay_min = parse_num(&ctx, lo, "a delay")?;
                sc.delay_max = parse_num(&ctx, hi, "a delay")?;
            }
            ("reorder", [v]) => sc.reorder = parse_onoff(&ctx, v)?,
            ("fairness", [v]) => sc.fairness = parse_onoff(&ctx, v)?,
            ("max-events", [v]) => sc.max_events = parse_num(&ctx, v, "an event bound")?,
            ("unsafe", [v]) => sc.unsafe_mode = parse_onoff(&ctx, v)?,
            ("antientropy", [v]) => sc.antientropy.enabled = parse_onoff(&ctx, v)?,
            ("sync-period", [v]) => sc.antientropy.sync_period = parse_num(&ctx, v, "a period")?,
            ("guard", [v]) => sc.antientropy.guard = parse_onoff(&ctx, v)?,
            ("buffer-rejected", [v]) => sc.antientropy.buffer_rejected = parse_onoff(&ctx, v)?,
            ("force-empty-sync", [v]) => {
                sc.antientropy.force_empty_sync = parse_onoff(&ctx, v)?
            }
            ("droplink", [from, to]) => {
                let from = parse_replica(&ctx, from)?;
                let to = parse_replica(&ctx, to)?;
                sc.droplinks.push((from, to));
            }
            ("check", [v]) => {
                if !explicit_checks {
                    sc.check_convergence = false;
                    sc.check_delivery = false;
                    explicit_checks = true;
                }
                match *v {
                    "convergence" => sc.check_convergence = true,
                    "delivery" => sc.check_delivery = true,
                    _ => {
                        return Err(ctx.semantic(
                            v,
                            format!("unknown check `{v}` (convergence, delivery)"),
                        ))
                    }
                }
            }
            ("schedule", []) => in_schedule = true,
            ("end", _) => {
                return Err(ctx.syntax(key, "`end` outside a schedule block"));
            }
            (key, args) => {
                return Err(if args.is_empty() || !known_key(key) {
                    ctx.syntax(key, format!("unknown directive `{key}`"))
                } else {
                    ctx.syntax(key, format!("wrong number of arguments for `{key}`"))
                });
            }
        }
    }

    if in_schedule {
        return Err(ScenarioError::Invalid("schedule block never closed with `end`".into()));
    }
    let _ = schedule_closed;
    for (missing, seen) in [("crdt", saw_kind), ("style", saw_style), ("replicas", saw_replicas)] {
        if !seen {
            return Err(ScenarioError::Invalid(format!("missing required key `{missing}`")));
        }
    }
    sc.validate()?;
    Ok(sc)
}

fn known_key(key: &str) -> bool {
    matches!(
        key,
        "crdt"
            | "style"
            | "replicas"
            | "seed"
            | "mode"
            | "drop"
            | "duplicate"
            | "max-duplicates"
            | "delay"
            | "reorder"
            | "fairness"
            | "max-events"
            | "unsafe"
            | "antientropy"
            | "sync-period"
            | "guard"
            | "buffer-rejected"
            | "force-empty-sync"
            | "droplink"
            | "check"
            | "schedule"
    )
}
