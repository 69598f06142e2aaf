//! Deterministic execution of programs against the simulated home.
//!
//! One [`Engine`] owns the registry, the timeline, the clock and every
//! program instance. All work happens on the caller's thread in a fixed
//! order: timers by due time, events first in first out, and the firings of
//! one event by program start order then rule index. Start and stop take
//! effect immediately, inside the statement that asks for them.

pub mod clock;
pub mod eval;
pub mod instance;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use serde_json::{json, Value as Json};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::home::{
    ActionOutcome, DeviceDescriptor, DeviceId, DeviceState, HomeError, HomeEvent, Registry, RegistryDelta, SimTime,
    StateChange, TimeOfDay, Value,
};
use crate::language::{validate, Block, Program, ProgramId, Selector, Statement, StmtPath, Trigger, TypeError};
use crate::scenario::{Scenario, Step};
use crate::trace::{Cause, NewEntry, TraceCategory, TraceError, TraceLog};
use clock::{next_strike, SimClock, Timer, TimerPurpose};
use instance::Instance;
pub use clock::{ClockMode, DAY_MS, MINUTE_MS};
pub use instance::{InstanceSnapshot, Status};

/// Firings allowed while settling one step before the rest is dropped.
pub const MAX_FIRINGS_PER_STEP: usize = 1000;
/// Nesting allowed for programs starting programs within one statement.
pub const MAX_START_DEPTH: usize = 16;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unknown program {0}")]
    UnknownProgram(ProgramId),
    #[error("program {0} is already running")]
    AlreadyRunning(ProgramId),
    #[error("program {0} is not running")]
    NotRunning(ProgramId),
    #[error("program {0} is running")]
    ProgramRunning(ProgramId),
    #[error("program {program} has {} type error(s)", errors.len())]
    InvalidProgram { program: ProgramId, errors: Vec<TypeError> },
    #[error("cannot move the clock back from {now} ms to {to} ms")]
    TimeReversal { now: SimTime, to: SimTime },
    #[error(transparent)]
    Home(#[from] HomeError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

type Result<T, E = EngineError> = std::result::Result<T, E>;

#[derive(Debug, Clone)]
struct Firing {
    program: ProgramId,
    epoch: u64,
    rule: usize,
    origin: Json,
}

#[derive(Debug, Clone)]
struct Exec {
    program: ProgramId,
    epoch: u64,
    block: Block,
    index: usize,
}

#[derive(Debug)]
struct LoadedScenario {
    scenario: Scenario,
    base: SimTime,
}

pub struct Engine {
    registry: Registry,
    trace: TraceLog,
    clock: SimClock,
    programs: BTreeMap<ProgramId, Arc<Program>>,
    instances: BTreeMap<ProgramId, Instance>,
    scenario: Option<LoadedScenario>,
    /// Minutes of day with a scheduled strike.
    ticks: BTreeSet<u16>,
    events: VecDeque<HomeEvent>,
    firings: VecDeque<Firing>,
    next_epoch: u64,
    next_start_order: u64,
    start_depth: usize,
    wall_ms: Option<u64>,
}

/// Plain JSON form of a device state.
pub fn state_json(state: &DeviceState) -> Json {
    Json::Object(state.values.iter().map(|(k, v)| (k.clone(), v.to_json())).collect())
}

fn values_json(values: &[Value]) -> Json {
    Json::Array(values.iter().map(Value::to_json).collect())
}

impl Engine {
    /// An engine over `registry`, with the clock resuming where the timeline ends.
    pub fn new(registry: Registry, trace: TraceLog) -> Self {
        let now = trace.last_at();
        Self {
            registry,
            trace,
            clock: SimClock::new(now),
            programs: BTreeMap::new(),
            instances: BTreeMap::new(),
            scenario: None,
            ticks: BTreeSet::new(),
            events: VecDeque::new(),
            firings: VecDeque::new(),
            next_epoch: 0,
            next_start_order: 0,
            start_depth: 0,
            wall_ms: None,
        }
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn trace(&self) -> &TraceLog {
        &self.trace
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    pub fn now(&self) -> SimTime {
        self.clock.now()
    }

    pub fn set_clock_mode(&mut self, mode: ClockMode) {
        self.clock.set_mode(mode);
    }

    /// Wall-clock stamp for entries recorded until the next call.
    pub fn set_wall_ms(&mut self, wall_ms: Option<u64>) {
        self.wall_ms = wall_ms;
    }

    pub fn programs(&self) -> impl Iterator<Item = &Program> {
        self.programs.values().map(|p| p.as_ref())
    }

    pub fn program(&self, id: &ProgramId) -> Option<&Program> {
        self.programs.get(id).map(|p| p.as_ref())
    }

    pub fn is_running(&self, id: &ProgramId) -> bool {
        self.instances.get(id).is_some_and(|i| i.running)
    }

    /// Stores a program definition. Returns false when it was already stored
    /// unchanged.
    pub fn store_program(&mut self, program: Program) -> Result<bool> {
        if let Some(old) = self.programs.get(&program.id) {
            if **old == program {
                return Ok(false);
            }
            if self.is_running(&program.id) {
                return Err(EngineError::ProgramRunning(program.id));
            }
        }
        self.instances.remove(&program.id);
        self.programs.insert(program.id.clone(), Arc::new(program));
        Ok(true)
    }

    pub fn remove_program(&mut self, id: &ProgramId) -> Result<Program> {
        if self.is_running(id) {
            return Err(EngineError::ProgramRunning(id.clone()));
        }
        self.instances.remove(id);
        let p = self.programs.remove(id).ok_or_else(|| EngineError::UnknownProgram(id.clone()))?;
        Ok(Arc::unwrap_or_clone(p))
    }

    pub fn snapshot(&self, id: &ProgramId) -> Result<InstanceSnapshot> {
        let program = self.programs.get(id).ok_or_else(|| EngineError::UnknownProgram(id.clone()))?;
        Ok(match self.instances.get(id) {
            Some(i) => i.snapshot(self.suspended(id)),
            None => InstanceSnapshot::idle(program),
        })
    }

    pub fn snapshots(&self) -> Vec<InstanceSnapshot> {
        self.programs.keys().map(|id| self.snapshot(id).expect("stored")).collect()
    }

    fn suspended(&self, id: &ProgramId) -> Vec<StmtPath> {
        self.clock
            .timers()
            .filter_map(|t| match t.purpose {
                TimerPurpose::Resume { program, block, index, .. } if program == *id => {
                    Some(StmtPath { block, index: index - 1 })
                }
                _ => None,
            })
            .collect()
    }

    /// Digest of everything but the clock reading: devices, instances,
    /// pending timers and the timeline length.
    pub fn state_digest(&self) -> String {
        let devices: Vec<_> = self.registry.devices().collect();
        let timers: Vec<Timer> = self.clock.timers().collect();
        let doc = json!({
            "generation": self.registry.generation(),
            "devices": devices,
            "instances": self.snapshots(),
            "timers": timers,
            "trace": self.trace.len(),
        });
        hex::encode(Sha256::digest(doc.to_string().as_bytes()))
    }

    fn record(&mut self, category: TraceCategory, subject: impl Into<String>, cause: &Cause, details: Json) -> Result<()> {
        let entry = NewEntry::new(self.clock.now(), category, subject, cause.clone()).details(details);
        self.trace.record(entry, self.wall_ms)?;
        Ok(())
    }

    // ---- registry commands

    pub fn register_device(&mut self, descriptor: DeviceDescriptor, state: DeviceState, cause: Cause) -> Result<RegistryDelta> {
        let id = descriptor.id.clone();
        let delta = self.registry.register_device(descriptor, state, self.clock.now())?;
        let record = self.registry.get(&id).expect("registered");
        let details = json!({
            "change": delta,
            "descriptor": record.descriptor,
            "state": state_json(&record.state),
        });
        self.registry_changed(&id, &cause, details)?;
        Ok(delta)
    }

    pub fn unregister_device(&mut self, id: &DeviceId, cause: Cause) -> Result<RegistryDelta> {
        let delta = self.registry.unregister_device(id)?;
        if delta.is_change() {
            self.registry_changed(id, &cause, json!({ "change": delta }))?;
        }
        Ok(delta)
    }

    pub fn set_critical(&mut self, id: &DeviceId, critical: bool, cause: Cause) -> Result<RegistryDelta> {
        let delta = self.registry.set_critical(id, critical)?;
        if delta.is_change() {
            self.registry_changed(id, &cause, json!({ "change": delta }))?;
        }
        Ok(delta)
    }

    fn registry_changed(&mut self, id: &DeviceId, cause: &Cause, details: Json) -> Result<()> {
        self.record(TraceCategory::RegistryChange, id.as_str(), cause, details)?;
        let running: Vec<ProgramId> = self.instances.iter().filter(|(_, i)| i.running).map(|(id, _)| id.clone()).collect();
        for p in running {
            let refs = eval::unknown_refs(&self.instances[&p].program, &self.registry);
            let inst = self.instances.get_mut(&p).expect("running");
            let before = inst.status();
            inst.unknown_refs = refs;
            let after = inst.status();
            if before != after {
                let refs: Vec<_> = inst.unknown_refs.iter().cloned().collect();
                self.record(
                    TraceCategory::ProgramLifecycle,
                    p.as_str(),
                    cause,
                    json!({ "status": after, "reason": "registry", "unknown_refs": refs }),
                )?;
            }
        }
        self.ensure_ticks();
        self.settle()
    }

    // ---- device commands

    /// Applies an action on behalf of the dashboard or another non-program
    /// caller. Denials by the critical guard are traced before the error is
    /// returned.
    pub fn device_action(&mut self, id: &DeviceId, action: &str, args: &[Value], cause: Cause) -> Result<ActionOutcome> {
        match self.registry.check_action(id, action, args) {
            Ok(_) | Err(HomeError::CriticalDeviceDenied { .. }) => {}
            Err(e) => return Err(e.into()),
        }
        let outcome = self.apply(id, action, args, &cause, None)?;
        self.settle()?;
        Ok(outcome?)
    }

    /// Accepts a sensor event, records it with its state effects and
    /// dispatches it.
    pub fn emit_event(&mut self, event: HomeEvent, cause: Cause) -> Result<HomeEvent> {
        let (event, changes) = self.registry.accept_event(event)?;
        self.accepted(&event, &changes, &cause)?;
        self.settle()?;
        Ok(event)
    }

    fn accepted(&mut self, event: &HomeEvent, changes: &[StateChange], cause: &Cause) -> Result<()> {
        let payload: serde_json::Map<_, _> = event.payload.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
        self.record(
            TraceCategory::DeviceEvent,
            event.source.as_str(),
            cause,
            json!({ "event": event.event_type, "payload": payload, "from_missing": event.from_missing }),
        )?;
        self.record_changes(changes, cause)?;
        self.events.push_back(event.clone());
        Ok(())
    }

    fn record_changes(&mut self, changes: &[StateChange], cause: &Cause) -> Result<()> {
        for c in changes {
            self.record(
                TraceCategory::StateChange,
                c.device.as_str(),
                cause,
                json!({ "var": c.var, "old": c.old.to_json(), "new": c.new.to_json() }),
            )?;
        }
        Ok(())
    }

    /// Applies one action and records its outcome. Home errors are traced as
    /// denials and handed back without aborting the caller.
    fn apply(
        &mut self,
        id: &DeviceId,
        action: &str,
        args: &[Value],
        cause: &Cause,
        path: Option<StmtPath>,
    ) -> Result<Result<ActionOutcome, HomeError>> {
        let now = self.clock.now();
        let path = path.map(|p| p.to_string());
        match self.registry.apply_action(id, action, args, now) {
            Ok(outcome) => {
                self.record(
                    TraceCategory::Action,
                    id.as_str(),
                    cause,
                    json!({ "action": action, "args": values_json(args), "path": path }),
                )?;
                self.record_changes(&outcome.changes, cause)?;
                for e in &outcome.events {
                    self.accepted(e, &[], cause)?;
                }
                Ok(Ok(outcome))
            }
            Err(e) => {
                self.record(
                    TraceCategory::Denial,
                    id.as_str(),
                    cause,
                    json!({ "action": action, "args": values_json(args), "path": path, "reason": e.to_string() }),
                )?;
                Ok(Err(e))
            }
        }
    }

    // ---- program lifecycle

    pub fn start(&mut self, id: &ProgramId, cause: Cause) -> Result<InstanceSnapshot> {
        self.start_program(id, &cause)?;
        self.settle()?;
        self.snapshot(id)
    }

    pub fn stop(&mut self, id: &ProgramId, cause: Cause) -> Result<InstanceSnapshot> {
        self.stop_program(id, &cause, "stop")?;
        self.settle()?;
        self.snapshot(id)
    }

    fn start_program(&mut self, id: &ProgramId, cause: &Cause) -> Result<()> {
        let program = self.programs.get(id).cloned().ok_or_else(|| EngineError::UnknownProgram(id.clone()))?;
        if self.is_running(id) {
            return Err(EngineError::AlreadyRunning(id.clone()));
        }
        let report = validate(&program, &self.registry);
        if !report.type_errors.is_empty() {
            return Err(EngineError::InvalidProgram { program: id.clone(), errors: report.type_errors });
        }
        self.next_epoch += 1;
        self.next_start_order += 1;
        let mut inst = Instance::new(program.clone(), self.next_epoch, self.next_start_order, self.clock.now());
        inst.unknown_refs = eval::unknown_refs(&program, &self.registry);
        for (r, rule) in program.rules.iter().enumerate() {
            if let Trigger::State(e) = &rule.trigger {
                inst.truth[r] = Some(eval::holds(e, &self.registry));
            }
        }
        let epoch = inst.epoch;
        let status = inst.status();
        let refs: Vec<_> = inst.unknown_refs.iter().cloned().collect();
        self.instances.insert(id.clone(), inst);
        self.record(
            TraceCategory::ProgramLifecycle,
            id.as_str(),
            cause,
            json!({ "status": status, "reason": "start", "unknown_refs": refs }),
        )?;
        self.ensure_ticks();
        self.start_depth += 1;
        let done = self.run_block(Exec { program: id.clone(), epoch, block: Block::Imperative, index: 0 });
        self.start_depth -= 1;
        done
    }

    fn stop_program(&mut self, id: &ProgramId, cause: &Cause, reason: &str) -> Result<()> {
        if !self.programs.contains_key(id) {
            return Err(EngineError::UnknownProgram(id.clone()));
        }
        let Some(inst) = self.instances.get_mut(id).filter(|i| i.running) else {
            return Err(EngineError::NotRunning(id.clone()));
        };
        self.next_epoch += 1;
        inst.running = false;
        inst.epoch = self.next_epoch;
        inst.unknown_refs.clear();
        self.clock.retain(|p| !matches!(p, TimerPurpose::Resume { program, .. } if program == id));
        self.firings.retain(|f| f.program != *id);
        self.record(TraceCategory::ProgramLifecycle, id.as_str(), cause, json!({ "status": Status::Stopped, "reason": reason }))
    }

    fn is_current(&self, id: &ProgramId, epoch: u64) -> bool {
        self.instances.get(id).is_some_and(|i| i.running && i.epoch == epoch)
    }

    /// Runs a block from `exec.index` until it ends, waits, or its program stops.
    fn run_block(&mut self, exec: Exec) -> Result<()> {
        let Exec { program: id, epoch, block, index } = exec;
        let cause = Cause::Program(id.clone());
        let program = match self.instances.get(&id) {
            Some(i) if i.running && i.epoch == epoch => i.program.clone(),
            _ => return Ok(()),
        };
        let statements = program.block(block);
        for (i, statement) in statements.iter().enumerate().skip(index) {
            if !self.is_current(&id, epoch) {
                return Ok(());
            }
            let path = StmtPath { block, index: i };
            *self.instances.get_mut(&id).expect("current").statement_counters.entry(path).or_default() += 1;
            match statement {
                Statement::Wait(ms) => {
                    self.record(TraceCategory::Statement, id.as_str(), &cause, json!({ "path": path, "statement": "wait", "ms": ms }))?;
                    let due = self.clock.now() + ms;
                    self.clock.schedule(due, TimerPurpose::Resume { program: id.clone(), epoch, block, index: i + 1 });
                    return Ok(());
                }
                Statement::Start(target) => self.start_statement(&id, path, target)?,
                Statement::Stop(target) => {
                    let outcome = if self.is_running(target) { "stopped" } else { "not-running" };
                    self.record(
                        TraceCategory::Statement,
                        id.as_str(),
                        &cause,
                        json!({ "path": path, "statement": "stop", "program": target, "outcome": outcome }),
                    )?;
                    if outcome == "stopped" {
                        self.stop_program(target, &cause, "stop")?;
                    }
                }
                Statement::Action { target, action, args } => self.action_statement(&id, path, target, action, args)?,
            }
        }
        if block == Block::Imperative && self.is_current(&id, epoch) {
            self.instances.get_mut(&id).expect("current").imperative_done = true;
            if program.rules.is_empty() {
                self.stop_program(&id, &cause, "completed")?;
            }
        }
        Ok(())
    }

    fn start_statement(&mut self, id: &ProgramId, path: StmtPath, target: &ProgramId) -> Result<()> {
        let cause = Cause::Program(id.clone());
        let outcome = if !self.programs.contains_key(target) {
            "unknown-program"
        } else if self.is_running(target) {
            "already-running"
        } else if self.start_depth >= MAX_START_DEPTH {
            "depth-limit"
        } else {
            "started"
        };
        self.record(
            TraceCategory::Statement,
            id.as_str(),
            &cause,
            json!({ "path": path, "statement": "start", "program": target, "outcome": outcome }),
        )?;
        match outcome {
            "started" => match self.start_program(target, &cause) {
                Err(EngineError::InvalidProgram { errors, .. }) => {
                    let messages: Vec<_> = errors.iter().map(|e| format!("{}: {}", e.path, e.message)).collect();
                    self.record(TraceCategory::Denial, target.as_str(), &cause, json!({ "path": path, "reason": messages }))
                }
                other => other,
            },
            "depth-limit" => self.record(
                TraceCategory::CascadeLimit,
                target.as_str(),
                &cause,
                json!({ "path": path, "limit": MAX_START_DEPTH }),
            ),
            _ => Ok(()),
        }
    }

    fn action_statement(&mut self, id: &ProgramId, path: StmtPath, target: &Selector, action: &str, args: &[Value]) -> Result<()> {
        let cause = Cause::Program(id.clone());
        let targets = eval::resolve(target, &self.registry);
        if let (Selector::ById(device), true) = (target, targets.is_empty()) {
            self.record(
                TraceCategory::Statement,
                id.as_str(),
                &cause,
                json!({ "path": path, "statement": "action", "action": action, "targets": 0, "outcome": "skipped" }),
            )?;
            self.record(TraceCategory::DegradedSkip, id.as_str(), &cause, json!({ "path": path, "device": device, "action": action }))?;
            let inst = self.instances.get_mut(id).expect("current");
            if inst.unknown_refs.insert(path.to_string()) && inst.unknown_refs.len() == 1 {
                self.record(
                    TraceCategory::ProgramLifecycle,
                    id.as_str(),
                    &cause,
                    json!({ "status": Status::Degraded, "reason": "skip", "unknown_refs": [path] }),
                )?;
            }
            return Ok(());
        }
        self.record(
            TraceCategory::Statement,
            id.as_str(),
            &cause,
            json!({ "path": path, "statement": "action", "action": action, "targets": targets.len(), "outcome": "applied" }),
        )?;
        for device in &targets {
            // denials are traced and do not stop the statement
            self.apply(device, action, args, &cause, Some(path))?.ok();
        }
        Ok(())
    }

    // ---- dispatch

    fn dispatch(&mut self, event: &HomeEvent) -> Vec<(u64, usize, Firing)> {
        let mut out = Vec::new();
        if event.from_missing {
            return out;
        }
        let Some(source) = self.registry.descriptor(&event.source) else { return out };
        let kind = self.registry.kind_of(&event.source);
        for (id, inst) in self.instances.iter().filter(|(_, i)| i.running) {
            for (r, rule) in inst.program.rules.iter().enumerate() {
                let Trigger::Event { selector, event: name, filter } = &rule.trigger else { continue };
                if *name != event.event_type || !selector.matches(source) {
                    continue;
                }
                if let Some(want) = filter {
                    let field = kind.and_then(|k| k.event(name)).and_then(|d| d.filter.as_ref()).map(|f| f.field.as_str());
                    if field.and_then(|f| event.payload.get(f)) != Some(want) {
                        continue;
                    }
                }
                let origin = json!({ "event": event.event_type, "source": event.source });
                out.push((inst.start_order, r, Firing { program: id.clone(), epoch: inst.epoch, rule: r, origin }));
            }
        }
        out
    }

    /// Re-evaluates state rules and returns firings for rising edges.
    fn edges(&mut self) -> Vec<(u64, usize, Firing)> {
        let mut out = Vec::new();
        let registry = &self.registry;
        for (id, inst) in self.instances.iter_mut().filter(|(_, i)| i.running) {
            let program = inst.program.clone();
            for (r, rule) in program.rules.iter().enumerate() {
                let Trigger::State(e) = &rule.trigger else { continue };
                let now = eval::holds(e, registry);
                let before = inst.truth[r].replace(now);
                if now && before == Some(false) {
                    let origin = json!({ "edge": true });
                    out.push((inst.start_order, r, Firing { program: id.clone(), epoch: inst.epoch, rule: r, origin }));
                }
            }
        }
        out
    }

    fn enqueue(&mut self, mut firings: Vec<(u64, usize, Firing)>) {
        firings.sort_by_key(|(order, rule, _)| (*order, *rule));
        self.firings.extend(firings.into_iter().map(|(_, _, f)| f));
    }

    /// Runs queued firings and events until both queues are empty.
    fn settle(&mut self) -> Result<()> {
        let edges = self.edges();
        self.enqueue(edges);
        let mut fired = 0;
        loop {
            if let Some(f) = self.firings.pop_front() {
                if fired == MAX_FIRINGS_PER_STEP {
                    let dropped = self.firings.len() + 1;
                    self.firings.clear();
                    self.events.clear();
                    self.record(
                        TraceCategory::CascadeLimit,
                        f.program.as_str(),
                        &Cause::Program(f.program.clone()),
                        json!({ "limit": MAX_FIRINGS_PER_STEP, "dropped_firings": dropped }),
                    )?;
                    return Ok(());
                }
                fired += 1;
                self.fire(f)?;
                let edges = self.edges();
                self.enqueue(edges);
            } else if let Some(event) = self.events.pop_front() {
                let mut firings = self.dispatch(&event);
                firings.extend(self.edges());
                self.enqueue(firings);
            } else {
                return Ok(());
            }
        }
    }

    fn fire(&mut self, f: Firing) -> Result<()> {
        if !self.is_current(&f.program, f.epoch) {
            return Ok(());
        }
        self.instances.get_mut(&f.program).expect("current").rule_counters[f.rule] += 1;
        self.record(
            TraceCategory::RuleFired,
            f.program.as_str(),
            &Cause::Program(f.program.clone()),
            json!({ "rule": f.rule, "origin": f.origin }),
        )?;
        self.run_block(Exec { program: f.program, epoch: f.epoch, block: Block::Rule(f.rule), index: 0 })
    }

    // ---- time

    /// Schedules strikes for every armed clock trigger that lacks one.
    fn ensure_ticks(&mut self) {
        let mut wanted = BTreeSet::new();
        for inst in self.instances.values().filter(|i| i.running) {
            for rule in &inst.program.rules {
                if let Some(m) = self.strike_minutes(&rule.trigger) {
                    wanted.insert(m);
                }
            }
        }
        for m in wanted {
            if self.ticks.insert(m) {
                let due = next_strike(self.clock.now(), m);
                self.clock.schedule(due, TimerPurpose::ClockTick { minutes: m });
            }
        }
    }

    /// Minute of day a trigger waits for, if it is a clock strike.
    fn strike_minutes(&self, trigger: &Trigger) -> Option<u16> {
        let Trigger::Event { selector, event, filter: Some(Value::Time(t)) } = trigger else { return None };
        let kind = match selector {
            Selector::ById(id) => self.registry.kind_of(id),
            other => other.kind().and_then(|k| self.registry.catalog().kind(k)),
        }?;
        kind.event(event).filter(|e| e.clock_tick).map(|_| t.minutes())
    }

    fn strike(&mut self, minutes: u16) -> Result<()> {
        self.ticks.remove(&minutes);
        let time = Value::Time(TimeOfDay::from_minutes(minutes).expect("valid minute"));
        let mut strikes = Vec::new();
        for record in self.registry.available() {
            let d = &record.descriptor;
            let Some(kind) = self.registry.catalog().kind(&d.kind) else { continue };
            for def in kind.events.values().filter(|e| e.clock_tick) {
                let Some(filter) = &def.filter else { continue };
                let armed = self.instances.values().filter(|i| i.running).any(|i| {
                    i.program.rules.iter().any(|r| {
                        matches!(&r.trigger, Trigger::Event { selector, event, filter: Some(v) }
                            if *event == def.name && *v == time && selector.matches(d))
                    })
                });
                if armed {
                    strikes.push(HomeEvent::new(d.id.as_str(), &def.name, self.clock.now()).with(&filter.field, time.clone()));
                }
            }
        }
        for e in strikes {
            let (e, changes) = self.registry.accept_event(e)?;
            self.accepted(&e, &changes, &Cause::Clock)?;
        }
        self.ensure_ticks();
        self.settle()
    }

    /// Processes every timer due up to `to`, then sets the clock to `to`.
    /// Returns the number of timers processed.
    pub fn advance(&mut self, to: SimTime) -> Result<usize> {
        let now = self.clock.now();
        if to < now {
            return Err(EngineError::TimeReversal { now, to });
        }
        let mut steps = 0;
        while let Some(timer) = self.clock.pop_due(to) {
            self.clock.set_now(timer.due);
            self.run_timer(timer.purpose)?;
            steps += 1;
        }
        self.clock.set_now(to);
        Ok(steps)
    }

    /// Moves to the next pending timer and processes every timer due then.
    pub fn step(&mut self) -> Result<Option<SimTime>> {
        let Some(due) = self.clock.next_due() else { return Ok(None) };
        self.advance(due)?;
        Ok(Some(due))
    }

    pub fn next_due(&self) -> Option<SimTime> {
        self.clock.next_due()
    }

    fn run_timer(&mut self, purpose: TimerPurpose) -> Result<()> {
        match purpose {
            TimerPurpose::Resume { program, epoch, block, index } => {
                self.run_block(Exec { program, epoch, block, index })?;
                self.settle()
            }
            TimerPurpose::ClockTick { minutes } => self.strike(minutes),
            TimerPurpose::ScenarioStep { index } => self.scenario_step(index),
        }
    }

    // ---- scenarios

    /// Loads a scenario whose step times count from now. Replaces the steps
    /// of a previously loaded scenario that have not run yet.
    pub fn load_scenario(&mut self, scenario: Scenario) {
        self.clock.retain(|p| !matches!(p, TimerPurpose::ScenarioStep { .. }));
        let base = self.clock.now();
        for (index, s) in scenario.steps.iter().enumerate() {
            self.clock.schedule(base + s.at, TimerPurpose::ScenarioStep { index });
        }
        self.scenario = Some(LoadedScenario { scenario, base });
    }

    pub fn scenario(&self) -> Option<(&Scenario, SimTime)> {
        self.scenario.as_ref().map(|l| (&l.scenario, l.base))
    }

    fn scenario_step(&mut self, index: usize) -> Result<()> {
        let Some(step) = self.scenario.as_ref().map(|l| l.scenario.steps[index].clone()) else { return Ok(()) };
        let cause = Cause::Scenario;
        let outcome = match &step.step {
            Step::RegisterDevice { device, state } => {
                let kind = self.registry.catalog().kind(&device.kind).cloned();
                match kind.map(|k| crate::home::state_from_json(&k, state)) {
                    Some(Ok(state)) => self.register_device(device.clone(), state, cause.clone()).map(|_| ()),
                    Some(Err(e)) => Err(e.into()),
                    None => Err(HomeError::UnknownKind(device.kind.clone()).into()),
                }
            }
            Step::UnregisterDevice { id } => self.unregister_device(id, cause.clone()).map(|_| ()),
            Step::SetCritical { id, critical } => self.set_critical(id, *critical, cause.clone()).map(|_| ()),
            Step::EmitEvent { source, event, payload } => {
                match self.registry.event_from_json(source, event, payload, self.clock.now()) {
                    Ok(e) => self.emit_event(e, cause.clone()).map(|_| ()),
                    Err(e) => Err(e.into()),
                }
            }
            Step::Marker { label } => {
                let name = self.scenario.as_ref().map(|l| l.scenario.name.clone()).unwrap_or_default();
                self.record(TraceCategory::Marker, name, &cause, json!({ "label": label, "line": step.line }))
            }
        };
        match outcome {
            Err(EngineError::Home(e)) => {
                let subject = match &step.step {
                    Step::RegisterDevice { device, .. } => device.id.to_string(),
                    Step::UnregisterDevice { id } | Step::SetCritical { id, .. } => id.to_string(),
                    Step::EmitEvent { source, .. } => source.to_string(),
                    Step::Marker { .. } => String::new(),
                };
                self.record(TraceCategory::Denial, subject, &cause, json!({ "line": step.line, "reason": e.to_string() }))
            }
            other => other,
        }
    }
}

#[cfg(test)]
mod tests;
