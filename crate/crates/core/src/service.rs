//! Command/reply layer over the engine, the program store and the keyboard.
//!
//! A [`Service`] owns all mutable state. Front ends serialize every call
//! through [`Service::execute`] and forward [`Notification`]s drained after
//! each command. Replies carry the registry generation and the clock reading
//! observed when the command completed.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value as Json};
use thiserror::Error;

use crate::analyzer::{annotate, extract, AnalyzerError};
use crate::home::{Catalog, DeviceDescriptor, DeviceId, HomeError, Registry, SimTime};
use crate::interpreter::{state_json, ClockMode, Engine, EngineError};
use crate::keyboard::{apply_option, delete_at, options, CompletionOption, Draft, InsertionPoint, KeyboardError};
use crate::language::{parse, to_text, validate, Grammar, ProgramId};
use crate::scenario::Scenario;
use crate::store::{ProgramStore, StoreError};
use crate::trace::{Cause, RedactionPolicy, TimelineQuery, TraceEntry, TraceError, TraceLog};

pub const TRACE_FILE: &str = "trace.jsonl";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "snake_case")]
pub enum Command {
    Status,
    ListDevices,
    RegisterDevice {
        device: DeviceDescriptor,
        #[serde(default)]
        state: Map<String, Json>,
    },
    UnregisterDevice {
        id: DeviceId,
    },
    DeviceAction {
        id: DeviceId,
        action: String,
        #[serde(default)]
        args: Vec<Json>,
    },
    SetCritical {
        id: DeviceId,
        critical: bool,
    },
    EmitEvent {
        source: DeviceId,
        event: String,
        #[serde(default)]
        payload: Map<String, Json>,
    },
    ListPrograms,
    SaveProgram {
        source: String,
    },
    DeleteProgram {
        id: ProgramId,
    },
    StartProgram {
        id: ProgramId,
    },
    StopProgram {
        id: ProgramId,
    },
    ProgramSnapshot {
        id: ProgramId,
    },
    /// A stored program as a draft, for editing.
    OpenProgram {
        id: ProgramId,
    },
    /// Options at `point`, or at the draft's leftmost hole.
    Completion {
        #[serde(default)]
        draft: Draft,
        point: Option<InsertionPoint>,
    },
    Apply {
        draft: Draft,
        point: InsertionPoint,
        option: CompletionOption,
        /// Text for an entry option.
        text: Option<String>,
    },
    DeleteAt {
        draft: Draft,
        point: InsertionPoint,
    },
    Traces {
        #[serde(default)]
        query: TimelineQuery,
    },
    TracesRedacted {
        #[serde(default)]
        query: TimelineQuery,
        #[serde(default)]
        policy: RedactionPolicy,
    },
    DepGraph {
        #[serde(default)]
        annotated: bool,
    },
    SetClockMode {
        mode: ClockMode,
    },
    SetFactor {
        factor: u32,
    },
    /// Immediate advance, in any mode, to `to` or by `by`.
    Advance {
        to: Option<SimTime>,
        by: Option<SimTime>,
    },
    Pause,
    Resume,
    /// Wall time elapsed since the previous tick. Moves the clock in
    /// accelerated and realtime modes unless paused.
    Tick {
        elapsed_ms: u64,
    },
    LoadScenario {
        name: String,
        text: String,
    },
    /// Runs the clock up to `at`: at once when simulated, otherwise by
    /// following the wall until `at` is reached, then pausing.
    PlayTo {
        at: SimTime,
    },
    /// Jumps to the next pending timer.
    Step,
}

impl Command {
    /// Whether the command may change state.
    pub fn is_mutation(&self) -> bool {
        !matches!(
            self,
            Command::Status
                | Command::ListDevices
                | Command::ListPrograms
                | Command::ProgramSnapshot { .. }
                | Command::OpenProgram { .. }
                | Command::Completion { .. }
                | Command::Apply { .. }
                | Command::DeleteAt { .. }
                | Command::Traces { .. }
                | Command::TracesRedacted { .. }
                | Command::DepGraph { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    NotFound,
    Conflict,
    Validation,
    /// Refused by the critical-device guard.
    Denied,
    /// Computed under an older grammar generation.
    Stale,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Error)]
#[error("{code:?}/{reason}: {message}")]
pub struct ApiError {
    pub code: ErrorCode,
    /// Machine-readable refinement of `code`, such as `already_running`.
    pub reason: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Json::is_null")]
    pub details: Json,
}

impl ApiError {
    pub fn new(code: ErrorCode, reason: &str, message: impl Into<String>) -> Self {
        Self { code, reason: reason.into(), message: message.into(), details: Json::Null }
    }

    fn with_details(mut self, details: Json) -> Self {
        self.details = details;
        self
    }
}

impl From<HomeError> for ApiError {
    fn from(e: HomeError) -> Self {
        use ErrorCode::*;
        let (code, reason) = match &e {
            HomeError::UnknownKind(_) => (Validation, "unknown_kind"),
            HomeError::UnknownDevice(_) => (NotFound, "unknown_device"),
            HomeError::MissingDevice(_) => (Conflict, "missing_device"),
            HomeError::DuplicateId(_) => (Conflict, "duplicate_id"),
            HomeError::KindMismatch { .. } => (Conflict, "kind_mismatch"),
            HomeError::InvalidIdentifier(_) => (Validation, "invalid_identifier"),
            HomeError::UnknownVariable { .. } => (Validation, "unknown_variable"),
            HomeError::DomainViolation { .. } => (Validation, "domain_violation"),
            HomeError::UnsupportedAction { .. } => (Validation, "unsupported_action"),
            HomeError::ArgumentCount { .. } => (Validation, "argument_count"),
            HomeError::UnknownEvent { .. } => (Validation, "unknown_event"),
            HomeError::PayloadViolation { .. } => (Validation, "payload_violation"),
            HomeError::CriticalDeviceDenied { .. } => (Denied, "critical_device_denied"),
        };
        ApiError::new(code, reason, e.to_string())
    }
}

impl From<TraceError> for ApiError {
    fn from(e: TraceError) -> Self {
        let (code, reason) = match &e {
            TraceError::BadRange { .. } => (ErrorCode::Validation, "bad_range"),
            TraceError::BadCursor(_) => (ErrorCode::Validation, "bad_cursor"),
            TraceError::ZeroLimit => (ErrorCode::Validation, "zero_limit"),
            TraceError::TimeRegression { .. } => (ErrorCode::Internal, "time_regression"),
            TraceError::Corrupt { .. } | TraceError::Io(_) => (ErrorCode::Internal, "trace_io"),
        };
        ApiError::new(code, reason, e.to_string())
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let message = e.to_string();
        match e {
            EngineError::UnknownProgram(_) => ApiError::new(ErrorCode::NotFound, "unknown_program", message),
            EngineError::AlreadyRunning(_) => ApiError::new(ErrorCode::Conflict, "already_running", message),
            EngineError::NotRunning(_) => ApiError::new(ErrorCode::Conflict, "not_running", message),
            EngineError::ProgramRunning(_) => ApiError::new(ErrorCode::Conflict, "program_running", message),
            EngineError::InvalidProgram { errors, .. } => {
                ApiError::new(ErrorCode::Validation, "invalid_program", message).with_details(json!(errors))
            }
            EngineError::TimeReversal { .. } => ApiError::new(ErrorCode::Validation, "time_reversal", message),
            EngineError::Home(e) => e.into(),
            EngineError::Trace(e) => e.into(),
        }
    }
}

impl From<KeyboardError> for ApiError {
    fn from(e: KeyboardError) -> Self {
        let code = match e {
            KeyboardError::StaleOption { .. } => ErrorCode::Stale,
            _ => ErrorCode::Validation,
        };
        let details = serde_json::to_value(&e).expect("keyboard error serializes");
        let reason = details["code"].as_str().unwrap_or("keyboard").to_string();
        ApiError::new(code, &reason, e.to_string()).with_details(details)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let (code, reason) = match &e {
            StoreError::BadId(_) => (ErrorCode::Validation, "bad_program_id"),
            StoreError::NotFound(_) => (ErrorCode::NotFound, "unknown_program"),
            StoreError::Corrupt { .. } | StoreError::Io(_) => (ErrorCode::Internal, "store_io"),
        };
        ApiError::new(code, reason, e.to_string())
    }
}

impl From<AnalyzerError> for ApiError {
    fn from(e: AnalyzerError) -> Self {
        ApiError::new(ErrorCode::Stale, "stale_graph", e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok(Json),
    Error(ApiError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    /// Registry (and grammar) generation after the command.
    pub generation: u64,
    /// Simulated clock after the command.
    pub now: SimTime,
    #[serde(flatten)]
    pub outcome: Outcome,
}

impl Reply {
    pub fn ok(&self) -> Option<&Json> {
        match &self.outcome {
            Outcome::Ok(v) => Some(v),
            Outcome::Error(_) => None,
        }
    }

    pub fn error(&self) -> Option<&ApiError> {
        match &self.outcome {
            Outcome::Ok(_) => None,
            Outcome::Error(e) => Some(e),
        }
    }
}

/// One push on the event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Notification {
    Trace { entry: TraceEntry },
    Generation { generation: u64 },
    Clock { now: SimTime, mode: ClockMode, paused: bool },
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Where programs and the trace log live; `None` keeps everything in memory.
    pub state_dir: Option<PathBuf>,
    pub catalog: Arc<Catalog>,
    pub clock_mode: ClockMode,
    pub scenario: Option<Scenario>,
    /// Start with the wall-driven clock paused.
    pub paused: bool,
    /// Stamp entries with wall time in accelerated and realtime modes.
    pub stamp_wall: bool,
}

impl ServiceConfig {
    pub fn new(catalog: Arc<Catalog>) -> Self {
        Self { state_dir: None, catalog, clock_mode: ClockMode::Simulated, scenario: None, paused: false, stamp_wall: false }
    }
}

#[derive(Debug, Error)]
pub enum OpenError {
    #[error("program store: {0}")]
    Store(#[from] StoreError),
    #[error("trace log: {0}")]
    Trace(#[from] TraceError),
    #[error("state directory {path}: {source}")]
    StateDir { path: PathBuf, source: std::io::Error },
}

pub struct Service {
    engine: Engine,
    store: Option<ProgramStore>,
    catalog: Arc<Catalog>,
    paused: bool,
    target: Option<SimTime>,
    stamp_wall: bool,
    seen_seq: u64,
    seen_generation: u64,
    seen_clock: (SimTime, ClockMode, bool),
}

type Res = Result<Json, ApiError>;

fn wall_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl Service {
    /// Opens the state directory, reloads stored programs (all Stopped),
    /// resumes the clock where the timeline ends and loads the scenario.
    pub fn open(config: ServiceConfig) -> Result<Self, OpenError> {
        let (trace, store) = match &config.state_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|source| OpenError::StateDir { path: dir.clone(), source })?;
                (TraceLog::open(dir.join(TRACE_FILE))?, Some(ProgramStore::open(dir, config.catalog.clone())?))
            }
            None => (TraceLog::in_memory(), None),
        };
        let mut engine = Engine::new(Registry::new(config.catalog.clone()), trace);
        engine.set_clock_mode(config.clock_mode);
        if let Some(store) = &store {
            for p in store.load_all()? {
                engine.store_program(p).expect("nothing runs yet");
            }
        }
        if let Some(s) = config.scenario {
            engine.load_scenario(s);
        }
        let seen_seq = engine.trace().last_seq();
        let seen_clock = (engine.now(), config.clock_mode, config.paused);
        Ok(Self {
            engine,
            store,
            catalog: config.catalog,
            paused: config.paused,
            target: None,
            stamp_wall: config.stamp_wall,
            seen_seq,
            seen_generation: 0,
            seen_clock,
        })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    /// The grammar editing clients complete against.
    pub fn grammar(&self) -> Grammar {
        Grammar::derive(self.engine.registry()).with_programs(self.engine.programs().map(|p| p.id.clone()))
    }

    pub fn execute(&mut self, command: Command) -> Reply {
        let stamp = self.stamp_wall && self.engine.clock().mode().factor().is_some();
        self.engine.set_wall_ms(stamp.then(wall_now));
        let outcome = match self.dispatch(command) {
            Ok(v) => Outcome::Ok(v),
            Err(e) => Outcome::Error(e),
        };
        Reply { generation: self.engine.registry().generation(), now: self.engine.now(), outcome }
    }

    /// Changes since the previous drain: new timeline entries in seq order,
    /// then the generation and clock if they moved.
    pub fn drain_notifications(&mut self) -> Vec<Notification> {
        let mut out: Vec<Notification> =
            self.engine.trace().since(self.seen_seq).iter().map(|e| Notification::Trace { entry: e.clone() }).collect();
        self.seen_seq = self.engine.trace().last_seq();
        let generation = self.engine.registry().generation();
        if generation != self.seen_generation {
            self.seen_generation = generation;
            out.push(Notification::Generation { generation });
        }
        let clock = (self.engine.now(), self.engine.clock().mode(), self.paused);
        if clock != self.seen_clock {
            self.seen_clock = clock;
            out.push(Notification::Clock { now: clock.0, mode: clock.1, paused: clock.2 });
        }
        out
    }

    fn status(&self) -> Json {
        json!({
            "generation": self.engine.registry().generation(),
            "now": self.engine.now(),
            "clock": self.engine.clock().mode(),
            "paused": self.paused,
            "play_target": self.target,
            "next_due": self.engine.next_due(),
            "trace_len": self.engine.trace().len(),
            "last_seq": self.engine.trace().last_seq(),
            "scenario": self.engine.scenario().map(|(s, base)| json!({ "name": s.name, "base": base, "steps": s.steps.len() })),
        })
    }

    fn devices(&self) -> Json {
        Json::Array(
            self.engine
                .registry()
                .devices()
                .map(|r| json!({ "descriptor": r.descriptor, "state": state_json(&r.state) }))
                .collect(),
        )
    }

    fn programs(&self) -> Json {
        let g = Grammar::permissive(self.catalog.clone());
        Json::Array(
            self.engine
                .programs()
                .map(|p| {
                    let snapshot = self.engine.snapshot(&p.id).expect("stored");
                    json!({ "id": p.id, "source": to_text(p, &g), "status": snapshot.status, "snapshot": snapshot })
                })
                .collect(),
        )
    }

    fn save(&mut self, source: &str) -> Res {
        let ids = self.engine.programs().map(|p| p.id.clone()).collect::<Vec<_>>();
        let header = Grammar::permissive(self.catalog.clone()).with_programs(ids);
        // The program's own name is a valid start/stop target only once it is
        // known, so parse twice when the first pass fails on it.
        let program = match parse(source, &header) {
            Ok(p) => p,
            Err(e) => {
                let id = source.split(':').next().and_then(|h| h.trim().strip_prefix("program")).map(str::trim);
                let retry = id.map(|id| header.clone().with_programs([ProgramId::new(id)]));
                match retry.map(|g| parse(source, &g)) {
                    Some(Ok(p)) => p,
                    _ => {
                        return Err(ApiError::new(ErrorCode::Validation, "syntax", e.to_string())
                            .with_details(serde_json::to_value(&e).unwrap_or(Json::Null)))
                    }
                }
            }
        };
        let report = validate(&program, self.engine.registry());
        if !report.type_errors.is_empty() {
            return Err(ApiError::new(ErrorCode::Validation, "invalid_program", format!("{} is not well typed", program.id))
                .with_details(json!(report.type_errors)));
        }
        let id = program.id.clone();
        let changed = self.engine.store_program(program.clone())?;
        if let Some(store) = &self.store {
            store.save(&program)?;
        }
        Ok(json!({ "id": id, "changed": changed, "unknowns": report.unknowns }))
    }

    fn delete(&mut self, id: &ProgramId) -> Res {
        self.engine.remove_program(id)?;
        if let Some(store) = &self.store {
            store.delete(id)?;
        }
        Ok(json!({ "id": id }))
    }

    fn editor_reply(&self, draft: &Draft, point: &InsertionPoint, g: &Grammar) -> Res {
        let sentence = draft.sentence(g);
        Ok(json!({
            "draft": draft,
            "point": point,
            "text": sentence.text(),
            "sentence": sentence,
            "complete": draft.to_program(g).is_ok(),
            "generation": g.generation,
        }))
    }

    fn advance_to(&mut self, to: SimTime) -> Res {
        let steps = self.engine.advance(to)?;
        Ok(json!({ "steps": steps, "now": self.engine.now() }))
    }

    fn tick(&mut self, elapsed_ms: u64) -> Res {
        let Some(factor) = self.engine.clock().mode().factor() else { return Ok(json!({ "steps": 0 })) };
        if self.paused {
            return Ok(json!({ "steps": 0 }));
        }
        let mut to = self.engine.now().saturating_add(elapsed_ms.saturating_mul(factor as u64));
        if let Some(target) = self.target {
            if to >= target {
                to = target;
                self.target = None;
                self.paused = true;
            }
        }
        self.advance_to(to)
    }

    fn dispatch(&mut self, command: Command) -> Res {
        let cause = Cause::Dashboard;
        match command {
            Command::Status => Ok(self.status()),
            Command::ListDevices => Ok(self.devices()),
            Command::RegisterDevice { device, state } => {
                let kind = self.catalog.kind(&device.kind).ok_or_else(|| HomeError::UnknownKind(device.kind.clone()))?;
                let state = crate::home::state_from_json(kind, &state)?;
                Ok(json!(self.engine.register_device(device, state, cause)?))
            }
            Command::UnregisterDevice { id } => Ok(json!(self.engine.unregister_device(&id, cause)?)),
            Command::SetCritical { id, critical } => Ok(json!(self.engine.set_critical(&id, critical, cause)?)),
            Command::DeviceAction { id, action, args } => {
                let args = self.engine.registry().action_args_from_json(&id, &action, &args)?;
                let outcome = self.engine.device_action(&id, &action, &args, cause)?;
                Ok(json!({ "changes": outcome.changes, "events": outcome.events }))
            }
            Command::EmitEvent { source, event, payload } => {
                let e = self.engine.registry().event_from_json(&source, &event, &payload, self.engine.now())?;
                Ok(json!(self.engine.emit_event(e, cause)?))
            }
            Command::ListPrograms => Ok(self.programs()),
            Command::SaveProgram { source } => self.save(&source),
            Command::DeleteProgram { id } => self.delete(&id),
            Command::StartProgram { id } => Ok(json!(self.engine.start(&id, cause)?)),
            Command::StopProgram { id } => Ok(json!(self.engine.stop(&id, cause)?)),
            Command::ProgramSnapshot { id } => Ok(json!(self.engine.snapshot(&id)?)),
            Command::OpenProgram { id } => {
                let program = self.engine.program(&id).ok_or_else(|| EngineError::UnknownProgram(id.clone()))?;
                let g = self.grammar();
                let draft = Draft::from_program(program, &g);
                let point = draft.next_hole(&g);
                self.editor_reply(&draft, &point, &g)
            }
            Command::Completion { draft, point } => {
                let g = self.grammar();
                let point = point.unwrap_or_else(|| draft.next_hole(&g));
                let options = options(&draft, &point, &g, self.engine.registry())?;
                Ok(json!({ "point": point, "options": options, "generation": g.generation }))
            }
            Command::Apply { draft, point, option, text } => {
                let g = self.grammar();
                let option = match text {
                    Some(t) => option.filled(&t)?,
                    None => option,
                };
                let (draft, point) = apply_option(&draft, &point, &option, &g, self.engine.registry())?;
                self.editor_reply(&draft, &point, &g)
            }
            Command::DeleteAt { draft, point } => {
                let g = self.grammar();
                let (draft, point) = delete_at(&draft, &point, &g)?;
                self.editor_reply(&draft, &point, &g)
            }
            Command::Traces { query } => Ok(json!(self.engine.trace().query(&query)?)),
            Command::TracesRedacted { query, policy } => Ok(json!(self.engine.trace().redacted(&query, &policy)?)),
            Command::DepGraph { annotated } => {
                let registry = self.engine.registry();
                let graph = extract(self.engine.programs(), registry);
                let graph = if annotated { annotate(graph, &self.engine.snapshots(), registry.generation())? } else { graph };
                let dot = graph.to_dot();
                Ok(json!({ "graph": graph, "dot": dot }))
            }
            Command::SetClockMode { mode } => {
                self.engine.set_clock_mode(mode);
                Ok(json!({ "clock": mode }))
            }
            Command::SetFactor { factor } => {
                if factor == 0 {
                    return Err(ApiError::new(ErrorCode::Validation, "bad_factor", "factor must be positive"));
                }
                let mode = ClockMode::Accelerated { factor };
                self.engine.set_clock_mode(mode);
                Ok(json!({ "clock": mode }))
            }
            Command::Advance { to, by } => {
                let to = match (to, by) {
                    (Some(to), None) => to,
                    (None, Some(by)) => self.engine.now().saturating_add(by),
                    _ => return Err(ApiError::new(ErrorCode::Validation, "bad_advance", "give exactly one of `to` and `by`")),
                };
                self.advance_to(to)
            }
            Command::Pause => {
                self.paused = true;
                Ok(json!({ "paused": true }))
            }
            Command::Resume => {
                self.paused = false;
                Ok(json!({ "paused": false }))
            }
            Command::Tick { elapsed_ms } => self.tick(elapsed_ms),
            Command::LoadScenario { name, text } => {
                let scenario = Scenario::parse(&name, &text, &self.catalog).map_err(|e| {
                    ApiError::new(ErrorCode::Validation, "malformed_scenario", e.to_string()).with_details(json!({ "line": e.line }))
                })?;
                let steps = scenario.steps.len();
                self.engine.load_scenario(scenario);
                Ok(json!({ "name": name, "steps": steps, "base": self.engine.now() }))
            }
            Command::PlayTo { at } => {
                let now = self.engine.now();
                if at < now {
                    return Err(EngineError::TimeReversal { now, to: at }.into());
                }
                if self.engine.clock().mode().factor().is_none() {
                    return self.advance_to(at);
                }
                self.target = Some(at);
                self.paused = at == now;
                Ok(json!({ "play_target": at }))
            }
            Command::Step => {
                let due = self.engine.step()?;
                Ok(json!({ "due": due, "now": self.engine.now() }))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn service() -> Service {
        Service::open(ServiceConfig::new(Arc::new(Catalog::builtin()))).unwrap()
    }

    fn ok(s: &mut Service, c: Json) -> Json {
        let r = s.execute(serde_json::from_value(c).unwrap());
        r.ok().cloned().unwrap_or_else(|| panic!("{:?}", r.error()))
    }

    #[test]
    fn commands_round_trip_through_json() {
        let mut s = service();
        ok(&mut s, json!({"verb": "register_device", "device": {"id": "lamp1", "kind": "lamp", "display_name": "Lamp", "location": "hall"}}));
        let saved = ok(&mut s, json!({"verb": "save_program", "source": "program P: blink the lamp1"}));
        assert_eq!(saved["changed"], true);
        let again = ok(&mut s, json!({"verb": "save_program", "source": "program P: blink the lamp1"}));
        assert_eq!(again["changed"], false);
        let snap = ok(&mut s, json!({"verb": "start_program", "id": "P"}));
        assert_eq!(snap["status"], "stopped");
        let r = s.execute(Command::StopProgram { id: "P".into() });
        assert_eq!(r.error().unwrap().reason, "not_running");
        let r = s.execute(Command::StartProgram { id: "Nope".into() });
        assert_eq!(r.error().unwrap().code, ErrorCode::NotFound);
        let n = s.drain_notifications();
        assert!(matches!(n.last(), Some(Notification::Generation { generation: 1 })));
        assert!(s.drain_notifications().is_empty());
    }

    #[test]
    fn self_starting_program_is_refused() {
        let mut s = service();
        let r = s.execute(Command::SaveProgram { source: "program Loop: start Loop".into() });
        assert_eq!(r.error().unwrap().reason, "invalid_program");
    }

    #[test]
    fn accelerated_play_to_stops_at_the_target() {
        let mut s = service();
        ok(&mut s, json!({"verb": "set_factor", "factor": 60}));
        ok(&mut s, json!({"verb": "play_to", "at": 90_000}));
        ok(&mut s, json!({"verb": "tick", "elapsed_ms": 1000}));
        assert_eq!(s.engine().now(), 60_000);
        ok(&mut s, json!({"verb": "tick", "elapsed_ms": 1000}));
        assert_eq!(s.engine().now(), 90_000);
        assert!(s.is_paused());
        ok(&mut s, json!({"verb": "tick", "elapsed_ms": 1000}));
        assert_eq!(s.engine().now(), 90_000);
    }
}
