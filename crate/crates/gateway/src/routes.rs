//! HTTP surface. Every handler turns its request into one [`Command`] and
//! answers with the [`Reply`] envelope, or streams notifications.

use std::collections::{BTreeSet, VecDeque};
use std::convert::Infallible;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use domus_core::home::{DeviceDescriptor, DeviceId, SimTime};
use domus_core::interpreter::ClockMode;
use domus_core::keyboard::{CompletionOption, Draft, InsertionPoint};
use domus_core::language::ProgramId;
use domus_core::service::{ApiError, Command, ErrorCode, Notification, Outcome, Reply};
use domus_core::trace::{RedactionPolicy, TimelineQuery, TraceCategory, TraceEntry};
use futures::Stream;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value as JsonValue};
use tokio::sync::broadcast::error::RecvError;
use tokio::sync::broadcast::Receiver;

use crate::hub::Hub;

pub fn status_of(code: ErrorCode) -> StatusCode {
    match code {
        ErrorCode::NotFound => StatusCode::NOT_FOUND,
        ErrorCode::Conflict => StatusCode::CONFLICT,
        ErrorCode::Validation => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorCode::Denied => StatusCode::FORBIDDEN,
        ErrorCode::Stale => StatusCode::PRECONDITION_FAILED,
        ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn envelope(reply: Reply) -> Response {
    let status = reply.error().map_or(StatusCode::OK, |e| status_of(e.code));
    (status, Json(reply)).into_response()
}

fn refusal(hub: &Hub, status: StatusCode, reason: &str, message: String) -> Response {
    let seen = hub.observed();
    let error = ApiError::new(ErrorCode::Validation, reason, message);
    (status, Json(Reply { generation: seen.generation, now: seen.now, outcome: Outcome::Error(error) })).into_response()
}

fn stopped(hub: &Hub) -> Response {
    let seen = hub.observed();
    let error = ApiError::new(ErrorCode::Internal, "stopped", "the command loop has stopped");
    (StatusCode::SERVICE_UNAVAILABLE, Json(Reply { generation: seen.generation, now: seen.now, outcome: Outcome::Error(error) }))
        .into_response()
}

async fn run(hub: &Hub, command: Command) -> Response {
    match hub.call(command).await {
        Ok(reply) => envelope(reply),
        Err(_) => stopped(hub),
    }
}

/// JSON body whose rejections use the error envelope.
pub struct Body<T>(pub T);

impl<T: DeserializeOwned> FromRequest<Hub> for Body<T> {
    type Rejection = Response;

    async fn from_request(req: Request, hub: &Hub) -> Result<Self, Response> {
        match Json::<T>::from_request(req, hub).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e @ JsonRejection::JsonSyntaxError(_)) => Err(refusal(hub, StatusCode::BAD_REQUEST, "bad_json", e.body_text())),
            Err(e) => Err(refusal(hub, e.status(), "bad_body", e.body_text())),
        }
    }
}

/// Query string whose rejections use the error envelope.
pub struct Params<T>(pub T);

impl<T: DeserializeOwned> FromRequestParts<Hub> for Params<T> {
    type Rejection = Response;

    async fn from_request_parts(parts: &mut Parts, hub: &Hub) -> Result<Self, Response> {
        match Query::<T>::from_request_parts(parts, hub).await {
            Ok(Query(v)) => Ok(Params(v)),
            Err(e) => Err(refusal(hub, StatusCode::BAD_REQUEST, "bad_query", QueryRejection::body_text(&e))),
        }
    }
}

pub fn router(hub: Hub) -> Router {
    Router::new()
        .route("/api/status", get(status))
        .route("/api/commands", post(command))
        .route("/api/devices", get(list_devices).post(register_device))
        .route("/api/devices/{id}", axum::routing::delete(unregister_device))
        .route("/api/devices/{id}/actions/{action}", post(device_action))
        .route("/api/devices/{id}/critical", put(set_critical))
        .route("/api/devices/{id}/events/{event}", post(emit_event))
        .route("/api/programs", get(list_programs).post(save_program))
        .route("/api/programs/{id}", get(program_snapshot).delete(delete_program))
        .route("/api/programs/{id}/start", post(start_program))
        .route("/api/programs/{id}/stop", post(stop_program))
        .route("/api/programs/{id}/draft", get(open_program))
        .route("/api/editor/completion", post(completion))
        .route("/api/editor/apply", post(apply))
        .route("/api/editor/delete", post(delete_at))
        .route("/api/traces", get(traces))
        .route("/api/traces/redacted", post(traces_redacted))
        .route("/api/depgraph", get(depgraph))
        .route("/api/clock/mode", put(clock_mode))
        .route("/api/clock/factor", put(clock_factor))
        .route("/api/clock/advance", post(clock_advance))
        .route("/api/clock/pause", post(clock_pause))
        .route("/api/clock/resume", post(clock_resume))
        .route("/api/scenario", post(load_scenario))
        .route("/api/scenario/play-to", post(play_to))
        .route("/api/scenario/step", post(step))
        .route("/api/events", get(events))
        .with_state(hub)
}

async fn status(State(hub): State<Hub>) -> Response {
    run(&hub, Command::Status).await
}

async fn command(State(hub): State<Hub>, Body(c): Body<Command>) -> Response {
    run(&hub, c).await
}

// ---- devices

async fn list_devices(State(hub): State<Hub>) -> Response {
    run(&hub, Command::ListDevices).await
}

#[derive(Deserialize)]
struct Registration {
    device: DeviceDescriptor,
    #[serde(default)]
    state: Map<String, JsonValue>,
}

async fn register_device(State(hub): State<Hub>, Body(r): Body<Registration>) -> Response {
    run(&hub, Command::RegisterDevice { device: r.device, state: r.state }).await
}

async fn unregister_device(State(hub): State<Hub>, Path(id): Path<String>) -> Response {
    run(&hub, Command::UnregisterDevice { id: DeviceId::new(id) }).await
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct ActionArgs {
    args: Vec<JsonValue>,
}

/// A JSON body that may be left out entirely.
fn optional<T: DeserializeOwned + Default>(hub: &Hub, body: &Bytes) -> Result<T, Response> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| refusal(hub, StatusCode::BAD_REQUEST, "bad_json", e.to_string()))
}

async fn device_action(State(hub): State<Hub>, Path((id, action)): Path<(String, String)>, body: Bytes) -> Response {
    let args = match optional::<ActionArgs>(&hub, &body) {
        Ok(a) => a.args,
        Err(r) => return r,
    };
    run(&hub, Command::DeviceAction { id: DeviceId::new(id), action, args }).await
}

#[derive(Deserialize)]
struct Critical {
    critical: bool,
}

async fn set_critical(State(hub): State<Hub>, Path(id): Path<String>, Body(c): Body<Critical>) -> Response {
    run(&hub, Command::SetCritical { id: DeviceId::new(id), critical: c.critical }).await
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct Payload {
    payload: Map<String, JsonValue>,
}

async fn emit_event(State(hub): State<Hub>, Path((id, event)): Path<(String, String)>, body: Bytes) -> Response {
    let payload = match optional::<Payload>(&hub, &body) {
        Ok(p) => p.payload,
        Err(r) => return r,
    };
    run(&hub, Command::EmitEvent { source: DeviceId::new(id), event, payload }).await
}

// ---- programs

async fn list_programs(State(hub): State<Hub>) -> Response {
    run(&hub, Command::ListPrograms).await
}

#[derive(Deserialize)]
struct Source {
    source: String,
}

async fn save_program(State(hub): State<Hub>, Body(s): Body<Source>) -> Response {
    run(&hub, Command::SaveProgram { source: s.source }).await
}

async fn delete_program(State(hub): State<Hub>, Path(id): Path<String>) -> Response {
    run(&hub, Command::DeleteProgram { id: ProgramId::new(id) }).await
}

async fn start_program(State(hub): State<Hub>, Path(id): Path<String>) -> Response {
    run(&hub, Command::StartProgram { id: ProgramId::new(id) }).await
}

async fn stop_program(State(hub): State<Hub>, Path(id): Path<String>) -> Response {
    run(&hub, Command::StopProgram { id: ProgramId::new(id) }).await
}

async fn program_snapshot(State(hub): State<Hub>, Path(id): Path<String>) -> Response {
    run(&hub, Command::ProgramSnapshot { id: ProgramId::new(id) }).await
}

async fn open_program(State(hub): State<Hub>, Path(id): Path<String>) -> Response {
    run(&hub, Command::OpenProgram { id: ProgramId::new(id) }).await
}

// ---- smart keyboard

#[derive(Deserialize, Default)]
#[serde(default)]
struct CompletionRequest {
    draft: Draft,
    point: Option<InsertionPoint>,
}

async fn completion(State(hub): State<Hub>, Body(r): Body<CompletionRequest>) -> Response {
    run(&hub, Command::Completion { draft: r.draft, point: r.point }).await
}

#[derive(Deserialize)]
struct ApplyRequest {
    #[serde(default)]
    draft: Draft,
    point: InsertionPoint,
    option: CompletionOption,
    text: Option<String>,
}

async fn apply(State(hub): State<Hub>, Body(r): Body<ApplyRequest>) -> Response {
    run(&hub, Command::Apply { draft: r.draft, point: r.point, option: r.option, text: r.text }).await
}

#[derive(Deserialize)]
struct DeleteRequest {
    #[serde(default)]
    draft: Draft,
    point: InsertionPoint,
}

async fn delete_at(State(hub): State<Hub>, Body(r): Body<DeleteRequest>) -> Response {
    run(&hub, Command::DeleteAt { draft: r.draft, point: r.point }).await
}

// ---- timeline

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
enum Format {
    #[default]
    Json,
    /// One entry per line, as stored.
    Jsonl,
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct TraceParams {
    from: Option<SimTime>,
    to: Option<SimTime>,
    subject: Option<String>,
    /// Comma-separated category names.
    categories: Option<String>,
    limit: Option<usize>,
    cursor: Option<String>,
    format: Format,
}

fn categories(list: &str) -> Result<BTreeSet<TraceCategory>, String> {
    list.split(',')
        .filter(|c| !c.is_empty())
        .map(|c| serde_json::from_value(JsonValue::String(c.trim().into())).map_err(|_| format!("unknown category {c:?}")))
        .collect()
}

/// Entries of a successful page as JSON lines; anything else unchanged.
fn export(reply: Reply, format: Format) -> Response {
    let entries = match (&reply.outcome, format) {
        (Outcome::Ok(page), Format::Jsonl) => serde_json::from_value::<Vec<TraceEntry>>(page["entries"].clone()).ok(),
        _ => None,
    };
    let Some(entries) = entries else { return envelope(reply) };
    let mut text = String::new();
    for e in entries {
        text.push_str(&serde_json::to_string(&e).expect("entries serialize"));
        text.push('\n');
    }
    ([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response()
}

async fn traces(State(hub): State<Hub>, Params(p): Params<TraceParams>) -> Response {
    let categories = match p.categories.as_deref().map(categories).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(message) => return refusal(&hub, StatusCode::BAD_REQUEST, "bad_query", message),
    };
    let query = TimelineQuery { from: p.from, to: p.to, subject: p.subject, categories, limit: p.limit, cursor: p.cursor };
    match hub.call(Command::Traces { query }).await {
        Ok(reply) => export(reply, p.format),
        Err(_) => stopped(&hub),
    }
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct RedactedRequest {
    query: TimelineQuery,
    policy: RedactionPolicy,
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct FormatParam {
    format: Format,
}

async fn traces_redacted(State(hub): State<Hub>, Params(f): Params<FormatParam>, Body(r): Body<RedactedRequest>) -> Response {
    match hub.call(Command::TracesRedacted { query: r.query, policy: r.policy }).await {
        Ok(reply) => export(reply, f.format),
        Err(_) => stopped(&hub),
    }
}

// ---- dependency graph

#[derive(Deserialize, Default)]
#[serde(default)]
struct GraphParams {
    annotated: bool,
    /// `dot` for Graphviz text.
    format: Option<String>,
}

async fn depgraph(State(hub): State<Hub>, Params(p): Params<GraphParams>) -> Response {
    let reply = match hub.call(Command::DepGraph { annotated: p.annotated }).await {
        Ok(r) => r,
        Err(_) => return stopped(&hub),
    };
    match (p.format.as_deref(), &reply.outcome) {
        (Some("dot"), Outcome::Ok(v)) => {
            let dot = v["dot"].as_str().unwrap_or_default().to_string();
            ([(header::CONTENT_TYPE, "text/vnd.graphviz")], dot).into_response()
        }
        _ => envelope(reply),
    }
}

// ---- clock and scenarios

async fn clock_mode(State(hub): State<Hub>, Body(mode): Body<ClockMode>) -> Response {
    run(&hub, Command::SetClockMode { mode }).await
}

#[derive(Deserialize)]
struct Factor {
    factor: u32,
}

async fn clock_factor(State(hub): State<Hub>, Body(f): Body<Factor>) -> Response {
    run(&hub, Command::SetFactor { factor: f.factor }).await
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct Advance {
    to: Option<SimTime>,
    by: Option<SimTime>,
}

async fn clock_advance(State(hub): State<Hub>, Body(a): Body<Advance>) -> Response {
    run(&hub, Command::Advance { to: a.to, by: a.by }).await
}

async fn clock_pause(State(hub): State<Hub>) -> Response {
    run(&hub, Command::Pause).await
}

async fn clock_resume(State(hub): State<Hub>) -> Response {
    run(&hub, Command::Resume).await
}

#[derive(Deserialize)]
struct ScenarioText {
    name: String,
    text: String,
}

async fn load_scenario(State(hub): State<Hub>, Body(s): Body<ScenarioText>) -> Response {
    run(&hub, Command::LoadScenario { name: s.name, text: s.text }).await
}

#[derive(Deserialize)]
struct PlayTo {
    at: SimTime,
}

async fn play_to(State(hub): State<Hub>, Body(p): Body<PlayTo>) -> Response {
    run(&hub, Command::PlayTo { at: p.at }).await
}

async fn step(State(hub): State<Hub>) -> Response {
    run(&hub, Command::Step).await
}

// ---- event stream

#[derive(Deserialize, Default)]
#[serde(default)]
struct StreamParams {
    /// Replay timeline entries with a larger seq first.
    after: Option<u64>,
}

struct Feed {
    hub: Hub,
    rx: Receiver<Notification>,
    pending: VecDeque<Event>,
    /// Highest trace seq sent.
    last: u64,
}

fn event(n: &Notification) -> Event {
    let (name, id) = match n {
        Notification::Trace { entry } => ("trace", Some(entry.seq)),
        Notification::Generation { .. } => ("generation", None),
        Notification::Clock { .. } => ("clock", None),
    };
    let e = Event::default().event(name).data(serde_json::to_string(n).expect("notifications serialize"));
    match id {
        Some(seq) => e.id(seq.to_string()),
        None => e,
    }
}

impl Feed {
    fn accept(&mut self, n: Notification) -> Option<Event> {
        if let Notification::Trace { entry } = &n {
            if entry.seq <= self.last {
                return None;
            }
            self.last = entry.seq;
        }
        Some(event(&n))
    }

    /// Queues every entry after `last` from the log itself.
    async fn backfill(&mut self) -> bool {
        let mut cursor = Some(format!("after:{}", self.last));
        while let Some(c) = cursor.take() {
            let query = TimelineQuery { cursor: Some(c), limit: Some(500), ..Default::default() };
            let Ok(reply) = self.hub.call(Command::Traces { query }).await else { return false };
            let Some(page) = reply.ok() else { return false };
            let entries: Vec<TraceEntry> = serde_json::from_value(page["entries"].clone()).unwrap_or_default();
            for entry in entries {
                if let Some(e) = self.accept(Notification::Trace { entry }) {
                    self.pending.push_back(e);
                }
            }
            cursor = page["next_cursor"].as_str().map(str::to_string);
        }
        let seen = self.hub.observed();
        self.pending.push_back(event(&Notification::Generation { generation: seen.generation }));
        true
    }
}

fn resume_point(headers: &HeaderMap, after: Option<u64>) -> Option<u64> {
    after.or_else(|| headers.get("last-event-id").and_then(|v| v.to_str().ok()).and_then(|v| v.parse().ok()))
}

async fn events(State(hub): State<Hub>, headers: HeaderMap, Params(p): Params<StreamParams>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    // subscribe before reading the backlog so nothing falls in between
    let rx = hub.subscribe();
    let mut feed = Feed { hub, rx, pending: VecDeque::new(), last: 0 };
    if let Some(after) = resume_point(&headers, p.after) {
        feed.last = after;
        feed.backfill().await;
    } else {
        // live only: skip everything already in the log
        if let Ok(reply) = feed.hub.call(Command::Status).await {
            feed.last = reply.ok().and_then(|s| s["last_seq"].as_u64()).unwrap_or(0);
        }
    }
    let stream = futures::stream::unfold(feed, |mut feed| async move {
        loop {
            if let Some(e) = feed.pending.pop_front() {
                return Some((Ok(e), feed));
            }
            match feed.rx.recv().await {
                Ok(n) => {
                    if let Some(e) = feed.accept(n) {
                        return Some((Ok(e), feed));
                    }
                }
                Err(RecvError::Lagged(missed)) => {
                    tracing::warn!(missed, "stream subscriber lagged; replaying from the log");
                    if !feed.backfill().await {
                        return None;
                    }
                }
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}
