use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use domus_core::home::Catalog;
use domus_core::service::{Service, ServiceConfig};
use domus_core::trace::TraceEntry;
use domus_gateway::{router, Hub};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> (Router, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ServiceConfig::new(Arc::new(Catalog::builtin()));
    config.state_dir = Some(dir.path().to_path_buf());
    (router(Hub::start(Service::open(config).unwrap())), dir)
}

async fn raw(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let res = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, text) = raw(app, method, uri, body).await;
    (status, serde_json::from_str(&text).unwrap_or_else(|e| panic!("{e}: {text}")))
}

async fn ok(app: &Router, method: Method, uri: &str, body: Option<Value>) -> Value {
    let (status, v) = call(app, method, uri, body).await;
    assert_eq!(status, StatusCode::OK, "{uri}: {v}");
    v["ok"].clone()
}

async fn home(app: &Router) {
    for (id, kind, name) in [("fridge", "plug", "Fridge plug"), ("tree-plug", "plug", "Tree plug"), ("tree-lamp", "lamp", "Tree lamp"), ("clock", "clock", "Clock")] {
        let body = json!({ "device": { "id": id, "kind": kind, "display_name": name, "location": "living" } });
        ok(app, Method::POST, "/api/devices", Some(body)).await;
    }
}

#[tokio::test]
async fn devices_and_the_critical_guard() {
    let (app, _dir) = app();
    home(&app).await;
    let devices = ok(&app, Method::GET, "/api/devices", None).await;
    assert_eq!(devices.as_array().unwrap().len(), 4);

    ok(&app, Method::POST, "/api/devices/fridge/actions/switch_on", None).await;
    let (status, v) = call(&app, Method::PUT, "/api/devices/fridge/critical", Some(json!({ "critical": true }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["generation"], 5);
    let (status, v) = call(&app, Method::POST, "/api/devices/fridge/actions/switch_off", None).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(v["error"]["code"], "denied");
    assert_eq!(v["error"]["reason"], "critical_device_denied");
    assert_eq!(v["generation"], 5);
    let denials = ok(&app, Method::GET, "/api/traces?categories=denial", None).await;
    assert_eq!(denials["entries"][0]["subject"], "fridge");
    let devices = ok(&app, Method::GET, "/api/devices", None).await;
    let fridge = devices.as_array().unwrap().iter().find(|d| d["descriptor"]["id"] == "fridge").unwrap();
    assert_eq!(fridge["state"]["on"], true);

    ok(&app, Method::POST, "/api/devices/tree-lamp/actions/set_color", Some(json!({ "args": ["red"] }))).await;
    let (status, v) = call(&app, Method::POST, "/api/devices/tree-lamp/actions/set_color", Some(json!({ "args": ["mauve"] }))).await;
    assert_eq!((status, v["error"]["reason"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("payload_violation")));
    ok(&app, Method::POST, "/api/devices/tree-plug/events/power_changed", Some(json!({ "payload": { "power": 40 } }))).await;
    ok(&app, Method::DELETE, "/api/devices/tree-lamp", None).await;
    let (status, v) = call(&app, Method::POST, "/api/devices/ghost/actions/switch_on", None).await;
    assert_eq!((status, v["error"]["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
    let (status, v) = call(&app, Method::POST, "/api/devices/tree-lamp/actions/blink", None).await;
    assert_eq!((status, v["error"]["reason"].as_str()), (StatusCode::CONFLICT, Some("missing_device")));
}

const XMAS: &str = "program XmasTree: switch off the tree-plug, blink the tree-lamp \
    each time the clock strikes 18:00 do switch on the tree-plug, blink the tree-lamp \
    each time the clock strikes 23:00 do switch off the tree-plug";

#[tokio::test]
async fn programs_lifecycle() {
    let (app, dir) = app();
    home(&app).await;
    let saved = ok(&app, Method::POST, "/api/programs", Some(json!({ "source": XMAS }))).await;
    assert_eq!(saved["changed"], true);
    let file = dir.path().join("programs/XmasTree.json");
    let bytes = std::fs::read(&file).unwrap();
    let (_, again) = call(&app, Method::POST, "/api/programs", Some(json!({ "source": XMAS }))).await;
    assert_eq!(again["ok"]["changed"], false);
    assert_eq!(again["generation"], 4);
    assert_eq!(std::fs::read(&file).unwrap(), bytes);

    let listed = ok(&app, Method::GET, "/api/programs", None).await;
    assert_eq!(listed[0]["status"], "stopped");
    let snap = ok(&app, Method::POST, "/api/programs/XmasTree/start", None).await;
    assert_eq!(snap["status"], "running");
    assert_eq!(snap["statement_counters"], json!({ "imperative[0]": 1, "imperative[1]": 1, "rule[0].body[0]": 0, "rule[0].body[1]": 0, "rule[1].body[0]": 0 }));
    assert_eq!(snap["rule_counters"], json!([0, 0]));
    assert_eq!(snap["waiting"], json!([0, 1]));

    let (status, v) = call(&app, Method::POST, "/api/programs/XmasTree/start", None).await;
    assert_eq!((status, v["error"]["reason"].as_str()), (StatusCode::CONFLICT, Some("already_running")));
    let (status, _) = call(&app, Method::DELETE, "/api/programs/XmasTree", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let draft = ok(&app, Method::GET, "/api/programs/XmasTree/draft", None).await;
    assert!(draft["text"].as_str().unwrap().starts_with("program XmasTree:"));
    assert_eq!(draft["complete"], true);
    ok(&app, Method::POST, "/api/programs/XmasTree/stop", None).await;
    let snap = ok(&app, Method::GET, "/api/programs/XmasTree", None).await;
    assert_eq!(snap["status"], "stopped");
    ok(&app, Method::DELETE, "/api/programs/XmasTree", None).await;
    assert!(!file.exists());
    let (status, _) = call(&app, Method::GET, "/api/programs/XmasTree", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, v) = call(&app, Method::POST, "/api/programs", Some(json!({ "source": "program Broken: blink" }))).await;
    assert_eq!((status, v["error"]["reason"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("syntax")));
}

#[tokio::test]
async fn editor_passthrough() {
    let (app, _dir) = app();
    home(&app).await;
    let first = ok(&app, Method::POST, "/api/editor/completion", Some(json!({}))).await;
    let option = first["options"][0].clone();
    assert_eq!(option["text"], "program");
    let body = json!({ "point": first["point"], "option": option });
    let step = ok(&app, Method::POST, "/api/editor/apply", Some(body)).await;
    let names = ok(&app, Method::POST, "/api/editor/completion", Some(json!({ "draft": step["draft"], "point": step["point"] }))).await;
    let name = names["options"][0].clone();
    assert_eq!(name["choice"]["choice"], "entry");
    let body = json!({ "draft": step["draft"], "point": step["point"], "option": name, "text": "Evening" });
    let step = ok(&app, Method::POST, "/api/editor/apply", Some(body)).await;
    assert_eq!(step["text"], "program Evening:");
    let body = json!({ "draft": step["draft"], "point": { "path": [0], "slot": 1 } });
    let step = ok(&app, Method::POST, "/api/editor/delete", Some(body)).await;
    assert_eq!(step["text"], "program");

    // an option from before a device departure is stale
    ok(&app, Method::DELETE, "/api/devices/clock", None).await;
    let body = json!({ "draft": step["draft"], "point": step["point"], "option": name, "text": "Evening" });
    let (status, v) = call(&app, Method::POST, "/api/editor/apply", Some(body)).await;
    assert_eq!((status, v["error"]["code"].as_str()), (StatusCode::PRECONDITION_FAILED, Some("stale")));
    assert_eq!(v["generation"], 5);
}

#[tokio::test]
async fn timeline_graph_clock_and_scenarios() {
    let (app, _dir) = app();
    home(&app).await;
    ok(&app, Method::POST, "/api/programs", Some(json!({ "source": XMAS }))).await;
    let other = "program Night: each time the clock strikes 22:00 do switch off the tree-plug";
    ok(&app, Method::POST, "/api/programs", Some(json!({ "source": other }))).await;
    ok(&app, Method::POST, "/api/programs/XmasTree/start", None).await;

    let graph = ok(&app, Method::GET, "/api/depgraph?annotated=true", None).await;
    assert_eq!(graph["graph"]["conflicts"][0]["device"], "tree-plug");
    assert_eq!(graph["graph"]["conflicts"][0]["state"], "latent");
    let (status, dot) = raw(&app, Method::GET, "/api/depgraph?annotated=true&format=dot", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(dot.starts_with("digraph"));

    let advanced = ok(&app, Method::POST, "/api/clock/advance", Some(json!({ "to": 86_400_000 }))).await;
    assert!(advanced["steps"].as_u64().unwrap() >= 2);
    let snap = ok(&app, Method::GET, "/api/programs/XmasTree", None).await;
    assert_eq!(snap["rule_counters"], json!([1, 1]));
    let (status, v) = call(&app, Method::POST, "/api/clock/advance", Some(json!({ "to": 5 }))).await;
    assert_eq!((status, v["error"]["reason"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("time_reversal")));

    let page = ok(&app, Method::GET, "/api/traces?subject=tree-plug&limit=2", None).await;
    assert_eq!(page["entries"].as_array().unwrap().len(), 2);
    let cursor = page["next_cursor"].as_str().unwrap().to_string();
    let next = ok(&app, Method::GET, &format!("/api/traces?subject=tree-plug&cursor={cursor}"), None).await;
    assert!(next["entries"][0]["seq"].as_u64() > page["entries"][1]["seq"].as_u64());
    let (status, lines) = raw(&app, Method::GET, "/api/traces?format=jsonl", None).await;
    assert_eq!(status, StatusCode::OK);
    let entries: Vec<TraceEntry> = lines.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(entries.windows(2).all(|w| w[0].seq + 1 == w[1].seq));
    let policy = json!({ "policy": { "suppress": ["device-event", "state-change"], "bucket_ms": 3_600_000 } });
    let redacted = ok(&app, Method::POST, "/api/traces/redacted", Some(policy)).await;
    for e in redacted["entries"].as_array().unwrap() {
        assert_ne!(e["category"], "device-event");
        assert_eq!(e["at"].as_u64().unwrap() % 3_600_000, 0);
    }
    let (status, v) = call(&app, Method::GET, "/api/traces?categories=gossip", None).await;
    assert_eq!((status, v["error"]["reason"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_query")));
    assert_eq!(v["generation"], 4);

    let text = "{\"at\": 0, \"step\": \"marker\", \"label\": \"begin\"}\n{\"at\": 60000, \"step\": \"emit_event\", \"source\": \"tree-plug\", \"event\": \"power_changed\", \"payload\": {\"power\": 7}}\n";
    let loaded = ok(&app, Method::POST, "/api/scenario", Some(json!({ "name": "s", "text": text }))).await;
    assert_eq!(loaded["steps"], 2);
    let stepped = ok(&app, Method::POST, "/api/scenario/step", None).await;
    assert_eq!(stepped["due"], 86_400_000);
    ok(&app, Method::POST, "/api/scenario/play-to", Some(json!({ "at": 86_460_000 }))).await;
    let status = ok(&app, Method::GET, "/api/status", None).await;
    assert_eq!(status["now"], 86_460_000);

    ok(&app, Method::PUT, "/api/clock/mode", Some(json!({ "mode": "realtime" }))).await;
    ok(&app, Method::PUT, "/api/clock/factor", Some(json!({ "factor": 120 }))).await;
    ok(&app, Method::POST, "/api/clock/pause", None).await;
    let status = ok(&app, Method::GET, "/api/status", None).await;
    assert_eq!(status["clock"], json!({ "mode": "accelerated", "factor": 120 }));
    assert_eq!(status["paused"], true);
    ok(&app, Method::POST, "/api/clock/resume", None).await;
    let bad = ok(&app, Method::POST, "/api/commands", Some(json!({ "verb": "status" }))).await;
    assert_eq!(bad["paused"], false);
}

#[tokio::test]
async fn malformed_bodies_use_the_envelope() {
    let (app, _dir) = app();
    let req = Request::post("/api/programs").header(header::CONTENT_TYPE, "application/json").body(Body::from("{not json")).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    assert_eq!(res.status(), StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_slice(&res.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(v["error"]["code"], "validation");
    assert_eq!(v["generation"], 0);
    let (status, v) = call(&app, Method::POST, "/api/commands", Some(json!({ "verb": "fly" }))).await;
    assert_eq!((status, v["error"]["reason"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("bad_body")));
}

#[tokio::test]
async fn concurrent_starts_are_totally_ordered() {
    let (app, _dir) = app();
    home(&app).await;
    ok(&app, Method::POST, "/api/programs", Some(json!({ "source": XMAS }))).await;
    let a = tokio::spawn({
        let app = app.clone();
        async move { call(&app, Method::POST, "/api/programs/XmasTree/start", None).await.0 }
    });
    let b = tokio::spawn({
        let app = app.clone();
        async move { call(&app, Method::POST, "/api/programs/XmasTree/start", None).await.0 }
    });
    let mut got = [a.await.unwrap(), b.await.unwrap()];
    got.sort();
    assert_eq!(got, [StatusCode::OK, StatusCode::CONFLICT]);
    let starts = ok(&app, Method::GET, "/api/traces?categories=program-lifecycle", None).await;
    let n = starts["entries"].as_array().unwrap().iter().filter(|e| e["details"]["reason"] == "start").count();
    assert_eq!(n, 1);
}

/// Reads SSE events (name, data) until `done` holds or the stream stalls.
async fn read_events(body: &mut Body, mut done: impl FnMut(&[(String, Value)]) -> bool) -> Vec<(String, Value)> {
    let mut out = Vec::new();
    let mut buf = String::new();
    while !done(&out) {
        let frame = match tokio::time::timeout(Duration::from_secs(5), body.frame()).await {
            Ok(Some(Ok(f))) => f,
            _ => break,
        };
        let Ok(data) = frame.into_data() else { continue };
        buf.push_str(std::str::from_utf8(&data).unwrap());
        while let Some(end) = buf.find("\n\n") {
            let block: String = buf.drain(..end + 2).collect();
            let mut name = String::new();
            let mut payload = String::new();
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("event:") {
                    name = v.trim().to_string();
                } else if let Some(v) = line.strip_prefix("data:") {
                    payload.push_str(v.trim_start());
                }
            }
            if !name.is_empty() {
                out.push((name, serde_json::from_str(&payload).unwrap()));
            }
        }
    }
    out
}

fn traced(events: &[(String, Value)]) -> Vec<TraceEntry> {
    events.iter().filter(|(n, _)| n == "trace").map(|(_, v)| serde_json::from_value(v["entry"].clone()).unwrap()).collect()
}

#[tokio::test]
async fn event_stream_mirrors_the_log() {
    let (app, _dir) = app();
    let res = app.clone().oneshot(Request::get("/api/events").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(res.headers()[header::CONTENT_TYPE], "text/event-stream");
    let mut body = res.into_body();

    home(&app).await;
    ok(&app, Method::POST, "/api/programs", Some(json!({ "source": XMAS }))).await;
    ok(&app, Method::POST, "/api/programs/XmasTree/start", None).await;
    ok(&app, Method::PUT, "/api/devices/fridge/critical", Some(json!({ "critical": true }))).await;
    let (status, _) = call(&app, Method::POST, "/api/devices/fridge/actions/switch_off", None).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    ok(&app, Method::POST, "/api/clock/advance", Some(json!({ "by": 86_400_000 }))).await;

    let log: Vec<TraceEntry> = serde_json::from_value(ok(&app, Method::GET, "/api/traces", None).await["entries"].clone()).unwrap();
    let events = read_events(&mut body, |e| traced(e).len() >= log.len() && e.iter().any(|(n, v)| n == "clock" && v["now"] == 86_400_000)).await;
    assert_eq!(traced(&events), log);
    assert!(traced(&events).iter().any(|e| e.category == domus_core::trace::TraceCategory::Denial));
    let generations: Vec<u64> = events.iter().filter(|(n, _)| n == "generation").map(|(_, v)| v["generation"].as_u64().unwrap()).collect();
    assert_eq!(generations, [1, 2, 3, 4, 5]);

    // a reconnecting client resumes after the last id it saw
    let req = Request::get("/api/events").header("last-event-id", "3").body(Body::empty()).unwrap();
    let mut body = app.clone().oneshot(req).await.unwrap().into_body();
    let replay = read_events(&mut body, |e| traced(e).len() >= log.len() - 3).await;
    assert_eq!(traced(&replay), log[3..]);
}
