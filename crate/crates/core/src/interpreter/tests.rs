use std::sync::Arc;

use super::clock::{DAY_MS, MINUTE_MS};
use super::*;
use crate::home::{Catalog, DeviceState};
use crate::language::{parse, Grammar};
use crate::trace::TimelineQuery;

const XMAS: &str = "program XmasTree: switch off the tree-plug, blink the tree-lamp \
    each time the clock strikes 18:00 do switch on the tree-plug, blink the tree-lamp \
    each time the clock strikes 23:00 do blink the tree-lamp, switch off the tree-plug";

fn engine() -> Engine {
    let mut e = Engine::new(Registry::new(Arc::new(Catalog::builtin())), TraceLog::in_memory());
    for (id, kind, name, loc) in [
        ("tree-plug", "plug", "Tree plug", "living"),
        ("tree-lamp", "lamp", "Tree lamp", "living"),
        ("clock", "clock", "Clock", "hall"),
        ("bed1", "lamp", "Bedside left", "bedroom"),
        ("bed2", "lamp", "Bedside right", "bedroom"),
        ("door", "contact", "Front door", "hall"),
    ] {
        e.register_device(DeviceDescriptor::new(id, kind, name, loc), DeviceState::new(), Cause::Scenario).unwrap();
    }
    e
}

fn store(e: &mut Engine, texts: &[&str]) {
    let names: Vec<ProgramId> = texts
        .iter()
        .map(|t| ProgramId::new(t.strip_prefix("program ").unwrap().split(':').next().unwrap()))
        .collect();
    let g = Grammar::derive(e.registry()).with_programs(names);
    for t in texts {
        e.store_program(parse(t, &g).unwrap_or_else(|err| panic!("{t}: {err}"))).unwrap();
    }
}

fn count(e: &Engine, category: TraceCategory, subject: Option<&str>) -> usize {
    let q = TimelineQuery { categories: [category].into(), subject: subject.map(String::from), ..Default::default() };
    e.trace().query(&q).unwrap().entries.len()
}

fn path(s: &str) -> StmtPath {
    StmtPath::parse(s).unwrap()
}

#[test]
fn xmas_tree_indicators_after_start() {
    let mut e = engine();
    store(&mut e, &[XMAS]);
    let s = e.start(&"XmasTree".into(), Cause::Dashboard).unwrap();
    assert_eq!(s.status, Status::Running);
    assert_eq!(s.statement_counters[&path("imperative[0]")], 1);
    assert_eq!(s.statement_counters[&path("imperative[1]")], 1);
    assert_eq!(s.rule_counters, [0, 0]);
    assert_eq!(s.waiting, [0, 1].into());
    assert!(s.unknown_refs.is_empty());
}

#[test]
fn start_while_lamp_missing_is_degraded_and_skips() {
    let mut e = engine();
    store(&mut e, &[XMAS]);
    e.unregister_device(&"tree-lamp".into(), Cause::Scenario).unwrap();
    let s = e.start(&"XmasTree".into(), Cause::Dashboard).unwrap();
    assert_eq!(s.status, Status::Degraded);
    assert!(s.unknown_refs.contains("imperative[1]"));
    assert_eq!(count(&e, TraceCategory::DegradedSkip, None), 1);
    e.advance(DAY_MS).unwrap();
    let s = e.snapshot(&"XmasTree".into()).unwrap();
    assert_eq!(s.rule_counters, [1, 1]);
    assert_eq!(s.statement_counters[&path("rule[0].body[0]")], 1);
    assert_eq!(s.statement_counters[&path("rule[1].body[1]")], 1);
    assert_eq!(count(&e, TraceCategory::DegradedSkip, None), 3);
    assert_eq!(count(&e, TraceCategory::Action, Some("tree-plug")), 3);
}

#[test]
fn lamp_reappearing_clears_degraded() {
    let mut e = engine();
    store(&mut e, &[XMAS]);
    e.start(&"XmasTree".into(), Cause::Dashboard).unwrap();
    e.unregister_device(&"tree-lamp".into(), Cause::Scenario).unwrap();
    assert_eq!(e.snapshot(&"XmasTree".into()).unwrap().status, Status::Degraded);
    let d = e.registry().descriptor(&"tree-lamp".into()).unwrap().clone();
    e.register_device(d, DeviceState::new(), Cause::Scenario).unwrap();
    let s = e.snapshot(&"XmasTree".into()).unwrap();
    assert_eq!(s.status, Status::Running);
    assert!(s.unknown_refs.is_empty());
}

#[test]
fn rules_only_program_waits_and_stop_clears_waiting() {
    let mut e = engine();
    store(&mut e, &["program Door: each time the door opens do switch on all lamp located in bedroom"]);
    let s = e.start(&"Door".into(), Cause::Dashboard).unwrap();
    assert_eq!(s.waiting, [0].into());
    assert_eq!(count(&e, TraceCategory::Statement, None), 0);
    assert!(matches!(e.start(&"Door".into(), Cause::Dashboard), Err(EngineError::AlreadyRunning(_))));
    let s = e.stop(&"Door".into(), Cause::Dashboard).unwrap();
    assert_eq!(s.status, Status::Stopped);
    assert!(s.waiting.is_empty());
    assert!(matches!(e.stop(&"Door".into(), Cause::Dashboard), Err(EngineError::NotRunning(_))));
}

#[test]
fn plural_selector_applies_to_each_device() {
    let mut e = engine();
    store(&mut e, &["program Door: each time the door opens do switch on all lamp located in bedroom"]);
    e.start(&"Door".into(), Cause::Dashboard).unwrap();
    e.emit_event(HomeEvent::new("door", "opened", 0), Cause::Scenario).unwrap();
    let s = e.snapshot(&"Door".into()).unwrap();
    assert_eq!(s.rule_counters, [1]);
    assert_eq!(s.statement_counters[&path("rule[0].body[0]")], 1);
    let q = TimelineQuery { categories: [TraceCategory::Action].into(), ..Default::default() };
    let subjects: Vec<_> = e.trace().query(&q).unwrap().entries.into_iter().map(|t| t.subject).collect();
    assert_eq!(subjects, ["bed1", "bed2"]);
    assert!(e.registry().read_state(&"bed2".into(), "on").unwrap().value == Value::Bool(true));
}

#[test]
fn simultaneous_firings_follow_start_order() {
    let mut e = engine();
    store(
        &mut e,
        &[
            "program B: each time the door opens do blink the bed1",
            "program A: each time the door opens do blink the bed2 each time all contact opens do blink the bed1",
        ],
    );
    e.start(&"B".into(), Cause::Dashboard).unwrap();
    e.start(&"A".into(), Cause::Dashboard).unwrap();
    e.emit_event(HomeEvent::new("door", "opened", 0), Cause::Scenario).unwrap();
    let q = TimelineQuery { categories: [TraceCategory::RuleFired].into(), ..Default::default() };
    let fired: Vec<_> = e.trace().query(&q).unwrap().entries.into_iter().map(|t| (t.subject, t.details["rule"].clone())).collect();
    assert_eq!(fired, [("B".into(), json!(0)), ("A".into(), json!(0)), ("A".into(), json!(1))]);
}

#[test]
fn state_rules_fire_on_rising_edges_only() {
    let mut e = engine();
    store(&mut e, &["program Watch: if the door open is true do blink the bed1"]);
    e.emit_event(HomeEvent::new("door", "opened", 0), Cause::Scenario).unwrap();
    e.start(&"Watch".into(), Cause::Dashboard).unwrap();
    assert!(e.snapshot(&"Watch".into()).unwrap().waiting.is_empty());
    e.emit_event(HomeEvent::new("door", "opened", 0), Cause::Scenario).unwrap();
    assert_eq!(e.snapshot(&"Watch".into()).unwrap().rule_counters, [0]);
    e.emit_event(HomeEvent::new("door", "closed", 0), Cause::Scenario).unwrap();
    assert_eq!(e.snapshot(&"Watch".into()).unwrap().waiting, [0].into());
    e.emit_event(HomeEvent::new("door", "opened", 0), Cause::Scenario).unwrap();
    assert_eq!(e.snapshot(&"Watch".into()).unwrap().rule_counters, [1]);
}

#[test]
fn stop_of_another_program_is_synchronous() {
    let mut e = engine();
    store(
        &mut e,
        &[
            "program Killer: each time the door opens do stop Victim, blink the bed1",
            "program Victim: each time the door opens do blink the bed2",
        ],
    );
    e.start(&"Victim".into(), Cause::Dashboard).unwrap();
    e.start(&"Killer".into(), Cause::Dashboard).unwrap();
    e.emit_event(HomeEvent::new("door", "opened", 0), Cause::Scenario).unwrap();
    // Victim started first so it fires first; Killer then stops it
    let cats: Vec<_> = e.trace().since(0).iter().rev().take(4).map(|t| (t.category, t.subject.clone())).collect();
    assert_eq!(
        cats,
        [
            (TraceCategory::DeviceEvent, "bed1".to_string()),
            (TraceCategory::Action, "bed1".into()),
            (TraceCategory::Statement, "Killer".into()),
            (TraceCategory::ProgramLifecycle, "Victim".into()),
        ]
    );
    assert_eq!(e.snapshot(&"Victim".into()).unwrap().status, Status::Stopped);
}

#[test]
fn stopping_itself_skips_the_rest_of_the_body() {
    let mut e = engine();
    store(&mut e, &["program Once: each time the door opens do blink the bed1, stop Once, blink the bed2"]);
    e.start(&"Once".into(), Cause::Dashboard).unwrap();
    e.emit_event(HomeEvent::new("door", "opened", 0), Cause::Scenario).unwrap();
    let s = e.snapshot(&"Once".into()).unwrap();
    assert_eq!(s.status, Status::Stopped);
    assert_eq!(s.statement_counters[&path("rule[0].body[2]")], 0);
    assert_eq!(count(&e, TraceCategory::Action, Some("bed2")), 0);
}

#[test]
fn start_inside_a_body_runs_the_imperative_block_in_the_same_step() {
    let mut e = engine();
    store(
        &mut e,
        &[
            "program Boss: each time the door opens do start Worker",
            "program Worker: blink the bed1 each time the door closes do blink the bed2",
        ],
    );
    e.start(&"Boss".into(), Cause::Dashboard).unwrap();
    let before = e.now();
    e.emit_event(HomeEvent::new("door", "opened", 0), Cause::Scenario).unwrap();
    let s = e.snapshot(&"Worker".into()).unwrap();
    assert_eq!(s.status, Status::Running);
    assert_eq!(s.statement_counters[&path("imperative[0]")], 1);
    assert_eq!(e.now(), before);
}

#[test]
fn programs_without_rules_stop_when_done() {
    let mut e = engine();
    store(&mut e, &["program Flash: switch on the bed1, wait 5000, switch off the bed1"]);
    let s = e.start(&"Flash".into(), Cause::Dashboard).unwrap();
    assert_eq!(s.status, Status::Running);
    assert_eq!(s.suspended, [path("imperative[1]")]);
    e.advance(4999).unwrap();
    assert_eq!(count(&e, TraceCategory::Action, Some("bed1")), 1);
    e.advance(5000).unwrap();
    let resumed = e.trace().query(&TimelineQuery { subject: Some("bed1".into()), ..Default::default() }).unwrap();
    assert_eq!(resumed.entries.last().unwrap().at, 5000);
    let s = e.snapshot(&"Flash".into()).unwrap();
    assert_eq!(s.status, Status::Stopped);
    assert_eq!(s.statement_counters[&path("imperative[2]")], 1);
}

#[test]
fn clock_rules_fire_once_per_strike() {
    let mut e = engine();
    store(&mut e, &[XMAS]);
    e.start(&"XmasTree".into(), Cause::Dashboard).unwrap();
    e.advance(23 * 60 * MINUTE_MS - 1).unwrap();
    assert_eq!(e.snapshot(&"XmasTree".into()).unwrap().rule_counters, [1, 0]);
    e.advance(23 * 60 * MINUTE_MS).unwrap();
    assert_eq!(e.snapshot(&"XmasTree".into()).unwrap().rule_counters, [1, 1]);
    e.advance(2 * DAY_MS).unwrap();
    assert_eq!(e.snapshot(&"XmasTree".into()).unwrap().rule_counters, [2, 2]);
}

#[test]
fn advancing_an_idle_home_changes_only_the_clock() {
    let mut e = engine();
    let before = e.state_digest();
    let entries = e.trace().len();
    e.advance(DAY_MS).unwrap();
    assert_eq!(e.state_digest(), before);
    assert_eq!(e.trace().len(), entries);
    assert!(matches!(e.advance(5), Err(EngineError::TimeReversal { .. })));
}

#[test]
fn critical_plug_denies_power_removal() {
    let mut e = engine();
    e.device_action(&"tree-plug".into(), "switch_on", &[], Cause::Dashboard).unwrap();
    e.set_critical(&"tree-plug".into(), true, Cause::Dashboard).unwrap();
    let before = e.registry().get(&"tree-plug".into()).unwrap().clone();
    let err = e.device_action(&"tree-plug".into(), "switch_off", &[], Cause::Dashboard).unwrap_err();
    assert!(matches!(err, EngineError::Home(HomeError::CriticalDeviceDenied { .. })));
    assert_eq!(*e.registry().get(&"tree-plug".into()).unwrap(), before);
    assert_eq!(count(&e, TraceCategory::Denial, Some("tree-plug")), 1);
    assert!(matches!(
        e.device_action(&"tree-plug".into(), "fly", &[], Cause::Dashboard),
        Err(EngineError::Home(HomeError::UnsupportedAction { .. }))
    ));
    assert_eq!(count(&e, TraceCategory::Denial, None), 1);
}

#[test]
fn self_triggering_rules_hit_the_cascade_limit() {
    let mut e = engine();
    store(&mut e, &["program Loop: each time the bed1 blinks do blink the bed1"]);
    e.start(&"Loop".into(), Cause::Dashboard).unwrap();
    e.device_action(&"bed1".into(), "blink", &[], Cause::Dashboard).unwrap();
    assert_eq!(count(&e, TraceCategory::CascadeLimit, None), 1);
    assert_eq!(e.snapshot(&"Loop".into()).unwrap().rule_counters, [MAX_FIRINGS_PER_STEP as u64]);
}

#[test]
fn mutual_starts_are_bounded() {
    let mut e = engine();
    store(&mut e, &["program Ping: stop Pong, start Pong", "program Pong: stop Ping, start Ping"]);
    e.start(&"Ping".into(), Cause::Dashboard).unwrap();
    assert_eq!(count(&e, TraceCategory::CascadeLimit, None), 1);
}

#[test]
fn storing_identical_programs_is_a_no_op() {
    let mut e = engine();
    let g = Grammar::derive(e.registry());
    let p = parse("program P: blink the bed1", &g).unwrap();
    assert!(e.store_program(p.clone()).unwrap());
    assert!(!e.store_program(p).unwrap());
}
