//! Generators shared by the integration and acceptance tests.
//!
//! Programs are decoded from a tape of random numbers against a grammar, so
//! every generated program only names terminals the grammar offers.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use domus_core::home::{Catalog, DeviceDescriptor, DeviceState, Domain, Registry, TimeOfDay, Value};
use domus_core::keyboard::Draft;
use domus_core::language::to_text;
use domus_core::scenario::{Scenario, Step};
use domus_core::service::Command;
use domus_core::language::grammar::KEYWORDS;
use domus_core::language::{
    is_unit_prefix, join, Atom, Comparator, Grammar, Program, ProgramId, Quantifier, Rule, Selector, StateExpr, Statement,
    Trigger,
};
use proptest::prelude::*;

pub const LOCATIONS: [&str; 4] = ["bedroom", "kitchen", "living", "garden"];
pub const FLOORS: [&str; 2] = ["upper", "lower"];
pub const PROGRAMS: [&str; 3] = ["Alpha", "Beta", "Gamma"];
/// Names of the programs in a generated fleet.
pub const FLEET: [&str; 5] = ["Alpha", "Beta", "Gamma", "Delta", "Epsilon"];

/// One device to register: kind index, location index, optional floor, critical.
pub type DeviceSpec = (usize, usize, Option<usize>, bool);

pub fn arb_devices(max: usize) -> impl Strategy<Value = Vec<DeviceSpec>> {
    prop::collection::vec((0..8usize, 0..LOCATIONS.len(), prop::option::of(0..FLOORS.len()), any::<bool>()), 0..=max)
}

/// Index of a catalog kind as used in [`DeviceSpec`].
pub fn kind_index(name: &str) -> usize {
    Catalog::builtin().kinds().position(|k| k.name == name).expect("builtin kind")
}

/// Descriptor of the `i`th device of a home.
pub fn descriptor(i: usize, spec: &DeviceSpec) -> DeviceDescriptor {
    let (k, loc, floor, critical) = *spec;
    let kinds: Vec<String> = Catalog::builtin().kinds().map(|k| k.name.clone()).collect();
    let kind = &kinds[k % kinds.len()];
    let id = format!("{}{i}", kind.replace('_', "-"));
    let name = format!("{} {kind} {i}", LOCATIONS[loc]);
    let mut d = DeviceDescriptor::new(&id, kind, &name, LOCATIONS[loc]).critical(critical);
    if let Some(f) = floor {
        d = d.with_property("floor", FLOORS[f]);
    }
    d
}

pub fn build_home(specs: &[DeviceSpec]) -> Registry {
    let mut r = Registry::new(Arc::new(Catalog::builtin()));
    for (i, spec) in specs.iter().enumerate() {
        r.register_device(descriptor(i, spec), DeviceState::new(), 0).unwrap();
    }
    r
}

/// Deterministic choices read from a random tape; reads past the end give 0.
pub struct Tape<'a> {
    vals: &'a [u32],
    at: usize,
}

impl<'a> Tape<'a> {
    pub fn new(vals: &'a [u32]) -> Self {
        Self { vals, at: 0 }
    }

    pub fn pick(&mut self, n: usize) -> usize {
        let v = self.vals.get(self.at).copied().unwrap_or(0) as usize;
        self.at += 1;
        if n == 0 { 0 } else { v % n }
    }

    fn one<'b, T>(&mut self, items: &'b [T]) -> &'b T {
        &items[self.pick(items.len())]
    }
}

pub fn arb_tape() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(any::<u32>(), 64..256)
}

pub fn grammar_for(r: &Registry) -> Grammar {
    Grammar::derive(r).with_programs(PROGRAMS.iter().map(|p| ProgramId::new(*p)))
}

pub fn literal(t: &mut Tape, d: &Domain) -> Value {
    match d {
        Domain::Bool => Value::Bool(t.pick(2) == 1),
        Domain::Int { min, max } => Value::Int(min + t.pick((max - min + 1) as usize) as i64),
        Domain::Percent => Value::Int(t.pick(101) as i64),
        Domain::Enum { values } => Value::Sym(t.one(values).clone()),
        Domain::Time => Value::Time(TimeOfDay::from_minutes(t.pick(1440) as u16).unwrap()),
    }
}

/// A selector over devices of `kind`, picking the device form only when such
/// a device exists.
fn selector(t: &mut Tape, g: &Grammar, kind: &str) -> Selector {
    let ids: Vec<_> = g.devices.iter().filter(|(_, d)| d.kind == kind).map(|(id, _)| id.clone()).collect();
    match t.pick(4) {
        0 | 1 if !ids.is_empty() => Selector::ById(t.one(&ids).clone()),
        2 if !g.locations.is_empty() => {
            let locs: Vec<_> = g.locations.iter().cloned().collect();
            Selector::Filtered { kind: kind.into(), property: "location".into(), value: t.one(&locs).clone() }
        }
        3 if !g.properties.is_empty() => {
            let props: Vec<_> = g.properties.iter().collect();
            let (p, values) = *t.one(&props);
            let values: Vec<_> = values.iter().cloned().collect();
            Selector::Filtered { kind: kind.into(), property: p.clone(), value: t.one(&values).clone() }
        }
        _ => Selector::AllOfKind(kind.into()),
    }
}

fn statement(t: &mut Tape, g: &Grammar) -> Statement {
    let acting: Vec<_> = g.kinds.values().filter(|k| !k.actions.is_empty()).collect();
    match t.pick(6) {
        0 => Statement::Wait(t.pick(100_000) as u64),
        1 if !g.programs.is_empty() => Statement::Start(t.one(&g.programs.iter().cloned().collect::<Vec<_>>()).clone()),
        2 if !g.programs.is_empty() => Statement::Stop(t.one(&g.programs.iter().cloned().collect::<Vec<_>>()).clone()),
        _ if !acting.is_empty() => {
            let kind = *t.one(&acting);
            let actions: Vec<_> = kind.actions.values().collect();
            let action = *t.one(&actions);
            let target = selector(t, g, &kind.name);
            let args = action.params.iter().map(|p| literal(t, &p.domain)).collect();
            Statement::Action { target, action: action.name.clone(), args }
        }
        _ => Statement::Wait(t.pick(1000) as u64),
    }
}

fn atom(t: &mut Tape, g: &Grammar) -> Option<Atom> {
    let kinds: Vec<_> = g.kinds.values().filter(|k| !k.variables.is_empty()).collect();
    if kinds.is_empty() {
        return None;
    }
    let kind = *t.one(&kinds);
    let selector = selector(t, g, &kind.name);
    let quantifier = if selector.is_plural() && t.pick(2) == 1 { Quantifier::Any } else { Quantifier::All };
    let vars: Vec<_> = kind.variables.iter().collect();
    let (variable, domain) = *t.one(&vars);
    let comparators: Vec<_> = Comparator::ALL.into_iter().filter(|c| domain.is_ordered() || !c.is_ordering()).collect();
    let comparator = *t.one(&comparators);
    Some(Atom { selector, quantifier, variable: variable.clone(), comparator, literal: literal(t, domain) })
}

fn expr(t: &mut Tape, g: &Grammar, depth: usize) -> Option<StateExpr> {
    if depth <= 1 {
        return atom(t, g).map(StateExpr::Atom);
    }
    Some(match t.pick(4) {
        0 => StateExpr::Atom(atom(t, g)?),
        1 => StateExpr::Not(Box::new(expr(t, g, depth - 1)?)),
        2 => StateExpr::And(Box::new(expr(t, g, depth - 1)?), Box::new(expr(t, g, depth - 1)?)),
        _ => StateExpr::Or(Box::new(expr(t, g, depth - 1)?), Box::new(expr(t, g, depth - 1)?)),
    })
}

fn trigger(t: &mut Tape, g: &Grammar, depth: usize) -> Option<Trigger> {
    if t.pick(2) == 0 {
        if let Some(e) = expr(t, g, depth) {
            return Some(Trigger::State(e));
        }
    }
    let kinds: Vec<_> = g.kinds.values().filter(|k| !k.events.is_empty()).collect();
    if kinds.is_empty() {
        return None;
    }
    let kind = *t.one(&kinds);
    let selector = selector(t, g, &kind.name);
    let events: Vec<_> = kind.events.values().collect();
    let event = *t.one(&events);
    let filter = match (event.filter_domain(), &event.filter) {
        (Some(d), Some(f)) if f.required || t.pick(2) == 1 => Some(literal(t, d)),
        _ => None,
    };
    Some(Trigger::Event { selector, event: event.name.clone(), filter })
}

/// A program valid under `g`, with condition depth at most `depth`.
pub fn program(t: &mut Tape, g: &Grammar, depth: usize) -> Program {
    let id = ProgramId::new(format!("P{}", t.pick(1000)));
    let mut p = Program { id, imperative: Vec::new(), rules: Vec::new() };
    for _ in 0..t.pick(3) {
        p.imperative.push(statement(t, g));
    }
    for _ in 0..t.pick(3) {
        if let Some(trigger) = trigger(t, g, depth) {
            let body = (0..=t.pick(2)).map(|_| statement(t, g)).collect();
            p.rules.push(Rule { trigger, body });
        }
    }
    if p.imperative.is_empty() && p.rules.is_empty() {
        p.imperative.push(statement(t, g));
    }
    p
}

/// Texts of every terminal and keyword, plus samples for free entries
/// paired with the placeholder an editor shows for them.
pub fn candidates(g: &Grammar) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = KEYWORDS.iter().map(|k| (k.text().to_string(), k.text().to_string())).collect();
    out.extend(g.terminals().into_iter().map(|t| (t.clone(), t)));
    out.push(("Zed".into(), "<name>".into()));
    out.push(("12:00".into(), "<time>".into()));
    let mut numbers = BTreeSet::new();
    for k in g.catalog().kinds() {
        let domains = k
            .variables
            .values()
            .chain(k.actions.values().flat_map(|a| a.params.iter().map(|p| &p.domain)))
            .chain(k.events.values().filter_map(|e| e.filter_domain()));
        for d in domains {
            if matches!(d, Domain::Int { .. } | Domain::Percent) {
                numbers.insert(d.default_value().to_string());
            }
        }
    }
    numbers.insert("1000".into());
    out.extend(numbers.into_iter().map(|n| (n, "<number>".into())));
    out
}

/// Brute-force continuation set at the frontier of `draft`: every candidate
/// whose text, appended to the draft text, still ends on a unit boundary of
/// some program.
pub fn oracle(draft: &Draft, g: &Grammar) -> BTreeSet<String> {
    let text = draft.text(g);
    let after_wait = draft_last_is_wait(draft);
    let mut out = BTreeSet::new();
    for (cand, shown) in candidates(g) {
        if is_unit_prefix(&join([text.as_str(), cand.as_str()]), g) {
            let shown = if shown == "<number>" && after_wait { "<duration>".to_string() } else { shown };
            out.insert(shown);
        }
    }
    // a fresh name is the only thing accepted after `program`; every
    // identifier-like terminal passes there and stands for the same entry
    if out.contains("<name>") {
        return BTreeSet::from(["<name>".to_string()]);
    }
    out
}

fn draft_last_is_wait(d: &Draft) -> bool {
    let last = d
        .rules
        .last()
        .map(|r| r.body.last().unwrap_or(&r.trigger))
        .or(d.imperative.last())
        .and_then(|c| c.last());
    last.is_some_and(|u| u.text() == "wait")
}

/// Programs named after [`FLEET`] that may start and stop one another.
pub fn fleet(t: &mut Tape, r: &Registry, depth: usize) -> Vec<Program> {
    let g = Grammar::derive(r).with_programs(FLEET.iter().map(|p| ProgramId::new(*p)));
    FLEET
        .iter()
        .map(|name| {
            let mut p = program(t, &g, depth);
            p.id = ProgramId::new(*name);
            // a program may not start itself
            let me = Statement::Start(p.id.clone());
            let fix = |s: &mut Statement| {
                if *s == me {
                    *s = Statement::Wait(500);
                }
            };
            p.imperative.iter_mut().for_each(fix);
            p.rules.iter_mut().flat_map(|r| r.body.iter_mut()).for_each(fix);
            p
        })
        .collect()
}

/// A scenario that registers the home at time 0, then runs `steps` random
/// steps: device events with full payloads, departures and returns,
/// criticality flips and markers.
pub fn scenario(t: &mut Tape, specs: &[DeviceSpec], steps: usize) -> Scenario {
    let catalog = Catalog::builtin();
    let mut s = Scenario::new("generated");
    let devices: Vec<DeviceDescriptor> = specs.iter().enumerate().map(|(i, spec)| descriptor(i, spec)).collect();
    for d in &devices {
        s.push(0, Step::RegisterDevice { device: d.clone(), state: Default::default() });
    }
    let mut present = vec![true; devices.len()];
    let mut at = 0;
    for n in 0..steps {
        at += t.pick(30) as u64 * 60_000 + t.pick(1000) as u64;
        if devices.is_empty() {
            s.push(at, Step::Marker { label: format!("m{n}") });
            continue;
        }
        let i = t.pick(devices.len());
        let d = &devices[i];
        let step = match t.pick(10) {
            6 if present[i] => {
                present[i] = false;
                Step::UnregisterDevice { id: d.id.clone() }
            }
            6 | 7 if !present[i] => {
                present[i] = true;
                Step::RegisterDevice { device: d.clone(), state: Default::default() }
            }
            8 => Step::SetCritical { id: d.id.clone(), critical: t.pick(2) == 1 },
            9 => Step::Marker { label: format!("m{n}") },
            _ => {
                let kind = catalog.kind(&d.kind).expect("builtin kind");
                let events: Vec<_> = kind.events.values().filter(|e| !e.clock_tick).collect();
                if events.is_empty() {
                    Step::Marker { label: format!("m{n}") }
                } else {
                    let e = *t.one(&events);
                    let payload = e.payload.iter().map(|p| (p.name.clone(), literal(t, &p.domain).to_json())).collect();
                    Step::EmitEvent { source: d.id.clone(), event: e.name.clone(), payload }
                }
            }
        };
        s.push(at, step);
    }
    s
}

/// A dashboard session of `n` commands over the home of `specs`: device
/// registration first, then saves, starts, stops, actions, events, clock
/// advances, criticality flips, departures and deletions.
pub fn session(t: &mut Tape, specs: &[DeviceSpec], n: usize) -> Vec<Command> {
    let catalog = Catalog::builtin();
    let home = build_home(specs);
    let programs = fleet(t, &home, 3);
    let g = Grammar::permissive(Arc::new(catalog.clone()));
    let devices: Vec<DeviceDescriptor> = specs.iter().enumerate().map(|(i, spec)| descriptor(i, spec)).collect();
    let mut out: Vec<Command> =
        devices.iter().take(n).map(|d| Command::RegisterDevice { device: d.clone(), state: Default::default() }).collect();
    while out.len() < n {
        let p = &programs[t.pick(programs.len())];
        let c = match t.pick(12) {
            0 | 1 => Command::SaveProgram { source: to_text(p, &g) },
            2 | 3 => Command::StartProgram { id: p.id.clone() },
            4 => Command::StopProgram { id: p.id.clone() },
            5 => Command::Advance { to: None, by: Some(t.pick(90) as u64 * 60_000) },
            6 => Command::DeleteProgram { id: p.id.clone() },
            _ if devices.is_empty() => Command::Status,
            k => {
                let d = &devices[t.pick(devices.len())];
                let kind = catalog.kind(&d.kind).expect("builtin kind");
                match k {
                    7 | 8 if !kind.actions.is_empty() => {
                        let actions: Vec<_> = kind.actions.values().collect();
                        let a = *t.one(&actions);
                        let args = a.params.iter().map(|p| literal(t, &p.domain).to_json()).collect();
                        Command::DeviceAction { id: d.id.clone(), action: a.name.clone(), args }
                    }
                    9 => Command::SetCritical { id: d.id.clone(), critical: t.pick(2) == 1 },
                    10 if t.pick(2) == 0 => Command::UnregisterDevice { id: d.id.clone() },
                    10 => Command::RegisterDevice { device: d.clone(), state: Default::default() },
                    _ => {
                        let events: Vec<_> = kind.events.values().filter(|e| !e.clock_tick).collect();
                        if events.is_empty() {
                            Command::ListDevices
                        } else {
                            let e = *t.one(&events);
                            let payload = e.payload.iter().map(|p| (p.name.clone(), literal(t, &p.domain).to_json())).collect();
                            Command::EmitEvent { source: d.id.clone(), event: e.name.clone(), payload }
                        }
                    }
                }
            }
        };
        out.push(c);
    }
    out
}
