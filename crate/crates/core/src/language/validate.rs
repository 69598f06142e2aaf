//! Checks a program against the home: binds device references and reports
//! unknown references and type errors.
//!
//! Parsing against a derived grammar already rules out type errors; this is
//! for programs loaded through the permissive grammar and for programs that
//! outlived the devices they name.

use serde::Serialize;

use super::ast::{Atom, Program, Quantifier, Selector, Statement, Trigger};
use crate::home::{DeviceId, DeviceKind, Registry, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Binding {
    pub path: String,
    pub device: DeviceId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnknownRef {
    pub path: String,
    pub device: DeviceId,
    /// The device was registered once and is Missing now.
    pub missing: bool,
    /// Display name the device had, if it is known at all.
    pub last_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TypeError {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub bindings: Vec<Binding>,
    pub unknowns: Vec<UnknownRef>,
    pub type_errors: Vec<TypeError>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.unknowns.is_empty() && self.type_errors.is_empty()
    }

    /// Distinct unknown device ids.
    pub fn unknown_devices(&self) -> Vec<DeviceId> {
        let mut ids: Vec<DeviceId> = self.unknowns.iter().map(|u| u.device.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

struct Checker<'a> {
    registry: &'a Registry,
    report: ValidationReport,
}

pub fn validate(program: &Program, registry: &Registry) -> ValidationReport {
    let mut c = Checker { registry, report: ValidationReport::default() };
    if program.imperative.is_empty() && program.rules.is_empty() {
        c.error("program", "program has neither statements nor rules".into());
    }
    for (path, s) in program.statements() {
        if *s == Statement::Start(program.id.clone()) {
            c.error(&path.to_string(), format!("{} starts itself", program.id));
        }
    }
    for (i, s) in program.imperative.iter().enumerate() {
        c.statement(&format!("imperative[{i}]"), s);
    }
    for (r, rule) in program.rules.iter().enumerate() {
        match &rule.trigger {
            Trigger::Event { selector, event, filter } => {
                let path = format!("rule[{r}].trigger");
                if let Some(kind) = c.selector(&path, selector) {
                    c.event(&path, kind, event, filter.as_ref());
                }
            }
            Trigger::State(expr) => {
                for (a, atom) in expr.atoms().into_iter().enumerate() {
                    c.atom(&format!("rule[{r}].condition[{a}]"), atom);
                }
            }
        }
        for (i, s) in rule.body.iter().enumerate() {
            c.statement(&format!("rule[{r}].body[{i}]"), s);
        }
    }
    c.report
}

impl<'a> Checker<'a> {
    fn error(&mut self, path: &str, message: String) {
        self.report.type_errors.push(TypeError { path: path.to_string(), message });
    }

    /// Resolves a selector and returns its kind when that is known.
    fn selector(&mut self, path: &str, selector: &Selector) -> Option<&'a DeviceKind> {
        let registry = self.registry;
        match selector {
            Selector::ById(id) => {
                let descriptor = registry.descriptor(id);
                match descriptor {
                    Some(d) if d.is_available() => {
                        self.report.bindings.push(Binding { path: path.to_string(), device: id.clone() });
                    }
                    _ => self.report.unknowns.push(UnknownRef {
                        path: path.to_string(),
                        device: id.clone(),
                        missing: descriptor.is_some(),
                        last_name: descriptor.map(|d| d.display_name.clone()),
                    }),
                }
                registry.kind_of(id)
            }
            Selector::AllOfKind(kind) | Selector::Filtered { kind, .. } => {
                let found = registry.catalog().kind(kind);
                if found.is_none() {
                    self.error(path, format!("unknown device kind {kind}"));
                }
                found
            }
        }
    }

    fn statement(&mut self, path: &str, s: &Statement) {
        let Statement::Action { target, action, args } = s else {
            return;
        };
        let Some(kind) = self.selector(path, target) else {
            return;
        };
        let Some(def) = kind.action(action) else {
            self.error(path, format!("{} does not support action {action}", kind.name));
            return;
        };
        if def.params.len() != args.len() {
            self.error(path, format!("{action} expects {} argument(s), got {}", def.params.len(), args.len()));
            return;
        }
        for (p, a) in def.params.iter().zip(args) {
            if !p.domain.contains(a) {
                self.error(path, format!("{a} is outside the domain of {} ({})", p.name, p.domain));
            }
        }
    }

    fn event(&mut self, path: &str, kind: &DeviceKind, event: &str, filter: Option<&Value>) {
        let Some(def) = kind.event(event) else {
            self.error(path, format!("{} has no event {event}", kind.name));
            return;
        };
        match (def.filter_domain(), filter) {
            (None, Some(v)) => self.error(path, format!("{event} takes no filter, got {v}")),
            (Some(_), None) if def.filter.as_ref().is_some_and(|f| f.required) => {
                self.error(path, format!("{event} needs a filter value"));
            }
            (Some(d), Some(v)) if !d.contains(v) => self.error(path, format!("{v} is outside {d}")),
            _ => {}
        }
    }

    fn atom(&mut self, path: &str, atom: &Atom) {
        if atom.quantifier == Quantifier::Any && !atom.selector.is_plural() {
            self.error(path, "any needs a plural selector".into());
        }
        let Some(kind) = self.selector(path, &atom.selector) else {
            return;
        };
        let Some(domain) = kind.variables.get(&atom.variable) else {
            self.error(path, format!("{} has no variable {}", kind.name, atom.variable));
            return;
        };
        if atom.comparator.is_ordering() && !domain.is_ordered() {
            self.error(path, format!("{} ({domain}) is not ordered", atom.variable));
        }
        if !domain.contains(&atom.literal) {
            self.error(path, format!("{} is outside the domain of {} ({domain})", atom.literal, atom.variable));
        }
    }
}
