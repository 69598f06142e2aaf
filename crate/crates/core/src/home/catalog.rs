//! Device kind catalog: the vocabulary of variables, actions and events every
//! device of a kind shares.
//!
//! Catalogs are loaded from TOML; `docs/catalog.md` documents the schema. The
//! catalog shipped with the crate is available through [`Catalog::builtin`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::value::{Domain, Value};
use crate::lexicon::is_identifier;

const BUILTIN: &str = include_str!("../../catalog/default.toml");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("catalog is not valid TOML: {0}")]
    Syntax(String),
    #[error("kind {kind}: {message}")]
    Invalid { kind: String, message: String },
    #[error("duplicate kind {0}")]
    DuplicateKind(String),
    #[error("phrase {phrase:?} maps to both {first} and {second}")]
    PhraseClash { phrase: String, first: String, second: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub domain: Domain,
}

/// Where an effect takes the value it writes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectSource {
    Const(Value),
    /// Action argument or event payload field of that name.
    Input(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Effect {
    pub var: String,
    pub source: EffectSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionDef {
    pub name: String,
    pub phrase: String,
    pub params: Vec<Param>,
    pub effects: Vec<Effect>,
    /// Events emitted unconditionally each time the action is applied.
    pub emits: Vec<String>,
    /// Actions that cut power; refused on critical devices.
    pub power_removing: bool,
}

/// Emit the event automatically when `var` changes (to `to`, when given).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeWatch {
    pub var: String,
    pub to: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventFilter {
    pub field: String,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventType {
    pub name: String,
    pub phrase: String,
    pub payload: Vec<Param>,
    pub effects: Vec<Effect>,
    pub on_change: Option<ChangeWatch>,
    /// Payload field a rule trigger may pin to a literal.
    pub filter: Option<EventFilter>,
    /// Generated by the interpreter from armed triggers rather than by a device.
    pub clock_tick: bool,
}

impl EventType {
    pub fn payload_domain(&self, field: &str) -> Option<&Domain> {
        self.payload.iter().find(|p| p.name == field).map(|p| &p.domain)
    }

    pub fn filter_domain(&self) -> Option<&Domain> {
        self.filter.as_ref().and_then(|f| self.payload_domain(&f.field))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceKind {
    pub name: String,
    pub variables: BTreeMap<String, Domain>,
    pub actions: BTreeMap<String, ActionDef>,
    pub events: BTreeMap<String, EventType>,
}

impl DeviceKind {
    pub fn action(&self, name: &str) -> Option<&ActionDef> {
        self.actions.get(name)
    }

    pub fn event(&self, name: &str) -> Option<&EventType> {
        self.events.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    kinds: BTreeMap<String, DeviceKind>,
}

impl Catalog {
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN).expect("builtin catalog is valid")
    }

    pub fn builtin_source() -> &'static str {
        BUILTIN
    }

    pub fn from_toml_str(src: &str) -> Result<Self, CatalogError> {
        let raw: RawCatalog = toml::from_str(src).map_err(|e| CatalogError::Syntax(e.to_string()))?;
        Self::from_kinds(raw.kind.into_iter().map(RawKind::build).collect::<Result<Vec<_>, _>>()?)
    }

    pub fn from_kinds(kinds: Vec<DeviceKind>) -> Result<Self, CatalogError> {
        let mut map = BTreeMap::new();
        for kind in kinds {
            validate_kind(&kind)?;
            let name = kind.name.clone();
            if map.insert(name.clone(), kind).is_some() {
                return Err(CatalogError::DuplicateKind(name));
            }
        }
        let catalog = Catalog { kinds: map };
        catalog.check_phrases()?;
        Ok(catalog)
    }

    pub fn kind(&self, name: &str) -> Option<&DeviceKind> {
        self.kinds.get(name)
    }

    pub fn kinds(&self) -> impl Iterator<Item = &DeviceKind> {
        self.kinds.values()
    }

    /// Action and event names are shared vocabulary: one name, one phrase,
    /// across every kind.
    fn check_phrases(&self) -> Result<(), CatalogError> {
        let mut action_phrases: BTreeMap<&str, &str> = BTreeMap::new();
        let mut action_names: BTreeMap<&str, &str> = BTreeMap::new();
        let mut event_phrases: BTreeMap<&str, &str> = BTreeMap::new();
        let mut event_names: BTreeMap<&str, &str> = BTreeMap::new();
        for kind in self.kinds.values() {
            for a in kind.actions.values() {
                clash(&mut action_phrases, &a.phrase, &a.name)?;
                clash(&mut action_names, &a.name, &a.phrase)?;
            }
            for e in kind.events.values() {
                clash(&mut event_phrases, &e.phrase, &e.name)?;
                clash(&mut event_names, &e.name, &e.phrase)?;
            }
        }
        Ok(())
    }
}

fn clash<'a>(seen: &mut BTreeMap<&'a str, &'a str>, key: &'a str, value: &'a str) -> Result<(), CatalogError> {
    match seen.insert(key, value) {
        Some(prev) if prev != value => Err(CatalogError::PhraseClash {
            phrase: key.to_string(),
            first: prev.to_string(),
            second: value.to_string(),
        }),
        _ => Ok(()),
    }
}

fn validate_kind(kind: &DeviceKind) -> Result<(), CatalogError> {
    let err = |message: String| CatalogError::Invalid { kind: kind.name.clone(), message };
    if !is_identifier(&kind.name) {
        return Err(err("kind name is not an identifier".into()));
    }
    for (var, domain) in &kind.variables {
        if !is_identifier(var) {
            return Err(err(format!("variable {var:?} is not an identifier")));
        }
        validate_domain(domain).map_err(|m| err(format!("variable {var}: {m}")))?;
    }
    for action in kind.actions.values() {
        validate_phrase(&action.phrase).map_err(|m| err(format!("action {}: {m}", action.name)))?;
        if action.params.len() > 1 {
            return Err(err(format!("action {} takes more than one parameter", action.name)));
        }
        for p in &action.params {
            validate_domain(&p.domain).map_err(|m| err(format!("action {}: {m}", action.name)))?;
        }
        let inputs: BTreeMap<&str, &Domain> = action.params.iter().map(|p| (p.name.as_str(), &p.domain)).collect();
        check_effects(kind, &action.effects, &inputs).map_err(|m| err(format!("action {}: {m}", action.name)))?;
        for e in &action.emits {
            if !kind.events.contains_key(e) {
                return Err(err(format!("action {} emits undeclared event {e}", action.name)));
            }
        }
    }
    for event in kind.events.values() {
        validate_phrase(&event.phrase).map_err(|m| err(format!("event {}: {m}", event.name)))?;
        for p in &event.payload {
            validate_domain(&p.domain).map_err(|m| err(format!("event {}: {m}", event.name)))?;
        }
        let inputs: BTreeMap<&str, &Domain> = event.payload.iter().map(|p| (p.name.as_str(), &p.domain)).collect();
        check_effects(kind, &event.effects, &inputs).map_err(|m| err(format!("event {}: {m}", event.name)))?;
        if let Some(watch) = &event.on_change {
            let Some(domain) = kind.variables.get(&watch.var) else {
                return Err(err(format!("event {} watches undeclared variable {}", event.name, watch.var)));
            };
            if let Some(to) = &watch.to {
                if !domain.contains(to) {
                    return Err(err(format!("event {} watches {} for out-of-domain {to}", event.name, watch.var)));
                }
            }
            // auto-emitted events carry the new value under the variable's name
            for p in &event.payload {
                if p.name != watch.var {
                    return Err(err(format!("event {} has payload field {} not fed by its watch", event.name, p.name)));
                }
            }
        }
        if let Some(filter) = &event.filter {
            if event.payload_domain(&filter.field).is_none() {
                return Err(err(format!("event {} filters on undeclared field {}", event.name, filter.field)));
            }
        }
        if event.clock_tick {
            let ok = event.filter.as_ref().is_some_and(|f| f.required)
                && event.filter_domain() == Some(&Domain::Time)
                && event.payload.len() == 1;
            if !ok {
                return Err(err(format!("clock event {} needs exactly one required time filter", event.name)));
            }
        }
    }
    Ok(())
}

fn check_effects(kind: &DeviceKind, effects: &[Effect], inputs: &BTreeMap<&str, &Domain>) -> Result<(), String> {
    for effect in effects {
        let Some(domain) = kind.variables.get(&effect.var) else {
            return Err(format!("effect writes undeclared variable {}", effect.var));
        };
        match &effect.source {
            EffectSource::Const(v) if !domain.contains(v) => {
                return Err(format!("effect writes {v} outside the domain of {}", effect.var));
            }
            EffectSource::Input(name) => match inputs.get(name.as_str()) {
                None => return Err(format!("effect reads undeclared input {name}")),
                Some(d) if *d != domain => {
                    return Err(format!("input {name} and variable {} have different domains", effect.var));
                }
                _ => {}
            },
            _ => {}
        }
    }
    Ok(())
}

fn validate_domain(domain: &Domain) -> Result<(), String> {
    match domain {
        Domain::Int { min, max } if min > max => Err(format!("empty range {min}..{max}")),
        Domain::Enum { values } => {
            if values.is_empty() {
                return Err("empty enumeration".into());
            }
            if let Some(v) = values.iter().find(|v| !is_identifier(v)) {
                return Err(format!("enum value {v:?} is not an identifier"));
            }
            if values.iter().collect::<BTreeSet<_>>().len() != values.len() {
                return Err("duplicate enum value".into());
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn validate_phrase(phrase: &str) -> Result<(), String> {
    let words: Vec<&str> = phrase.split(' ').collect();
    if words.iter().any(|w| w.is_empty() || w.contains([',', '(', ')', ':', '\t', '\n'])) {
        return Err(format!("malformed phrase {phrase:?}"));
    }
    Ok(())
}

// ---- TOML surface ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCatalog {
    #[serde(default)]
    kind: Vec<RawKind>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKind {
    name: String,
    #[serde(default)]
    variables: Vec<Param>,
    #[serde(default)]
    action: Vec<RawAction>,
    #[serde(default)]
    event: Vec<RawEvent>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAction {
    name: String,
    phrase: String,
    #[serde(default)]
    params: Vec<Param>,
    #[serde(default)]
    effects: Vec<RawEffect>,
    #[serde(default)]
    emits: Vec<String>,
    #[serde(default)]
    power_removing: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    name: String,
    phrase: String,
    #[serde(default)]
    payload: Vec<Param>,
    #[serde(default)]
    effects: Vec<RawEffect>,
    on_change: Option<RawWatch>,
    filter: Option<EventFilter>,
    #[serde(default)]
    clock_tick: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEffect {
    var: String,
    value: Option<toml::Value>,
    input: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWatch {
    var: String,
    to: Option<toml::Value>,
}

impl RawKind {
    fn build(self) -> Result<DeviceKind, CatalogError> {
        let kind_name = self.name.clone();
        let err = |message: String| CatalogError::Invalid { kind: kind_name.clone(), message };
        let mut variables = BTreeMap::new();
        for p in self.variables {
            if variables.insert(p.name.clone(), p.domain).is_some() {
                return Err(err(format!("duplicate variable {}", p.name)));
            }
        }
        let convert = |var: &str, raw: &toml::Value| -> Result<Value, CatalogError> {
            let domain = variables
                .get(var)
                .ok_or_else(|| err(format!("undeclared variable {var}")))?;
            let json = serde_json::to_value(raw).map_err(|e| err(e.to_string()))?;
            domain
                .value_from_json(&json)
                .ok_or_else(|| err(format!("value {raw} is not in the domain of {var}")))
        };
        let effects = |raw: Vec<RawEffect>| -> Result<Vec<Effect>, CatalogError> {
            raw.into_iter()
                .map(|e| {
                    let source = match (e.value, e.input) {
                        (Some(v), None) => EffectSource::Const(convert(&e.var, &v)?),
                        (None, Some(i)) => EffectSource::Input(i),
                        _ => return Err(err(format!("effect on {} needs exactly one of value/input", e.var))),
                    };
                    Ok(Effect { var: e.var, source })
                })
                .collect()
        };
        let mut actions = BTreeMap::new();
        for a in self.action {
            let def = ActionDef {
                name: a.name.clone(),
                phrase: a.phrase,
                params: a.params,
                effects: effects(a.effects)?,
                emits: a.emits,
                power_removing: a.power_removing,
            };
            if actions.insert(a.name.clone(), def).is_some() {
                return Err(err(format!("duplicate action {}", a.name)));
            }
        }
        let mut events = BTreeMap::new();
        for e in self.event {
            let on_change = match e.on_change {
                Some(w) => {
                    let to = w.to.as_ref().map(|v| convert(&w.var, v)).transpose()?;
                    Some(ChangeWatch { var: w.var, to })
                }
                None => None,
            };
            let def = EventType {
                name: e.name.clone(),
                phrase: e.phrase,
                payload: e.payload,
                effects: effects(e.effects)?,
                on_change,
                filter: e.filter,
                clock_tick: e.clock_tick,
            };
            if events.insert(e.name.clone(), def).is_some() {
                return Err(err(format!("duplicate event {}", e.name)));
            }
        }
        Ok(DeviceKind { name: self.name, variables, actions, events })
    }
}
