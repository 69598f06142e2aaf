//! Live device registry: descriptors, per-device state and availability.
//!
//! Descriptors are never deleted. A device that leaves the home becomes
//! `Missing` with its last state frozen, so programs that still name it can
//! be flagged instead of silently breaking.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::catalog::{ActionDef, Catalog, DeviceKind, Effect, EffectSource, EventType};
use super::value::{Domain, Value};
use crate::lexicon::is_identifier;

/// Simulated milliseconds since scenario start.
pub type SimTime = u64;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceId(pub String);

impl DeviceId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DeviceId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Availability {
    Available,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceDescriptor {
    pub id: DeviceId,
    pub kind: String,
    pub display_name: String,
    pub location: String,
    #[serde(default)]
    pub properties: BTreeMap<String, String>,
    #[serde(default)]
    pub critical: bool,
    #[serde(default = "available")]
    pub availability: Availability,
}

fn available() -> Availability {
    Availability::Available
}

impl DeviceDescriptor {
    pub fn new(id: &str, kind: &str, display_name: &str, location: &str) -> Self {
        Self {
            id: DeviceId::new(id),
            kind: kind.to_string(),
            display_name: display_name.to_string(),
            location: location.to_string(),
            properties: BTreeMap::new(),
            critical: false,
            availability: Availability::Available,
        }
    }

    pub fn with_property(mut self, name: &str, value: &str) -> Self {
        self.properties.insert(name.to_string(), value.to_string());
        self
    }

    pub fn critical(mut self, critical: bool) -> Self {
        self.critical = critical;
        self
    }

    pub fn is_available(&self) -> bool {
        self.availability == Availability::Available
    }

    /// Checks that the id, location and properties are identifiers.
    pub fn check(&self) -> Result<(), HomeError> {
        check_descriptor(self)
    }

    /// Property lookup where `location` is the descriptor's room.
    pub fn property(&self, name: &str) -> Option<&str> {
        if name == LOCATION_PROPERTY {
            Some(&self.location)
        } else {
            self.properties.get(name).map(String::as_str)
        }
    }
}

/// Property name under which selectors scope by room.
pub const LOCATION_PROPERTY: &str = "location";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceState {
    pub values: BTreeMap<String, Value>,
    pub updated_at: BTreeMap<String, SimTime>,
}

impl DeviceState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: &str, value: Value) -> Self {
        self.values.insert(var.to_string(), value);
        self
    }

    pub fn get(&self, var: &str) -> Option<&Value> {
        self.values.get(var)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub descriptor: DeviceDescriptor,
    pub state: DeviceState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomeEvent {
    pub source: DeviceId,
    pub event_type: String,
    pub payload: BTreeMap<String, Value>,
    pub at: SimTime,
    /// Set when the source is currently Missing.
    #[serde(default)]
    pub from_missing: bool,
}

impl HomeEvent {
    pub fn new(source: &str, event_type: &str, at: SimTime) -> Self {
        Self {
            source: DeviceId::new(source),
            event_type: event_type.to_string(),
            payload: BTreeMap::new(),
            at,
            from_missing: false,
        }
    }

    pub fn with(mut self, field: &str, value: Value) -> Self {
        self.payload.insert(field.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateChange {
    pub device: DeviceId,
    pub var: String,
    pub old: Value,
    pub new: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "change", rename_all = "snake_case")]
pub enum RegistryDelta {
    Registered { id: DeviceId, resumed: bool, generation: u64 },
    Unregistered { id: DeviceId, generation: u64 },
    CriticalChanged { id: DeviceId, critical: bool, generation: u64 },
    Unchanged { id: DeviceId, generation: u64 },
}

impl RegistryDelta {
    pub fn generation(&self) -> u64 {
        match self {
            RegistryDelta::Registered { generation, .. }
            | RegistryDelta::Unregistered { generation, .. }
            | RegistryDelta::CriticalChanged { generation, .. }
            | RegistryDelta::Unchanged { generation, .. } => *generation,
        }
    }

    pub fn is_change(&self) -> bool {
        !matches!(self, RegistryDelta::Unchanged { .. })
    }
}

/// Outcome of a successful action.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActionOutcome {
    pub changes: Vec<StateChange>,
    pub events: Vec<HomeEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reading {
    pub value: Value,
    /// The device is Missing; the value is its last known one.
    pub stale: bool,
    pub updated_at: SimTime,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HomeError {
    #[error("unknown device kind {0}")]
    UnknownKind(String),
    #[error("unknown device {0}")]
    UnknownDevice(DeviceId),
    #[error("device {0} is missing")]
    MissingDevice(DeviceId),
    #[error("device {0} is already registered")]
    DuplicateId(DeviceId),
    #[error("device {id} was registered as {expected}, not {found}")]
    KindMismatch { id: DeviceId, expected: String, found: String },
    #[error("{0:?} is not a valid identifier")]
    InvalidIdentifier(String),
    #[error("{kind} has no variable {var}")]
    UnknownVariable { kind: String, var: String },
    #[error("{value} is outside the domain of {var} ({domain})")]
    DomainViolation { var: String, value: Value, domain: Domain },
    #[error("{kind} does not support action {action}")]
    UnsupportedAction { kind: String, action: String },
    #[error("{action} expects {expected} argument(s), got {found}")]
    ArgumentCount { action: String, expected: usize, found: usize },
    #[error("{kind} has no event {event}")]
    UnknownEvent { kind: String, event: String },
    #[error("payload of {event}: {message}")]
    PayloadViolation { event: String, message: String },
    #[error("{action} removes power from critical device {id}")]
    CriticalDeviceDenied { id: DeviceId, action: String },
}

/// The home's device registry.
///
/// `generation` bumps on every membership or criticality change; state
/// updates do not touch it since the grammar only depends on membership.
#[derive(Debug, Clone)]
pub struct Registry {
    catalog: Arc<Catalog>,
    devices: BTreeMap<DeviceId, DeviceRecord>,
    generation: u64,
}

impl PartialEq for Registry {
    fn eq(&self, other: &Self) -> bool {
        self.generation == other.generation && self.devices == other.devices && *self.catalog == *other.catalog
    }
}

impl Registry {
    pub fn new(catalog: Arc<Catalog>) -> Self {
        Self { catalog, devices: BTreeMap::new(), generation: 0 }
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn devices(&self) -> impl Iterator<Item = &DeviceRecord> {
        self.devices.values()
    }

    pub fn available(&self) -> impl Iterator<Item = &DeviceRecord> {
        self.devices.values().filter(|r| r.descriptor.is_available())
    }

    pub fn get(&self, id: &DeviceId) -> Option<&DeviceRecord> {
        self.devices.get(id)
    }

    pub fn descriptor(&self, id: &DeviceId) -> Option<&DeviceDescriptor> {
        self.devices.get(id).map(|r| &r.descriptor)
    }

    pub fn kind_of(&self, id: &DeviceId) -> Option<&DeviceKind> {
        self.descriptor(id).and_then(|d| self.catalog.kind(&d.kind))
    }

    pub fn register_device(
        &mut self,
        descriptor: DeviceDescriptor,
        initial_state: DeviceState,
        now: SimTime,
    ) -> Result<RegistryDelta, HomeError> {
        let kind = self
            .catalog
            .kind(&descriptor.kind)
            .ok_or_else(|| HomeError::UnknownKind(descriptor.kind.clone()))?;
        check_descriptor(&descriptor)?;
        let state = complete_state(kind, initial_state, now)?;
        if let Some(existing) = self.devices.get_mut(&descriptor.id) {
            if existing.descriptor.is_available() {
                return Err(HomeError::DuplicateId(descriptor.id));
            }
            if existing.descriptor.kind != descriptor.kind {
                return Err(HomeError::KindMismatch {
                    id: descriptor.id,
                    expected: existing.descriptor.kind.clone(),
                    found: descriptor.kind,
                });
            }
            // a returning device resumes its descriptor and frozen state
            existing.descriptor.availability = Availability::Available;
            self.generation += 1;
            return Ok(RegistryDelta::Registered { id: descriptor.id, resumed: true, generation: self.generation });
        }
        let id = descriptor.id.clone();
        let mut descriptor = descriptor;
        descriptor.availability = Availability::Available;
        self.devices.insert(id.clone(), DeviceRecord { descriptor, state });
        self.generation += 1;
        Ok(RegistryDelta::Registered { id, resumed: false, generation: self.generation })
    }

    pub fn unregister_device(&mut self, id: &DeviceId) -> Result<RegistryDelta, HomeError> {
        let record = self.devices.get_mut(id).ok_or_else(|| HomeError::UnknownDevice(id.clone()))?;
        if !record.descriptor.is_available() {
            return Ok(RegistryDelta::Unchanged { id: id.clone(), generation: self.generation });
        }
        record.descriptor.availability = Availability::Missing;
        self.generation += 1;
        Ok(RegistryDelta::Unregistered { id: id.clone(), generation: self.generation })
    }

    pub fn set_critical(&mut self, id: &DeviceId, critical: bool) -> Result<RegistryDelta, HomeError> {
        let record = self.devices.get_mut(id).ok_or_else(|| HomeError::UnknownDevice(id.clone()))?;
        if record.descriptor.critical == critical {
            return Ok(RegistryDelta::Unchanged { id: id.clone(), generation: self.generation });
        }
        record.descriptor.critical = critical;
        self.generation += 1;
        Ok(RegistryDelta::CriticalChanged { id: id.clone(), critical, generation: self.generation })
    }

    /// Checks an action without applying it.
    pub fn check_action(&self, id: &DeviceId, action: &str, args: &[Value]) -> Result<&ActionDef, HomeError> {
        let record = self.devices.get(id).ok_or_else(|| HomeError::UnknownDevice(id.clone()))?;
        if !record.descriptor.is_available() {
            return Err(HomeError::MissingDevice(id.clone()));
        }
        let kind = self.catalog.kind(&record.descriptor.kind).expect("registered kinds exist");
        let def = kind.action(action).ok_or_else(|| HomeError::UnsupportedAction {
            kind: kind.name.clone(),
            action: action.to_string(),
        })?;
        // the guard comes before argument checks so it holds for every argument vector
        if def.power_removing && record.descriptor.critical {
            return Err(HomeError::CriticalDeviceDenied { id: id.clone(), action: action.to_string() });
        }
        if def.params.len() != args.len() {
            return Err(HomeError::ArgumentCount { action: action.to_string(), expected: def.params.len(), found: args.len() });
        }
        for (param, arg) in def.params.iter().zip(args) {
            if !param.domain.contains(arg) {
                return Err(HomeError::DomainViolation { var: param.name.clone(), value: arg.clone(), domain: param.domain.clone() });
            }
        }
        Ok(def)
    }

    pub fn apply_action(&mut self, id: &DeviceId, action: &str, args: &[Value], now: SimTime) -> Result<ActionOutcome, HomeError> {
        let def = self.check_action(id, action, args)?.clone();
        let inputs: BTreeMap<&str, &Value> = def.params.iter().map(|p| p.name.as_str()).zip(args).collect();
        let kind = self.kind_of(id).expect("checked").clone();
        let record = self.devices.get_mut(id).expect("checked");
        let changes = write_effects(record, &def.effects, &inputs, now);
        let mut events = watched_events(&kind, id, &changes, now);
        for name in &def.emits {
            events.push(HomeEvent::new(id.as_str(), name, now));
        }
        Ok(ActionOutcome { changes, events })
    }

    /// Validates an event against its source's kind and applies its state
    /// effects. Events from Missing devices are accepted, tagged and leave the
    /// frozen state alone.
    pub fn accept_event(&mut self, mut event: HomeEvent) -> Result<(HomeEvent, Vec<StateChange>), HomeError> {
        let record = self.devices.get(&event.source).ok_or_else(|| HomeError::UnknownDevice(event.source.clone()))?;
        let kind = self.catalog.kind(&record.descriptor.kind).expect("registered kinds exist");
        let def = kind.event(&event.event_type).ok_or_else(|| HomeError::UnknownEvent {
            kind: kind.name.clone(),
            event: event.event_type.clone(),
        })?;
        validate_payload(def, &event.payload)?;
        event.from_missing = !record.descriptor.is_available();
        if event.from_missing {
            return Ok((event, Vec::new()));
        }
        let effects = def.effects.clone();
        let record = self.devices.get_mut(&event.source).expect("checked");
        let inputs: BTreeMap<&str, &Value> = event.payload.iter().map(|(k, v)| (k.as_str(), v)).collect();
        let changes = write_effects(record, &effects, &inputs, event.at);
        Ok((event, changes))
    }

    pub fn read_state(&self, id: &DeviceId, var: &str) -> Result<Reading, HomeError> {
        let record = self.devices.get(id).ok_or_else(|| HomeError::UnknownDevice(id.clone()))?;
        let value = record.state.values.get(var).ok_or_else(|| HomeError::UnknownVariable {
            kind: record.descriptor.kind.clone(),
            var: var.to_string(),
        })?;
        Ok(Reading {
            value: value.clone(),
            stale: !record.descriptor.is_available(),
            updated_at: record.state.updated_at.get(var).copied().unwrap_or(0),
        })
    }

    /// Types plain JSON action arguments against the action's parameters.
    pub fn action_args_from_json(&self, id: &DeviceId, action: &str, args: &[serde_json::Value]) -> Result<Vec<Value>, HomeError> {
        let kind = self.kind_of(id).ok_or_else(|| HomeError::UnknownDevice(id.clone()))?;
        let def = kind.action(action).ok_or_else(|| HomeError::UnsupportedAction {
            kind: kind.name.clone(),
            action: action.to_string(),
        })?;
        if def.params.len() != args.len() {
            return Err(HomeError::ArgumentCount { action: action.to_string(), expected: def.params.len(), found: args.len() });
        }
        def.params
            .iter()
            .zip(args)
            .map(|(p, a)| {
                p.domain.value_from_json(a).ok_or_else(|| HomeError::PayloadViolation {
                    event: action.to_string(),
                    message: format!("{a} is not a valid {} ({})", p.name, p.domain),
                })
            })
            .collect()
    }

    /// Builds an event from a plain JSON payload typed by the source's kind.
    pub fn event_from_json(
        &self,
        source: &DeviceId,
        event_type: &str,
        payload: &serde_json::Map<String, serde_json::Value>,
        at: SimTime,
    ) -> Result<HomeEvent, HomeError> {
        let kind = self.kind_of(source).ok_or_else(|| HomeError::UnknownDevice(source.clone()))?;
        event_from_json(kind, source, event_type, payload, at)
    }
}

/// Types a JSON payload against an event of `kind`.
pub fn event_from_json(
    kind: &DeviceKind,
    source: &DeviceId,
    event_type: &str,
    payload: &serde_json::Map<String, serde_json::Value>,
    at: SimTime,
) -> Result<HomeEvent, HomeError> {
    let def = kind.event(event_type).ok_or_else(|| HomeError::UnknownEvent {
        kind: kind.name.clone(),
        event: event_type.to_string(),
    })?;
    let mut event = HomeEvent::new(source.as_str(), event_type, at);
    for (field, json) in payload {
        let domain = def.payload_domain(field).ok_or_else(|| HomeError::PayloadViolation {
            event: event_type.to_string(),
            message: format!("unexpected field {field}"),
        })?;
        let value = domain.value_from_json(json).ok_or_else(|| HomeError::PayloadViolation {
            event: event_type.to_string(),
            message: format!("{json} is outside {field} ({domain})"),
        })?;
        event.payload.insert(field.clone(), value);
    }
    validate_payload(def, &event.payload)?;
    Ok(event)
}

/// Types a JSON object of initial values against `kind`.
pub fn state_from_json(kind: &DeviceKind, values: &serde_json::Map<String, serde_json::Value>) -> Result<DeviceState, HomeError> {
    let mut state = DeviceState::new();
    for (var, json) in values {
        let domain = kind.variables.get(var).ok_or_else(|| HomeError::UnknownVariable {
            kind: kind.name.clone(),
            var: var.clone(),
        })?;
        let value = domain.value_from_json(json).ok_or_else(|| HomeError::PayloadViolation {
            event: kind.name.clone(),
            message: format!("{json} is outside {var} ({domain})"),
        })?;
        state = state.with(var, value);
    }
    Ok(state)
}

fn check_descriptor(d: &DeviceDescriptor) -> Result<(), HomeError> {
    let names = std::iter::once(d.id.as_str())
        .chain(std::iter::once(d.location.as_str()))
        .chain(d.properties.iter().flat_map(|(k, v)| [k.as_str(), v.as_str()]));
    for name in names {
        if !is_identifier(name) {
            return Err(HomeError::InvalidIdentifier(name.to_string()));
        }
    }
    if d.properties.contains_key(LOCATION_PROPERTY) {
        return Err(HomeError::InvalidIdentifier(LOCATION_PROPERTY.to_string()));
    }
    Ok(())
}

fn complete_state(kind: &DeviceKind, given: DeviceState, now: SimTime) -> Result<DeviceState, HomeError> {
    for (var, value) in &given.values {
        let domain = kind.variables.get(var).ok_or_else(|| HomeError::UnknownVariable {
            kind: kind.name.clone(),
            var: var.clone(),
        })?;
        if !domain.contains(value) {
            return Err(HomeError::DomainViolation { var: var.clone(), value: value.clone(), domain: domain.clone() });
        }
    }
    let mut state = DeviceState::new();
    for (var, domain) in &kind.variables {
        let value = given.values.get(var).cloned().unwrap_or_else(|| domain.default_value());
        state.values.insert(var.clone(), value);
        state.updated_at.insert(var.clone(), given.updated_at.get(var).copied().unwrap_or(now));
    }
    Ok(state)
}

fn write_effects(record: &mut DeviceRecord, effects: &[Effect], inputs: &BTreeMap<&str, &Value>, now: SimTime) -> Vec<StateChange> {
    let mut changes = Vec::new();
    for effect in effects {
        let new = match &effect.source {
            EffectSource::Const(v) => v.clone(),
            EffectSource::Input(name) => match inputs.get(name.as_str()) {
                Some(v) => (*v).clone(),
                None => continue,
            },
        };
        let old = record.state.values.insert(effect.var.clone(), new.clone()).expect("effects write declared variables");
        if old != new {
            record.state.updated_at.insert(effect.var.clone(), now);
            changes.push(StateChange { device: record.descriptor.id.clone(), var: effect.var.clone(), old, new });
        }
    }
    changes
}

fn watched_events(kind: &DeviceKind, id: &DeviceId, changes: &[StateChange], now: SimTime) -> Vec<HomeEvent> {
    let mut events = Vec::new();
    for change in changes {
        for event in kind.events.values() {
            let Some(watch) = &event.on_change else { continue };
            if watch.var != change.var || watch.to.as_ref().is_some_and(|to| *to != change.new) {
                continue;
            }
            let mut e = HomeEvent::new(id.as_str(), &event.name, now);
            for p in &event.payload {
                e.payload.insert(p.name.clone(), change.new.clone());
            }
            events.push(e);
        }
    }
    events
}

fn validate_payload(def: &EventType, payload: &BTreeMap<String, Value>) -> Result<(), HomeError> {
    let violation = |message: String| HomeError::PayloadViolation { event: def.name.clone(), message };
    for p in &def.payload {
        match payload.get(&p.name) {
            None => return Err(violation(format!("missing field {}", p.name))),
            Some(v) if !p.domain.contains(v) => {
                return Err(violation(format!("{v} is outside {} ({})", p.name, p.domain)));
            }
            _ => {}
        }
    }
    if let Some(extra) = payload.keys().find(|k| def.payload_domain(k).is_none()) {
        return Err(violation(format!("unexpected field {extra}")));
    }
    Ok(())
}
