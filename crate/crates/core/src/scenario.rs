//! Scripted scenarios: timed registry changes, sensor events and markers
//! that stand in for a real home.
//!
//! The file format is JSON Lines. Every non-blank line that does not start
//! with `#` is one step object with an `at` field (simulated ms) and a
//! `step` tag:
//!
//! ```text
//! {"at": 0, "step": "register_device", "device": {"id": "cube", "kind": "domicube", "display_name": "DomiCube", "location": "living"}, "state": {"face": 3}}
//! {"at": 5000, "step": "emit_event", "source": "cube", "event": "face_changed", "payload": {"face": 5}}
//! {"at": 9000, "step": "unregister_device", "id": "cube"}
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};
use thiserror::Error;

use crate::home::{event_from_json, state_from_json, Catalog, DeviceDescriptor, DeviceId, SimTime};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    RegisterDevice {
        device: DeviceDescriptor,
        #[serde(default)]
        state: Map<String, Json>,
    },
    UnregisterDevice {
        id: DeviceId,
    },
    EmitEvent {
        source: DeviceId,
        event: String,
        #[serde(default)]
        payload: Map<String, Json>,
    },
    SetCritical {
        id: DeviceId,
        critical: bool,
    },
    Marker {
        label: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedStep {
    pub at: SimTime,
    /// Line in the source file, 0 for steps built in code.
    pub line: usize,
    pub step: Step,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    /// Sorted by `at`; ties keep file order.
    pub steps: Vec<TimedStep>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

impl Scenario {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), steps: Vec::new() }
    }

    /// Appends a step, keeping the steps sorted.
    pub fn push(&mut self, at: SimTime, step: Step) -> &mut Self {
        let i = self.steps.partition_point(|s| s.at <= at);
        self.steps.insert(i, TimedStep { at, line: 0, step });
        self
    }

    /// Parses and checks a scenario. Register steps are checked against the
    /// catalog; events from devices the scenario registers itself are checked
    /// against their kind.
    pub fn parse(name: &str, text: &str, catalog: &Catalog) -> Result<Self, ScenarioError> {
        let mut steps = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |message: String| ScenarioError { line, message };
            let mut object: Map<String, Json> = serde_json::from_str(trimmed).map_err(|e| err(e.to_string()))?;
            let at = object
                .remove("at")
                .ok_or_else(|| err("missing field `at`".into()))?
                .as_u64()
                .ok_or_else(|| err("`at` must be a non-negative integer".into()))?;
            let step: Step = serde_json::from_value(Json::Object(object)).map_err(|e| err(e.to_string()))?;
            steps.push(TimedStep { at, line, step });
        }
        steps.sort_by_key(|s| s.at);
        let scenario = Scenario { name: name.to_string(), steps };
        scenario.check(catalog)?;
        Ok(scenario)
    }

    fn check(&self, catalog: &Catalog) -> Result<(), ScenarioError> {
        let mut kinds: BTreeMap<&DeviceId, &str> = BTreeMap::new();
        for s in &self.steps {
            let err = |message: String| ScenarioError { line: s.line, message };
            match &s.step {
                Step::RegisterDevice { device, state } => {
                    let kind = catalog.kind(&device.kind).ok_or_else(|| err(format!("unknown device kind {}", device.kind)))?;
                    device.check().map_err(|e| err(e.to_string()))?;
                    state_from_json(kind, state).map_err(|e| err(e.to_string()))?;
                    if let Some(previous) = kinds.insert(&device.id, &device.kind) {
                        if previous != device.kind {
                            return Err(err(format!("{} was registered as {previous}", device.id)));
                        }
                    }
                }
                Step::EmitEvent { source, event, payload } => {
                    if let Some(kind) = kinds.get(source).and_then(|k| catalog.kind(k)) {
                        event_from_json(kind, source, event, payload, s.at).map_err(|e| err(e.to_string()))?;
                    }
                }
                Step::Marker { label } if label.is_empty() => return Err(err("empty marker label".into())),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let mut object = Map::new();
            object.insert("at".into(), Json::from(s.at));
            if let Json::Object(fields) = serde_json::to_value(&s.step).expect("steps serialize") {
                object.extend(fields);
            }
            out.push_str(&Json::Object(object).to_string());
            out.push('\n');
        }
        out
    }

    pub fn end(&self) -> SimTime {
        self.steps.last().map_or(0, |s| s.at)
    }
}
