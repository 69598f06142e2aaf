//! The concrete grammar, specialised to what the home currently contains.
//!
//! Keywords are fixed. Every other terminal (device, kind, location,
//! property, action, event, variable, program) comes from the registry the
//! grammar was derived from, so a device that leaves the home leaves the
//! language with it.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Serialize;

use super::ast::ProgramId;
use super::unit::{Keyword, Unit};
use crate::home::{Catalog, DeviceId, DeviceKind, Registry};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeviceTerm {
    pub name: String,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    /// Registry generation this grammar was derived from.
    pub generation: u64,
    pub devices: BTreeMap<DeviceId, DeviceTerm>,
    pub kinds: BTreeMap<String, DeviceKind>,
    pub locations: BTreeSet<String>,
    /// Property name to the values present in the home.
    pub properties: BTreeMap<String, BTreeSet<String>>,
    pub programs: BTreeSet<ProgramId>,
    /// Accept any identifier where a device, location, property or program
    /// is expected. Used to reload stored programs whose devices may not be
    /// in the home (yet or any more).
    pub open: bool,
    catalog: Arc<Catalog>,
}

pub const KEYWORDS: [Keyword; 24] = [
    Keyword::Program,
    Keyword::EachTime,
    Keyword::If,
    Keyword::Do,
    Keyword::Start,
    Keyword::Stop,
    Keyword::Wait,
    Keyword::All,
    Keyword::Any,
    Keyword::LocatedIn,
    Keyword::Whose,
    Keyword::Is,
    Keyword::IsNot,
    Keyword::IsBelow,
    Keyword::IsAtMost,
    Keyword::IsAbove,
    Keyword::IsAtLeast,
    Keyword::To,
    Keyword::And,
    Keyword::Or,
    Keyword::Not,
    Keyword::LParen,
    Keyword::RParen,
    Keyword::Comma,
];

impl Grammar {
    /// Grammar of the Available part of `registry`.
    pub fn derive(registry: &Registry) -> Self {
        let catalog = registry.catalog().clone();
        let mut g = Grammar {
            generation: registry.generation(),
            devices: BTreeMap::new(),
            kinds: BTreeMap::new(),
            locations: BTreeSet::new(),
            properties: BTreeMap::new(),
            programs: BTreeSet::new(),
            open: false,
            catalog: catalog.clone(),
        };
        for record in registry.available() {
            let d = &record.descriptor;
            g.devices.insert(d.id.clone(), DeviceTerm { name: d.display_name.clone(), kind: d.kind.clone() });
            if let Some(kind) = catalog.kind(&d.kind) {
                g.kinds.entry(d.kind.clone()).or_insert_with(|| kind.clone());
            }
            g.locations.insert(d.location.clone());
            for (p, v) in &d.properties {
                g.properties.entry(p.clone()).or_default().insert(v.clone());
            }
        }
        g
    }

    /// Catalog-wide grammar that accepts any identifier for devices,
    /// locations, properties and programs.
    pub fn permissive(catalog: Arc<Catalog>) -> Self {
        Grammar {
            generation: 0,
            devices: BTreeMap::new(),
            kinds: catalog.kinds().map(|k| (k.name.clone(), k.clone())).collect(),
            locations: BTreeSet::new(),
            properties: BTreeMap::new(),
            programs: BTreeSet::new(),
            open: true,
            catalog,
        }
    }

    pub fn with_programs(mut self, programs: impl IntoIterator<Item = ProgramId>) -> Self {
        self.programs.extend(programs);
        self
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn kind(&self, name: &str) -> Option<&DeviceKind> {
        self.kinds.get(name)
    }

    pub fn device_kind(&self, id: &DeviceId) -> Option<&DeviceKind> {
        self.devices.get(id).and_then(|d| self.kinds.get(&d.kind))
    }

    pub fn has_device(&self, id: &DeviceId) -> bool {
        self.devices.contains_key(id)
    }

    /// Phrase of an action, looked up catalog-wide so programs naming absent
    /// kinds still render.
    pub fn action_phrase(&self, action: &str) -> String {
        self.catalog
            .kinds()
            .find_map(|k| k.action(action).map(|a| a.phrase.clone()))
            .unwrap_or_else(|| action.to_string())
    }

    pub fn event_phrase(&self, event: &str) -> String {
        self.catalog
            .kinds()
            .find_map(|k| k.event(event).map(|e| e.phrase.clone()))
            .unwrap_or_else(|| event.to_string())
    }

    /// Action units of every kind in the grammar, one per action name.
    pub fn action_units(&self) -> Vec<Unit> {
        let mut seen = BTreeMap::new();
        for k in self.kinds.values() {
            for a in k.actions.values() {
                seen.entry(a.name.clone()).or_insert_with(|| a.phrase.clone());
            }
        }
        seen.into_iter().map(|(name, phrase)| Unit::Action { name, phrase }).collect()
    }

    /// Every non-keyword terminal text. Literals of enumerated domains are
    /// included since they are finite; numbers, times and names are not.
    pub fn terminals(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for id in self.devices.keys() {
            out.insert(Unit::Device(id.clone()).text());
        }
        for k in self.kinds.values() {
            out.insert(k.name.clone());
            for a in k.actions.values() {
                out.insert(a.phrase.clone());
                for p in &a.params {
                    out.extend(enumerated(&p.domain));
                }
            }
            for e in k.events.values() {
                out.insert(e.phrase.clone());
                if let Some(d) = e.filter_domain() {
                    out.extend(enumerated(d));
                }
            }
            for (v, d) in &k.variables {
                out.insert(v.clone());
                out.extend(enumerated(d));
            }
        }
        out.extend(self.locations.iter().cloned());
        for (p, values) in &self.properties {
            out.insert(p.clone());
            out.extend(values.iter().cloned());
        }
        out.extend(self.programs.iter().map(|p| p.0.clone()));
        out
    }
}

fn enumerated(d: &crate::home::Domain) -> Vec<String> {
    d.enumerate().unwrap_or_default().into_iter().map(|v| v.to_string()).collect()
}
