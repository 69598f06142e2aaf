//! Dependency graph between programs and devices, and write-write conflicts.
//!
//! Selectors are expanded against the registry at extraction time, Missing
//! devices included, so a graph is only valid for the registry generation it
//! was built from.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::home::{DeviceId, Registry};
use crate::interpreter::{InstanceSnapshot, Status};
use crate::language::{Access, Program, ProgramId, Selector, Statement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DevicePresence {
    Available,
    Missing,
    /// Named by a program but never registered.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramNode {
    pub id: ProgramId,
    /// Whether the program was among the analyzed ones, rather than only
    /// the target of a start or stop.
    pub analyzed: bool,
    /// Set by [`annotate`].
    pub status: Option<Status>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceNode {
    pub id: DeviceId,
    pub kind: Option<String>,
    pub display_name: Option<String>,
    pub presence: DevicePresence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Writes,
    Reads,
    Starts,
    Stops,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: ProgramId,
    /// A device id for reads and writes, a program id for starts and stops.
    pub to: String,
    pub kind: EdgeKind,
    /// Program locations that produce the edge.
    pub paths: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictState {
    /// At least two writers are running.
    Active,
    Latent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub device: DeviceId,
    pub writers: Vec<ProgramId>,
    pub state: Option<ConflictState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepGraph {
    /// Registry generation the graph was extracted from.
    pub generation: u64,
    pub programs: Vec<ProgramNode>,
    pub devices: Vec<DeviceNode>,
    pub edges: Vec<Edge>,
    pub conflicts: Vec<Conflict>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalyzerError {
    #[error("graph was extracted at generation {graph}, the registry is at {current}")]
    StaleGraph { graph: u64, current: u64 },
}

fn expand(selector: &Selector, registry: &Registry) -> Vec<DeviceId> {
    match selector {
        Selector::ById(id) => vec![id.clone()],
        _ => registry.devices().filter(|r| selector.matches(&r.descriptor)).map(|r| r.descriptor.id.clone()).collect(),
    }
}

pub fn extract<'a>(programs: impl IntoIterator<Item = &'a Program>, registry: &Registry) -> DepGraph {
    let mut nodes: BTreeMap<ProgramId, bool> = BTreeMap::new();
    let mut devices: BTreeSet<DeviceId> = BTreeSet::new();
    let mut edges: BTreeMap<(ProgramId, EdgeKind, String), Vec<String>> = BTreeMap::new();
    for p in programs {
        nodes.insert(p.id.clone(), true);
        for site in p.selector_sites() {
            let kind = match site.access {
                Access::Write => EdgeKind::Writes,
                Access::Read => EdgeKind::Reads,
            };
            for d in expand(site.selector, registry) {
                edges.entry((p.id.clone(), kind, d.to_string())).or_default().push(site.path.clone());
                devices.insert(d);
            }
        }
        for (path, s) in p.statements() {
            let (kind, target) = match s {
                Statement::Start(t) => (EdgeKind::Starts, t),
                Statement::Stop(t) => (EdgeKind::Stops, t),
                _ => continue,
            };
            nodes.entry(target.clone()).or_insert(false);
            edges.entry((p.id.clone(), kind, target.to_string())).or_default().push(path.to_string());
        }
    }
    let mut writers: BTreeMap<&str, BTreeSet<&ProgramId>> = BTreeMap::new();
    for (from, kind, to) in edges.keys() {
        if *kind == EdgeKind::Writes {
            writers.entry(to.as_str()).or_default().insert(from);
        }
    }
    let conflicts = writers
        .into_iter()
        .filter(|(_, w)| w.len() >= 2)
        .map(|(d, w)| Conflict { device: DeviceId::new(d), writers: w.into_iter().cloned().collect(), state: None })
        .collect();
    DepGraph {
        generation: registry.generation(),
        programs: nodes.into_iter().map(|(id, analyzed)| ProgramNode { id, analyzed, status: None }).collect(),
        devices: devices
            .into_iter()
            .map(|id| {
                let d = registry.descriptor(&id);
                DeviceNode {
                    kind: d.map(|d| d.kind.clone()),
                    display_name: d.map(|d| d.display_name.clone()),
                    presence: match d {
                        Some(d) if d.is_available() => DevicePresence::Available,
                        Some(_) => DevicePresence::Missing,
                        None => DevicePresence::Unknown,
                    },
                    id,
                }
            })
            .collect(),
        edges: edges.into_iter().map(|((from, kind, to), paths)| Edge { from, to, kind, paths }).collect(),
        conflicts,
    }
}

/// Adds program statuses and classifies conflicts as active or latent.
pub fn annotate(mut graph: DepGraph, snapshots: &[InstanceSnapshot], generation: u64) -> Result<DepGraph, AnalyzerError> {
    if graph.generation != generation {
        return Err(AnalyzerError::StaleGraph { graph: graph.generation, current: generation });
    }
    let status: BTreeMap<&ProgramId, Status> = snapshots.iter().map(|s| (&s.program, s.status)).collect();
    for node in &mut graph.programs {
        node.status = Some(status.get(&node.id).copied().unwrap_or(Status::Stopped));
    }
    for c in &mut graph.conflicts {
        let running = c.writers.iter().filter(|w| status.get(w).is_some_and(|s| *s != Status::Stopped)).count();
        c.state = Some(if running >= 2 { ConflictState::Active } else { ConflictState::Latent });
    }
    Ok(graph)
}

impl DepGraph {
    pub fn conflict_devices(&self) -> BTreeSet<&DeviceId> {
        self.conflicts.iter().map(|c| &c.device).collect()
    }

    pub fn conflict(&self, device: &DeviceId) -> Option<&Conflict> {
        self.conflicts.iter().find(|c| c.device == *device)
    }

    /// Graphviz rendering. Writes into a conflicting device are drawn red,
    /// bold when the conflict is active.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph dependencies {\n  rankdir=LR;\n");
        for p in &self.programs {
            let (shape, color) = match p.status {
                Some(Status::Running) => ("triangle", "green"),
                Some(Status::Degraded) => ("triangle", "orange"),
                Some(Status::Stopped) => ("square", "green"),
                None => ("box", "black"),
            };
            let _ = writeln!(out, "  \"p:{}\" [label=\"{}\", shape={shape}, color={color}];", p.id, p.id);
        }
        for d in &self.devices {
            let style = match d.presence {
                DevicePresence::Available => "solid",
                DevicePresence::Missing | DevicePresence::Unknown => "dashed",
            };
            let label = d.display_name.as_deref().unwrap_or(d.id.as_str());
            let _ = writeln!(out, "  \"d:{}\" [label=\"{}\", shape=ellipse, style={style}];", d.id, label.replace('"', "'"));
        }
        for e in &self.edges {
            let to = match e.kind {
                EdgeKind::Writes | EdgeKind::Reads => format!("d:{}", e.to),
                EdgeKind::Starts | EdgeKind::Stops => format!("p:{}", e.to),
            };
            let conflict = (e.kind == EdgeKind::Writes).then(|| self.conflict(&DeviceId::new(e.to.as_str()))).flatten();
            let attrs = match (e.kind, conflict.and_then(|c| c.state), conflict.is_some()) {
                (_, Some(ConflictState::Active), _) => "color=red, penwidth=3".to_string(),
                (_, _, true) => "color=red".to_string(),
                (EdgeKind::Reads, ..) => "style=dashed".to_string(),
                (kind, ..) => format!("label=\"{}\"", serde_json::to_value(kind).expect("kind").as_str().expect("str")),
            };
            let _ = writeln!(out, "  \"p:{}\" -> \"{to}\" [{attrs}];", e.from);
        }
        out.push_str("}\n");
        out
    }
}
