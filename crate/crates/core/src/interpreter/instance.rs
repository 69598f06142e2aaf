//! Runtime state of one program and its immutable snapshots.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::home::SimTime;
use crate::language::{Program, ProgramId, StmtPath, Trigger};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Stopped,
    Running,
    /// Running with device references that do not resolve.
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSnapshot {
    pub program: ProgramId,
    pub status: Status,
    pub statement_counters: BTreeMap<StmtPath, u64>,
    /// Firings per rule, by rule index.
    pub rule_counters: Vec<u64>,
    /// Armed rules whose condition has not come true.
    pub waiting: BTreeSet<usize>,
    pub unknown_refs: BTreeSet<String>,
    /// Wait statements with a pending resume.
    pub suspended: Vec<StmtPath>,
    pub started_at: Option<SimTime>,
}

impl InstanceSnapshot {
    /// The snapshot of a stored program that has never run.
    pub fn idle(program: &Program) -> Self {
        Self {
            program: program.id.clone(),
            status: Status::Stopped,
            statement_counters: program.statements().map(|(p, _)| (p, 0)).collect(),
            rule_counters: vec![0; program.rules.len()],
            waiting: BTreeSet::new(),
            unknown_refs: BTreeSet::new(),
            suspended: Vec::new(),
            started_at: None,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Instance {
    pub program: Arc<Program>,
    pub running: bool,
    /// Changes on every start and stop; work tagged with an older epoch is void.
    pub epoch: u64,
    pub start_order: u64,
    pub started_at: SimTime,
    pub statement_counters: BTreeMap<StmtPath, u64>,
    pub rule_counters: Vec<u64>,
    /// Last truth of each state rule's condition; `None` for event rules.
    pub truth: Vec<Option<bool>>,
    pub unknown_refs: BTreeSet<String>,
    pub imperative_done: bool,
}

impl Instance {
    pub fn new(program: Arc<Program>, epoch: u64, start_order: u64, now: SimTime) -> Self {
        let idle = InstanceSnapshot::idle(&program);
        Self {
            running: true,
            epoch,
            start_order,
            started_at: now,
            statement_counters: idle.statement_counters,
            rule_counters: idle.rule_counters,
            truth: vec![None; program.rules.len()],
            unknown_refs: BTreeSet::new(),
            imperative_done: false,
            program,
        }
    }

    pub fn status(&self) -> Status {
        match (self.running, self.unknown_refs.is_empty()) {
            (false, _) => Status::Stopped,
            (true, true) => Status::Running,
            (true, false) => Status::Degraded,
        }
    }

    pub fn snapshot(&self, suspended: Vec<StmtPath>) -> InstanceSnapshot {
        let waiting = if self.running {
            self.program
                .rules
                .iter()
                .enumerate()
                .filter(|(r, rule)| match rule.trigger {
                    Trigger::Event { .. } => true,
                    Trigger::State(_) => self.truth[*r] != Some(true),
                })
                .map(|(r, _)| r)
                .collect()
        } else {
            BTreeSet::new()
        };
        InstanceSnapshot {
            program: self.program.id.clone(),
            status: self.status(),
            statement_counters: self.statement_counters.clone(),
            rule_counters: self.rule_counters.clone(),
            waiting,
            unknown_refs: self.unknown_refs.clone(),
            suspended,
            started_at: Some(self.started_at),
        }
    }
}
