//! Abstract syntax of automation programs.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::home::{DeviceDescriptor, DeviceId, Value};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProgramId(pub String);

impl ProgramId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ProgramId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ProgramId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// A program: an imperative prologue run once on start, then rules that stay
/// armed while the program runs. The header name doubles as the program id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub id: ProgramId,
    pub imperative: Vec<Statement>,
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statement {
    Action { target: Selector, action: String, args: Vec<Value> },
    Start(ProgramId),
    Stop(ProgramId),
    /// Pause the block for this many simulated milliseconds.
    Wait(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub trigger: Trigger,
    pub body: Vec<Statement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// Fires on each matching event occurrence.
    Event { selector: Selector, event: String, filter: Option<Value> },
    /// Fires when the condition becomes true.
    State(StateExpr),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateExpr {
    Atom(Atom),
    Not(Box<StateExpr>),
    And(Box<StateExpr>, Box<StateExpr>),
    Or(Box<StateExpr>, Box<StateExpr>),
}

impl StateExpr {
    /// Atoms in source order.
    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a Atom>) {
        match self {
            StateExpr::Atom(a) => out.push(a),
            StateExpr::Not(e) => e.collect_atoms(out),
            StateExpr::And(l, r) | StateExpr::Or(l, r) => {
                l.collect_atoms(out);
                r.collect_atoms(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            StateExpr::Atom(_) => 1,
            StateExpr::Not(e) => 1 + e.depth(),
            StateExpr::And(l, r) | StateExpr::Or(l, r) => 1 + l.depth().max(r.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    pub selector: Selector,
    /// Only meaningful for plural selectors; `All` for single devices.
    pub quantifier: Quantifier,
    pub variable: String,
    pub comparator: Comparator,
    pub literal: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantifier {
    All,
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparator {
    pub const ALL: [Comparator; 6] =
        [Comparator::Eq, Comparator::Ne, Comparator::Lt, Comparator::Le, Comparator::Gt, Comparator::Ge];

    pub fn is_ordering(self) -> bool {
        !matches!(self, Comparator::Eq | Comparator::Ne)
    }

    pub fn holds(self, lhs: &Value, rhs: &Value) -> bool {
        match self {
            Comparator::Eq => lhs == rhs,
            Comparator::Ne => lhs != rhs,
            _ => {
                let ord = match (lhs, rhs) {
                    (Value::Int(a), Value::Int(b)) => a.cmp(b),
                    (Value::Time(a), Value::Time(b)) => a.cmp(b),
                    _ => return false,
                };
                match self {
                    Comparator::Lt => ord.is_lt(),
                    Comparator::Le => ord.is_le(),
                    Comparator::Gt => ord.is_gt(),
                    Comparator::Ge => ord.is_ge(),
                    Comparator::Eq | Comparator::Ne => unreachable!(),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    ById(DeviceId),
    AllOfKind(String),
    Filtered { kind: String, property: String, value: String },
}

impl Selector {
    pub fn is_plural(&self) -> bool {
        !matches!(self, Selector::ById(_))
    }

    pub fn device(&self) -> Option<&DeviceId> {
        match self {
            Selector::ById(id) => Some(id),
            _ => None,
        }
    }

    /// Whether the selector denotes `d`, ignoring availability.
    pub fn matches(&self, d: &DeviceDescriptor) -> bool {
        match self {
            Selector::ById(id) => d.id == *id,
            Selector::AllOfKind(kind) => d.kind == *kind,
            Selector::Filtered { kind, property, value } => {
                d.kind == *kind && d.property(property) == Some(value.as_str())
            }
        }
    }

    pub fn kind(&self) -> Option<&str> {
        match self {
            Selector::ById(_) => None,
            Selector::AllOfKind(k) | Selector::Filtered { kind: k, .. } => Some(k),
        }
    }
}

/// Which block of a program a statement belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Imperative,
    Rule(usize),
}

/// Address of one statement, stable across runs of the same program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StmtPath {
    pub block: Block,
    pub index: usize,
}

impl fmt::Display for StmtPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.block {
            Block::Imperative => write!(f, "imperative[{}]", self.index),
            Block::Rule(r) => write!(f, "rule[{r}].body[{}]", self.index),
        }
    }
}

impl Serialize for StmtPath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StmtPath {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        StmtPath::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("bad statement path {s:?}")))
    }
}

impl StmtPath {
    pub fn parse(s: &str) -> Option<Self> {
        fn index(s: &str, prefix: &str) -> Option<usize> {
            s.strip_prefix(prefix)?.strip_suffix(']')?.parse().ok()
        }
        if let Some(i) = index(s, "imperative[") {
            return Some(StmtPath { block: Block::Imperative, index: i });
        }
        let rest = s.strip_prefix("rule[")?;
        let (r, body) = rest.split_once("].body[")?;
        Some(StmtPath { block: Block::Rule(r.parse().ok()?), index: body.strip_suffix(']')?.parse().ok()? })
    }
}

/// Whether a selector occurrence reads or writes the devices it denotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Access {
    Write,
    Read,
}

/// One selector occurrence in a program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectorSite<'a> {
    pub path: String,
    pub selector: &'a Selector,
    pub access: Access,
}

impl Program {
    pub fn new(id: &str) -> Self {
        Self { id: ProgramId::new(id), imperative: Vec::new(), rules: Vec::new() }
    }

    pub fn block(&self, block: Block) -> &[Statement] {
        match block {
            Block::Imperative => &self.imperative,
            Block::Rule(r) => &self.rules[r].body,
        }
    }

    pub fn statements(&self) -> impl Iterator<Item = (StmtPath, &Statement)> {
        let imperative = self
            .imperative
            .iter()
            .enumerate()
            .map(|(i, s)| (StmtPath { block: Block::Imperative, index: i }, s));
        let bodies = self.rules.iter().enumerate().flat_map(|(r, rule)| {
            rule.body.iter().enumerate().map(move |(i, s)| (StmtPath { block: Block::Rule(r), index: i }, s))
        });
        imperative.chain(bodies)
    }

    /// Every selector occurrence with its path, in source order.
    pub fn selector_sites(&self) -> Vec<SelectorSite<'_>> {
        let mut sites = Vec::new();
        for (i, s) in self.imperative.iter().enumerate() {
            if let Statement::Action { target, .. } = s {
                sites.push(SelectorSite { path: format!("imperative[{i}]"), selector: target, access: Access::Write });
            }
        }
        for (r, rule) in self.rules.iter().enumerate() {
            match &rule.trigger {
                Trigger::Event { selector, .. } => {
                    sites.push(SelectorSite { path: format!("rule[{r}].trigger"), selector, access: Access::Read });
                }
                Trigger::State(expr) => {
                    for (a, atom) in expr.atoms().into_iter().enumerate() {
                        sites.push(SelectorSite {
                            path: format!("rule[{r}].condition[{a}]"),
                            selector: &atom.selector,
                            access: Access::Read,
                        });
                    }
                }
            }
            for (i, s) in rule.body.iter().enumerate() {
                if let Statement::Action { target, .. } = s {
                    sites.push(SelectorSite { path: format!("rule[{r}].body[{i}]"), selector: target, access: Access::Write });
                }
            }
        }
        sites
    }
}
