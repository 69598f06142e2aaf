//! Token units: the smallest pieces the editor inserts and the parser reads.
//!
//! A unit may span several words ("each time", "the blue-lamp",
//! "set color of"). Concatenating unit texts with [`join`] yields the
//! canonical source text.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{Comparator, ProgramId};
use crate::home::{DeviceId, Domain, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keyword {
    Program,
    Colon,
    EachTime,
    If,
    Do,
    Start,
    Stop,
    Wait,
    All,
    Any,
    LocatedIn,
    Whose,
    Is,
    IsNot,
    IsBelow,
    IsAtMost,
    IsAbove,
    IsAtLeast,
    To,
    And,
    Or,
    Not,
    LParen,
    RParen,
    Comma,
}

impl Keyword {
    pub fn text(self) -> &'static str {
        match self {
            Keyword::Program => "program",
            Keyword::Colon => ":",
            Keyword::EachTime => "each time",
            Keyword::If => "if",
            Keyword::Do => "do",
            Keyword::Start => "start",
            Keyword::Stop => "stop",
            Keyword::Wait => "wait",
            Keyword::All => "all",
            Keyword::Any => "any",
            Keyword::LocatedIn => "located in",
            Keyword::Whose => "whose",
            Keyword::Is => "is",
            Keyword::IsNot => "isn't",
            Keyword::IsBelow => "is below",
            Keyword::IsAtMost => "is at most",
            Keyword::IsAbove => "is above",
            Keyword::IsAtLeast => "is at least",
            Keyword::To => "to",
            Keyword::And => "and",
            Keyword::Or => "or",
            Keyword::Not => "not",
            Keyword::LParen => "(",
            Keyword::RParen => ")",
            Keyword::Comma => ",",
        }
    }

    pub fn comparator(cmp: Comparator) -> Keyword {
        match cmp {
            Comparator::Eq => Keyword::Is,
            Comparator::Ne => Keyword::IsNot,
            Comparator::Lt => Keyword::IsBelow,
            Comparator::Le => Keyword::IsAtMost,
            Comparator::Gt => Keyword::IsAbove,
            Comparator::Ge => Keyword::IsAtLeast,
        }
    }

    pub fn as_comparator(self) -> Option<Comparator> {
        Comparator::ALL.into_iter().find(|c| Keyword::comparator(*c) == self)
    }
}

/// One token unit with its semantic payload.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "unit", content = "value", rename_all = "snake_case")]
pub enum Unit {
    Keyword(Keyword),
    /// Program name in the header.
    Name(ProgramId),
    Device(DeviceId),
    Kind(String),
    Location(String),
    Property(String),
    PropertyValue(String),
    Action { name: String, phrase: String },
    Event { name: String, phrase: String },
    Variable(String),
    Literal(Value),
    Duration(u64),
    Program(ProgramId),
}

impl Unit {
    pub fn kw(k: Keyword) -> Self {
        Unit::Keyword(k)
    }

    pub fn text(&self) -> String {
        match self {
            Unit::Keyword(k) => k.text().to_string(),
            Unit::Name(p) | Unit::Program(p) => p.0.clone(),
            Unit::Device(d) => format!("the {d}"),
            Unit::Kind(s) | Unit::Location(s) | Unit::Property(s) | Unit::PropertyValue(s) | Unit::Variable(s) => s.clone(),
            Unit::Action { phrase, .. } | Unit::Event { phrase, .. } => phrase.clone(),
            Unit::Literal(v) => v.to_string(),
            Unit::Duration(ms) => ms.to_string(),
        }
    }

    pub fn category(&self) -> Category {
        match self {
            Unit::Keyword(_) => Category::Keyword,
            Unit::Name(_) => Category::Name,
            Unit::Device(_) => Category::Device,
            Unit::Kind(_) => Category::Kind,
            Unit::Location(_) => Category::Location,
            Unit::Property(_) => Category::Property,
            Unit::PropertyValue(_) => Category::Value,
            Unit::Action { .. } => Category::Action,
            Unit::Event { .. } => Category::Event,
            Unit::Variable(_) => Category::Variable,
            Unit::Literal(Value::Bool(_) | Value::Sym(_)) => Category::Value,
            Unit::Literal(Value::Int(_) | Value::Time(_)) | Unit::Duration(_) => Category::Number,
            Unit::Program(_) => Category::Program,
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Keyword,
    Name,
    Device,
    Kind,
    Location,
    Property,
    Action,
    Event,
    Variable,
    Value,
    Number,
    Program,
}

/// A slot filled by free entry rather than by picking from a list.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum EntryKind {
    /// A fresh program name.
    Name,
    /// Simulated milliseconds for `wait`.
    Duration,
    /// A literal of a non-enumerable domain.
    Literal { domain: Domain },
}

impl EntryKind {
    /// Placeholder text shown in palettes.
    pub fn placeholder(&self) -> &'static str {
        match self {
            EntryKind::Name => "<name>",
            EntryKind::Duration => "<duration>",
            EntryKind::Literal { domain: Domain::Time } => "<time>",
            EntryKind::Literal { .. } => "<number>",
        }
    }

    pub fn category(&self) -> Category {
        match self {
            EntryKind::Name => Category::Name,
            _ => Category::Number,
        }
    }

    /// Turns entered text into the unit it denotes, if acceptable.
    pub fn accept(&self, text: &str) -> Option<Unit> {
        match self {
            EntryKind::Name => crate::lexicon::is_identifier(text).then(|| Unit::Name(ProgramId::new(text))),
            EntryKind::Duration => {
                if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
                    return None;
                }
                text.parse().ok().map(Unit::Duration)
            }
            EntryKind::Literal { domain } => domain.parse_literal(text).map(Unit::Literal),
        }
    }
}

/// What the parser was prepared to accept at a failure point.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expected {
    Unit(Unit),
    Entry(EntryKind),
    /// Any identifier in the given role (permissive grammars only).
    Identifier(Category),
}

impl fmt::Display for Expected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expected::Unit(u) => write!(f, "{:?}", u.text()),
            Expected::Entry(e) => f.write_str(e.placeholder()),
            Expected::Identifier(c) => write!(f, "<{c:?} identifier>"),
        }
    }
}

/// Joins unit texts into source text: no space before `,`, `)` and `:`, none
/// after `(`.
pub fn join<'a>(texts: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    let mut glue = false;
    for t in texts {
        let tight = matches!(t, "," | ")" | ":");
        if !out.is_empty() && !tight && !glue {
            out.push(' ');
        }
        out.push_str(t);
        glue = t == "(";
    }
    out
}
