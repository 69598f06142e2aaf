//! Typed values and the domains they live in.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Minutes since midnight, `0..1440`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeOfDay(u16);

pub const MINUTES_PER_DAY: u16 = 24 * 60;

impl TimeOfDay {
    pub fn from_minutes(minutes: u16) -> Option<Self> {
        (minutes < MINUTES_PER_DAY).then_some(Self(minutes))
    }

    pub fn hm(hours: u16, minutes: u16) -> Option<Self> {
        if hours < 24 && minutes < 60 {
            Some(Self(hours * 60 + minutes))
        } else {
            None
        }
    }

    pub fn minutes(self) -> u16 {
        self.0
    }

    /// Offset of this time of day in simulated milliseconds.
    pub fn as_millis(self) -> u64 {
        u64::from(self.0) * 60_000
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.0 / 60, self.0 % 60)
    }
}

impl FromStr for TimeOfDay {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (h, m) = s.split_once(':').ok_or(())?;
        if h.is_empty() || h.len() > 2 || m.len() != 2 {
            return Err(());
        }
        if !h.bytes().chain(m.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(());
        }
        let h: u16 = h.parse().map_err(|_| ())?;
        let m: u16 = m.parse().map_err(|_| ())?;
        TimeOfDay::hm(h, m).ok_or(())
    }
}

impl Serialize for TimeOfDay {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TimeOfDay {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse()
            .map_err(|_| serde::de::Error::custom(format!("invalid time of day {s:?}")))
    }
}

/// A typed device value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Bool(bool),
    Int(i64),
    /// A symbol of an enumerated domain.
    Sym(String),
    Time(TimeOfDay),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Sym(s) => f.write_str(s),
            Value::Time(t) => write!(f, "{t}"),
        }
    }
}

impl Value {
    /// Plain JSON form used in payloads and state dumps.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Bool(b) => serde_json::Value::Bool(*b),
            Value::Int(i) => serde_json::Value::from(*i),
            Value::Sym(s) => serde_json::Value::String(s.clone()),
            Value::Time(t) => serde_json::Value::String(t.to_string()),
        }
    }
}

/// The set of values a state variable, parameter or payload field may take.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    Bool,
    Int { min: i64, max: i64 },
    Percent,
    Enum { values: Vec<String> },
    Time,
}

impl Domain {
    pub fn contains(&self, value: &Value) -> bool {
        match (self, value) {
            (Domain::Bool, Value::Bool(_)) => true,
            (Domain::Int { min, max }, Value::Int(i)) => min <= i && i <= max,
            (Domain::Percent, Value::Int(i)) => (0..=100).contains(i),
            (Domain::Enum { values }, Value::Sym(s)) => values.iter().any(|v| v == s),
            (Domain::Time, Value::Time(_)) => true,
            _ => false,
        }
    }

    /// Whether `<`, `<=`, `>` and `>=` make sense over this domain.
    pub fn is_ordered(&self) -> bool {
        matches!(self, Domain::Int { .. } | Domain::Percent | Domain::Time)
    }

    /// Value used when an initial state omits a variable.
    pub fn default_value(&self) -> Value {
        match self {
            Domain::Bool => Value::Bool(false),
            Domain::Int { min, max } => Value::Int((*min).max(0).min(*max)),
            Domain::Percent => Value::Int(0),
            Domain::Enum { values } => Value::Sym(values.first().cloned().unwrap_or_default()),
            Domain::Time => Value::Time(TimeOfDay(0)),
        }
    }

    /// Parses a literal word of the concrete syntax into a value of this domain.
    pub fn parse_literal(&self, word: &str) -> Option<Value> {
        let value = match self {
            Domain::Bool => match word {
                "true" => Value::Bool(true),
                "false" => Value::Bool(false),
                _ => return None,
            },
            Domain::Int { .. } | Domain::Percent => Value::Int(parse_int(word)?),
            Domain::Enum { .. } => Value::Sym(word.to_string()),
            Domain::Time => Value::Time(word.parse().ok()?),
        };
        self.contains(&value).then_some(value)
    }

    /// Converts a JSON payload value, checking membership.
    pub fn value_from_json(&self, json: &serde_json::Value) -> Option<Value> {
        let value = match (self, json) {
            (Domain::Bool, serde_json::Value::Bool(b)) => Value::Bool(*b),
            (Domain::Int { .. } | Domain::Percent, serde_json::Value::Number(n)) => {
                Value::Int(n.as_i64()?)
            }
            (Domain::Enum { .. }, serde_json::Value::String(s)) => Value::Sym(s.clone()),
            (Domain::Time, serde_json::Value::String(s)) => Value::Time(s.parse().ok()?),
            _ => return None,
        };
        self.contains(&value).then_some(value)
    }

    /// Finite enumeration of the domain, if it is small enough to list in a palette.
    pub fn enumerate(&self) -> Option<Vec<Value>> {
        match self {
            Domain::Bool => Some(vec![Value::Bool(false), Value::Bool(true)]),
            Domain::Enum { values } => Some(values.iter().cloned().map(Value::Sym).collect()),
            _ => None,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Bool => f.write_str("boolean"),
            Domain::Int { min, max } => write!(f, "integer {min}..{max}"),
            Domain::Percent => f.write_str("percent 0..100"),
            Domain::Enum { values } => write!(f, "one of {}", values.join("|")),
            Domain::Time => f.write_str("time of day"),
        }
    }
}

fn parse_int(word: &str) -> Option<i64> {
    let digits = word.strip_prefix('-').unwrap_or(word);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    word.parse().ok()
}
