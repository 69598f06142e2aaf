//! The home timeline: an append-only log of trace entries, one JSON object
//! per line, with an in-memory index rebuilt on open.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::home::SimTime;
use crate::language::ProgramId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceCategory {
    DeviceEvent,
    StateChange,
    Action,
    /// A start, stop or wait statement executed by a program.
    Statement,
    DegradedSkip,
    RuleFired,
    ProgramLifecycle,
    RegistryChange,
    Denial,
    /// Scenario annotation.
    Marker,
    /// A chain of rule firings was cut short.
    CascadeLimit,
}

impl TraceCategory {
    pub const ALL: [TraceCategory; 11] = [
        TraceCategory::DeviceEvent,
        TraceCategory::StateChange,
        TraceCategory::Action,
        TraceCategory::Statement,
        TraceCategory::DegradedSkip,
        TraceCategory::RuleFired,
        TraceCategory::ProgramLifecycle,
        TraceCategory::RegistryChange,
        TraceCategory::Denial,
        TraceCategory::Marker,
        TraceCategory::CascadeLimit,
    ];
}

/// Who caused an entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "by", content = "id", rename_all = "snake_case")]
pub enum Cause {
    Dashboard,
    Program(ProgramId),
    Scenario,
    Clock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub seq: u64,
    pub at: SimTime,
    /// Wall-clock stamp in accelerated and realtime modes. Not part of the
    /// content hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
    pub category: TraceCategory,
    pub subject: String,
    pub details: serde_json::Value,
    pub cause: Cause,
}

/// An entry before it is given a sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct NewEntry {
    pub at: SimTime,
    pub category: TraceCategory,
    pub subject: String,
    pub details: serde_json::Value,
    pub cause: Cause,
}

impl NewEntry {
    pub fn new(at: SimTime, category: TraceCategory, subject: impl Into<String>, cause: Cause) -> Self {
        Self { at, category, subject: subject.into(), details: serde_json::Value::Object(Default::default()), cause }
    }

    pub fn details(mut self, details: serde_json::Value) -> Self {
        self.details = details;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimelineQuery {
    /// Inclusive lower bound on `at`.
    pub from: Option<SimTime>,
    /// Exclusive upper bound on `at`.
    pub to: Option<SimTime>,
    pub subject: Option<String>,
    /// Empty means every category.
    pub categories: BTreeSet<TraceCategory>,
    pub limit: Option<usize>,
    /// Opaque continuation returned by a previous page.
    pub cursor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Page {
    pub entries: Vec<TraceEntry>,
    pub next_cursor: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RedactionPolicy {
    pub suppress: BTreeSet<TraceCategory>,
    /// Timestamps are rounded down to multiples of this; 0 leaves them alone.
    pub bucket_ms: u64,
    /// Subjects never suppressed. Coarsening still applies to them so the
    /// view stays ordered in time.
    pub exempt: BTreeSet<String>,
}

impl RedactionPolicy {
    pub fn apply(&self, entry: &TraceEntry) -> Option<TraceEntry> {
        if self.suppress.contains(&entry.category) && !self.exempt.contains(&entry.subject) {
            return None;
        }
        let mut e = entry.clone();
        if self.bucket_ms > 0 {
            e.at -= e.at % self.bucket_ms;
            e.wall_ms = None;
        }
        Some(e)
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("entry at {at} ms is earlier than the last entry at {last} ms")]
    TimeRegression { at: SimTime, last: SimTime },
    #[error("range starts at {from} ms after it ends at {to} ms")]
    BadRange { from: SimTime, to: SimTime },
    #[error("page limit must be positive")]
    ZeroLimit,
    #[error("malformed cursor {0:?}")]
    BadCursor(String),
    #[error("trace log line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// The timeline. Entries live in memory; a file-backed log also appends each
/// entry as one line before acknowledging it.
#[derive(Debug)]
pub struct TraceLog {
    entries: Vec<TraceEntry>,
    file: Option<(PathBuf, File)>,
}

impl TraceLog {
    pub fn in_memory() -> Self {
        Self { entries: Vec::new(), file: None }
    }

    /// Opens or creates a log. A trailing partial line left by a crash is
    /// dropped; any other unreadable line is an error.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut entries: Vec<TraceEntry> = Vec::new();
        let mut good_len = 0u64;
        let mut reader = BufReader::new(&file);
        let mut line = String::new();
        let mut number = 0;
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 {
                break;
            }
            number += 1;
            if !line.ends_with('\n') {
                break;
            }
            let e: TraceEntry = serde_json::from_str(line.trim_end())
                .map_err(|err| TraceError::Corrupt { line: number, message: err.to_string() })?;
            if let Some(prev) = entries.last() {
                if e.seq <= prev.seq || e.at < prev.at {
                    return Err(TraceError::Corrupt { line: number, message: "entries out of order".into() });
                }
            }
            entries.push(e);
            good_len += n as u64;
        }
        drop(reader);
        if file.metadata()?.len() != good_len {
            file.set_len(good_len)?;
            file.seek(SeekFrom::End(0))?;
        }
        Ok(Self { entries, file: Some((path, file)) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn last_seq(&self) -> u64 {
        self.entries.last().map_or(0, |e| e.seq)
    }

    pub fn last_at(&self) -> SimTime {
        self.entries.last().map_or(0, |e| e.at)
    }

    /// Entries with a sequence number above `seq`.
    pub fn since(&self, seq: u64) -> &[TraceEntry] {
        let i = self.entries.partition_point(|e| e.seq <= seq);
        &self.entries[i..]
    }

    pub fn record(&mut self, entry: NewEntry, wall_ms: Option<u64>) -> Result<&TraceEntry, TraceError> {
        let last = self.last_at();
        if entry.at < last {
            return Err(TraceError::TimeRegression { at: entry.at, last });
        }
        let e = TraceEntry {
            seq: self.last_seq() + 1,
            at: entry.at,
            wall_ms,
            category: entry.category,
            subject: entry.subject,
            details: entry.details,
            cause: entry.cause,
        };
        if let Some((_, file)) = &mut self.file {
            let mut line = serde_json::to_string(&e).expect("trace entries serialize");
            line.push('\n');
            // one write per line keeps appends line-atomic
            file.write_all(line.as_bytes())?;
        }
        self.entries.push(e);
        Ok(self.entries.last().expect("just pushed"))
    }

    pub fn query(&self, q: &TimelineQuery) -> Result<Page, TraceError> {
        self.scan(q, |e| Some(e.clone()))
    }

    /// A query over the redacted view. Filters apply to the original entries.
    pub fn redacted(&self, q: &TimelineQuery, policy: &RedactionPolicy) -> Result<Page, TraceError> {
        self.scan(q, |e| policy.apply(e))
    }

    fn scan(&self, q: &TimelineQuery, mut view: impl FnMut(&TraceEntry) -> Option<TraceEntry>) -> Result<Page, TraceError> {
        if let (Some(from), Some(to)) = (q.from, q.to) {
            if from > to {
                return Err(TraceError::BadRange { from, to });
            }
        }
        let after = match &q.cursor {
            Some(c) => parse_cursor(c)?,
            None => 0,
        };
        let start = self.entries.partition_point(|e| e.at < q.from.unwrap_or(0));
        let start = start.max(self.entries.partition_point(|e| e.seq <= after));
        let limit = q.limit.unwrap_or(usize::MAX);
        if limit == 0 {
            return Err(TraceError::ZeroLimit);
        }
        let mut entries = Vec::new();
        let mut next_cursor = None;
        for e in &self.entries[start..] {
            if q.to.is_some_and(|to| e.at >= to) {
                break;
            }
            if q.subject.as_ref().is_some_and(|s| *s != e.subject) {
                continue;
            }
            if !q.categories.is_empty() && !q.categories.contains(&e.category) {
                continue;
            }
            let Some(shown) = view(e) else { continue };
            if entries.len() == limit {
                next_cursor = Some(cursor_after(entries.last().map_or(after, |l: &TraceEntry| l.seq)));
                break;
            }
            entries.push(shown);
        }
        Ok(Page { entries, next_cursor })
    }

    pub fn content_hash(&self) -> String {
        content_hash(&self.entries)
    }
}

fn cursor_after(seq: u64) -> String {
    format!("after:{seq}")
}

fn parse_cursor(c: &str) -> Result<u64, TraceError> {
    c.strip_prefix("after:").and_then(|s| s.parse().ok()).ok_or_else(|| TraceError::BadCursor(c.to_string()))
}

/// SHA-256 over the entries with wall-clock stamps removed, hex encoded.
pub fn content_hash(entries: &[TraceEntry]) -> String {
    let mut h = Sha256::new();
    for e in entries {
        let mut e = e.clone();
        e.wall_ms = None;
        h.update(serde_json::to_vec(&e).expect("trace entries serialize"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}
