//! Syntax-directed completion over program drafts.
//!
//! A [`Draft`] is a program under construction stored as chains of token
//! units (see [`crate::language::render`]). Options at an insertion point are
//! the units the parser is prepared to read right after the draft text up to
//! that point, so they are exactly the grammatical continuations under the
//! grammar derived from the live home.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::home::{DeviceId, Registry};
use crate::language::render::{self, RuleChains, TokenSentence};
use crate::language::{continuations, parse, Category, EntryKind, Expected, Grammar, Keyword, Program, SyntaxError, Unit};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleDraft {
    pub trigger: Vec<Unit>,
    pub body: Vec<Vec<Unit>>,
}

/// A partial program. Chains are filled left to right; an empty statement
/// chain stands for a statement slot opened by `,`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Draft {
    pub header: Vec<Unit>,
    pub imperative: Vec<Vec<Unit>>,
    pub rules: Vec<RuleDraft>,
}

/// Where to complete or delete.
///
/// `path` is a chain address (`[0]`, `[1, i]`, `[2, r, 0]`, `[2, r, 1, j]`)
/// with `slot` an index into the chain, or a list address (`[1]`, `[2]`,
/// `[2, r, 1]`) with `slot` the list length, meaning "append a new element".
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InsertionPoint {
    pub path: Vec<usize>,
    pub slot: usize,
}

impl InsertionPoint {
    pub fn new(path: &[usize], slot: usize) -> Self {
        Self { path: path.to_vec(), slot }
    }
}

/// How an option changes the draft.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "edit", rename_all = "snake_case")]
pub enum Edit {
    /// Push the unit onto the chain at `path`.
    Append { path: Vec<usize> },
    /// Insert a new chain holding the unit at `path`.
    NewChain { path: Vec<usize> },
    /// Insert an empty statement chain at `path` (the `,` separator).
    Separate { path: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "choice", rename_all = "snake_case")]
pub enum Choice {
    Unit { unit: Unit },
    /// Free entry; fill it with [`CompletionOption::filled`] before applying.
    Entry { entry: EntryKind, unit: Option<Unit> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionAvailability {
    Available,
    /// Offered, but the action would not change the device's current state.
    StateFilteredOut,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompletionOption {
    pub text: String,
    pub display: String,
    pub category: Category,
    pub choice: Choice,
    pub edit: Edit,
    /// Set on device options only.
    pub availability: Option<OptionAvailability>,
    /// Grammar generation the option was computed under.
    pub generation: u64,
}

impl CompletionOption {
    /// Concrete version of an entry option.
    pub fn filled(&self, text: &str) -> Result<Self, KeyboardError> {
        let Choice::Entry { entry, .. } = &self.choice else {
            return Err(KeyboardError::NotAnEntry(self.text.clone()));
        };
        let unit = entry
            .accept(text.trim())
            .ok_or_else(|| KeyboardError::BadEntry { text: text.to_string(), placeholder: entry.placeholder().into() })?;
        let mut out = self.clone();
        out.text = unit.text();
        out.display = out.text.clone();
        out.choice = Choice::Entry { entry: entry.clone(), unit: Some(unit) };
        Ok(out)
    }

    fn unit(&self) -> Option<&Unit> {
        match &self.choice {
            Choice::Unit { unit } | Choice::Entry { unit: Some(unit), .. } => Some(unit),
            Choice::Entry { unit: None, .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum KeyboardError {
    #[error("invalid insertion point {path:?}/{slot}")]
    InvalidPoint { path: Vec<usize>, slot: usize },
    #[error("option computed under grammar generation {option}, current is {current}")]
    StaleOption { option: u64, current: u64 },
    #[error("{0:?} is not offered at this point")]
    NotOffered(String),
    #[error("{0:?} is not an entry option")]
    NotAnEntry(String),
    #[error("{text:?} does not fit {placeholder}")]
    BadEntry { text: String, placeholder: String },
    #[error("entry option {0} must be filled before applying")]
    Unfilled(String),
}

fn invalid(point: &InsertionPoint) -> KeyboardError {
    KeyboardError::InvalidPoint { path: point.path.clone(), slot: point.slot }
}

fn is_starter(u: &Unit) -> bool {
    matches!(u, Unit::Action { .. } | Unit::Keyword(Keyword::Start | Keyword::Stop | Keyword::Wait))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Site {
    Header,
    Statement(usize),
    Trigger(usize),
    Body(usize, usize),
    ImperativeEnd,
    RulesEnd,
    BodyEnd(usize),
}

impl Draft {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.header.is_empty() && self.imperative.is_empty() && self.rules.is_empty()
    }

    pub fn from_program(program: &Program, g: &Grammar) -> Self {
        Draft {
            header: render::header_units(program),
            imperative: program.imperative.iter().map(|s| render::statement_units(s, g)).collect(),
            rules: program
                .rules
                .iter()
                .map(|r| {
                    let (trigger, body) = render::rule_chains(r, g);
                    RuleDraft { trigger, body }
                })
                .collect(),
        }
    }

    /// Splits a unit sequence (as produced by the parser or renderer) into
    /// chains.
    pub fn from_units(units: impl IntoIterator<Item = Unit>) -> Self {
        let mut d = Draft::default();
        for u in units {
            if d.header.len() < 2 && d.imperative.is_empty() && d.rules.is_empty() {
                d.header.push(u);
                continue;
            }
            match u {
                Unit::Keyword(Keyword::Colon) => {}
                Unit::Keyword(Keyword::Comma) => d.current_list().push(Vec::new()),
                Unit::Keyword(Keyword::EachTime | Keyword::If) => d.rules.push(RuleDraft { trigger: vec![u], body: Vec::new() }),
                u if is_starter(&u) => {
                    let list = d.current_list();
                    match list.last_mut() {
                        Some(chain) if chain.is_empty() => chain.push(u),
                        _ => list.push(vec![u]),
                    }
                }
                u => match d.rules.last_mut() {
                    Some(r) => match r.body.last_mut() {
                        Some(chain) => chain.push(u),
                        None => r.trigger.push(u),
                    },
                    None => match d.imperative.last_mut() {
                        Some(chain) => chain.push(u),
                        None => d.header.push(u),
                    },
                },
            }
        }
        d
    }

    fn current_list(&mut self) -> &mut Vec<Vec<Unit>> {
        match self.rules.last_mut() {
            Some(r) => &mut r.body,
            None => &mut self.imperative,
        }
    }

    fn rule_chains(&self) -> Vec<RuleChains> {
        self.rules.iter().map(|r| (r.trigger.clone(), r.body.clone())).collect()
    }

    pub fn sentence(&self, g: &Grammar) -> TokenSentence {
        render::sentence(&self.header, &self.imperative, &self.rule_chains(), g)
    }

    pub fn text(&self, g: &Grammar) -> String {
        self.sentence(g).text()
    }

    /// Number of tokens, separators included.
    pub fn token_count(&self) -> usize {
        let list = |l: &[Vec<Unit>]| l.iter().map(Vec::len).sum::<usize>() + l.len().saturating_sub(1);
        self.header.len()
            + list(&self.imperative)
            + self.rules.iter().map(|r| r.trigger.len() + list(&r.body)).sum::<usize>()
    }

    /// Parses the draft as a finished program.
    pub fn to_program(&self, g: &Grammar) -> Result<Program, SyntaxError> {
        parse(&self.text(g), g)
    }

    /// End of the last chain: where structural continuations are offered.
    pub fn frontier(&self) -> InsertionPoint {
        if let Some((r, rule)) = self.rules.iter().enumerate().last() {
            return match rule.body.last() {
                Some(chain) => InsertionPoint::new(&[2, r, 1, rule.body.len() - 1], chain.len()),
                None => InsertionPoint::new(&[2, r, 0], rule.trigger.len()),
            };
        }
        match self.imperative.last() {
            Some(chain) => InsertionPoint::new(&[1, self.imperative.len() - 1], chain.len()),
            None => InsertionPoint::new(&[0], self.header.len()),
        }
    }

    pub fn chain(&self, path: &[usize]) -> Option<&Vec<Unit>> {
        match *path {
            [0] => Some(&self.header),
            [1, i] => self.imperative.get(i),
            [2, r, 0] => self.rules.get(r).map(|r| &r.trigger),
            [2, r, 1, j] => self.rules.get(r)?.body.get(j),
            _ => None,
        }
    }

    fn chain_mut(&mut self, path: &[usize]) -> Option<&mut Vec<Unit>> {
        match *path {
            [0] => Some(&mut self.header),
            [1, i] => self.imperative.get_mut(i),
            [2, r, 0] => self.rules.get_mut(r).map(|r| &mut r.trigger),
            [2, r, 1, j] => self.rules.get_mut(r)?.body.get_mut(j),
            _ => None,
        }
    }

    fn site(&self, point: &InsertionPoint) -> Option<Site> {
        let site = match *point.path {
            [0] => Site::Header,
            [1, i] => Site::Statement(i),
            [2, r, 0] => Site::Trigger(r),
            [2, r, 1, j] => Site::Body(r, j),
            [1] if point.slot == self.imperative.len() => Site::ImperativeEnd,
            [2] if point.slot == self.rules.len() => Site::RulesEnd,
            [2, r, 1] if self.rules.get(r)?.body.len() == point.slot => Site::BodyEnd(r),
            _ => return None,
        };
        if let Some(chain) = self.chain(&point.path) {
            if point.slot > chain.len() {
                return None;
            }
        } else if !matches!(site, Site::ImperativeEnd | Site::RulesEnd | Site::BodyEnd(_)) {
            return None;
        }
        if !self.header_complete() && !matches!(site, Site::Header) {
            return None;
        }
        Some(site)
    }

    fn header_complete(&self) -> bool {
        self.header.len() == 2
    }

    /// The draft cut after the chain at `path` (kept whole).
    fn through(&self, path: &[usize]) -> Draft {
        let mut d = Draft { header: self.header.clone(), ..Draft::default() };
        match *path {
            [0] => {}
            [1, i] => d.imperative = self.imperative[..=i].to_vec(),
            [1] => d.imperative = self.imperative.clone(),
            [2, r, 0] | [2, r, 1] | [2, r, 1, _] => {
                d.imperative = self.imperative.clone();
                d.rules = self.rules[..=r].to_vec();
                let body = &mut d.rules[r].body;
                match *path {
                    [2, _, 0] => body.clear(),
                    [2, _, 1, j] => body.truncate(j + 1),
                    _ => {}
                }
            }
            _ => return self.clone(),
        }
        d
    }

    fn chain_complete(&self, path: &[usize], g: &Grammar) -> bool {
        let Some(chain) = self.chain(path) else { return false };
        match path {
            [0] => self.header_complete(),
            [2, _, 0] => chain.last() == Some(&Unit::Keyword(Keyword::Do)),
            _ => {
                !chain.is_empty()
                    && continuations(&self.through(path).text(g), g).contains(&Expected::Unit(Unit::Keyword(Keyword::Comma)))
            }
        }
    }

    fn chain_paths(&self) -> Vec<Vec<usize>> {
        let mut out = vec![vec![0]];
        out.extend((0..self.imperative.len()).map(|i| vec![1, i]));
        for (r, rule) in self.rules.iter().enumerate() {
            out.push(vec![2, r, 0]);
            out.extend((0..rule.body.len()).map(|j| vec![2, r, 1, j]));
        }
        out
    }

    /// End of the leftmost incomplete chain, or the frontier.
    pub fn next_hole(&self, g: &Grammar) -> InsertionPoint {
        if self.is_empty() {
            return self.frontier();
        }
        for path in self.chain_paths() {
            if !self.chain_complete(&path, g) {
                let len = self.chain(&path).map_or(0, Vec::len);
                return InsertionPoint { path, slot: len };
            }
            // a finished trigger whose body lost all its statements
            if let [2, r, 0] = *path {
                if self.rules[r].body.is_empty() && r + 1 < self.rules.len() {
                    return InsertionPoint::new(&[2, r, 1], 0);
                }
            }
        }
        self.frontier()
    }
}

/// Options at `point`, ordered keywords, devices (by display name), kinds,
/// then the remaining categories with values and entries last.
pub fn options(draft: &Draft, point: &InsertionPoint, g: &Grammar, registry: &Registry) -> Result<Vec<CompletionOption>, KeyboardError> {
    let site = draft.site(point).ok_or_else(|| invalid(point))?;
    let frontier = *point == draft.frontier();
    let (context, filter): (Draft, fn(&Unit) -> bool) = match site {
        Site::ImperativeEnd => (draft.through(&[1]), is_starter),
        Site::BodyEnd(r) => (draft.through(&[2, r, 1]), is_starter),
        Site::RulesEnd => (draft.clone(), |u| matches!(u, Unit::Keyword(Keyword::EachTime | Keyword::If))),
        _ => {
            if draft.chain(&point.path).is_some_and(|c| point.slot != c.len()) {
                return Err(invalid(point));
            }
            (draft.through(&point.path), |_| true)
        }
    };
    let mut text = context.text(g);
    let list_end = matches!(site, Site::ImperativeEnd | Site::BodyEnd(_));
    let list_len = match site {
        Site::ImperativeEnd => draft.imperative.len(),
        Site::BodyEnd(r) => draft.rules[r].body.len(),
        _ => 0,
    };
    if list_end && list_len > 0 {
        text.push(',');
    }
    let chain = draft.chain(&point.path);
    let mut out: Vec<CompletionOption> = Vec::new();
    for e in continuations(&text, g) {
        let (choice, unit) = match e {
            Expected::Unit(u) => (Choice::Unit { unit: u.clone() }, Some(u)),
            Expected::Entry(entry) => (Choice::Entry { entry, unit: None }, None),
            Expected::Identifier(_) => continue,
        };
        let edit = match (&unit, site) {
            (Some(u), _) if !filter(u) => continue,
            (_, Site::ImperativeEnd) => Edit::NewChain { path: vec![1, list_len] },
            (_, Site::BodyEnd(r)) => Edit::NewChain { path: vec![2, r, 1, list_len] },
            (_, Site::RulesEnd) => Edit::NewChain { path: vec![2, draft.rules.len(), 0] },
            _ if chain.is_none_or(Vec::is_empty) => Edit::Append { path: point.path.clone() },
            (Some(Unit::Keyword(Keyword::Comma)), _) if frontier => Edit::Separate { path: next_sibling(&point.path) },
            (Some(Unit::Keyword(Keyword::EachTime | Keyword::If)), _) if frontier => {
                Edit::NewChain { path: vec![2, draft.rules.len(), 0] }
            }
            (Some(u), _) if is_starter(u) && frontier => Edit::NewChain { path: first_statement(draft, &point.path) },
            (Some(u), _) if is_structural(u) => continue,
            _ => Edit::Append { path: point.path.clone() },
        };
        out.push(make_option(choice, edit, g, registry, chain.map_or(&[][..], Vec::as_slice)));
    }
    out.sort_by(|a, b| order_key(a).cmp(&order_key(b)));
    out.dedup_by(|a, b| a.text == b.text);
    Ok(out)
}

fn is_structural(u: &Unit) -> bool {
    is_starter(u) || matches!(u, Unit::Keyword(Keyword::Comma | Keyword::EachTime | Keyword::If))
}

fn next_sibling(path: &[usize]) -> Vec<usize> {
    let mut p = path.to_vec();
    *p.last_mut().expect("chain paths are non-empty") += 1;
    p
}

/// Where a statement that follows the chain at `path` directly goes: the
/// first imperative statement after the header, the first body statement
/// after a trigger.
fn first_statement(draft: &Draft, path: &[usize]) -> Vec<usize> {
    match *path {
        [2, r, 0] => vec![2, r, 1, 0],
        [2, r, 1, j] => vec![2, r, 1, j + 1],
        [1, i] => vec![1, i + 1],
        _ => vec![1, draft.imperative.len()],
    }
}

fn make_option(choice: Choice, edit: Edit, g: &Grammar, registry: &Registry, chain: &[Unit]) -> CompletionOption {
    let (text, display, category, availability) = match &choice {
        Choice::Unit { unit } => {
            let text = unit.text();
            match unit {
                Unit::Device(id) => {
                    let display = g.devices.get(id).map_or_else(|| id.to_string(), |t| t.name.clone());
                    let availability = availability(registry, id, chain);
                    (text, display, Category::Device, Some(availability))
                }
                _ => (text.clone(), text, unit.category(), None),
            }
        }
        Choice::Entry { entry, .. } => (entry.placeholder().to_string(), entry.placeholder().to_string(), entry.category(), None),
    };
    CompletionOption { text, display, category, choice, edit, availability, generation: g.generation }
}

/// A device after a parameterless action is tagged when the action would
/// leave its state unchanged and emit nothing.
fn availability(registry: &Registry, id: &DeviceId, chain: &[Unit]) -> OptionAvailability {
    let [Unit::Action { name, .. }] = chain else {
        return OptionAvailability::Available;
    };
    let mut preview = registry.clone();
    match preview.apply_action(id, name, &[], 0) {
        Ok(outcome) if outcome.changes.is_empty() && outcome.events.is_empty() => OptionAvailability::StateFilteredOut,
        _ => OptionAvailability::Available,
    }
}

fn order_key(o: &CompletionOption) -> (u8, String, String) {
    let rank = match o.category {
        Category::Keyword => 0,
        Category::Device => 1,
        Category::Kind => 2,
        Category::Location => 3,
        Category::Property => 4,
        Category::Action => 5,
        Category::Event => 6,
        Category::Variable => 7,
        Category::Program => 8,
        Category::Value => 9,
        Category::Number => 10,
        Category::Name => 11,
    };
    (rank, o.display.to_lowercase(), o.text.clone())
}

/// Applies an option computed for `(draft, point)`. Returns the new draft
/// and its leftmost hole.
pub fn apply_option(
    draft: &Draft,
    point: &InsertionPoint,
    option: &CompletionOption,
    g: &Grammar,
    registry: &Registry,
) -> Result<(Draft, InsertionPoint), KeyboardError> {
    if option.generation != g.generation {
        return Err(KeyboardError::StaleOption { option: option.generation, current: g.generation });
    }
    let unit = option.unit().cloned().ok_or_else(|| KeyboardError::Unfilled(option.text.clone()))?;
    let offered = options(draft, point, g, registry)?;
    let matches = |o: &CompletionOption| {
        o.edit == option.edit
            && match (&o.choice, &option.choice) {
                (Choice::Unit { unit: a }, Choice::Unit { unit: b }) => a == b,
                (Choice::Entry { entry: a, .. }, Choice::Entry { entry: b, .. }) => a == b && a.accept(&unit.text()).as_ref() == Some(&unit),
                _ => false,
            }
    };
    if !offered.iter().any(matches) {
        return Err(KeyboardError::NotOffered(option.text.clone()));
    }
    let mut next = draft.clone();
    match &option.edit {
        Edit::Append { path } => next.chain_mut(path).ok_or_else(|| invalid(point))?.push(unit),
        Edit::NewChain { path } | Edit::Separate { path } => {
            let chain = if matches!(option.edit, Edit::Separate { .. }) { Vec::new() } else { vec![unit] };
            insert_chain(&mut next, path, chain).ok_or_else(|| invalid(point))?;
        }
    }
    let hole = next.next_hole(g);
    Ok((next, hole))
}

fn insert_chain(d: &mut Draft, path: &[usize], chain: Vec<Unit>) -> Option<()> {
    match *path {
        [1, i] if i <= d.imperative.len() => d.imperative.insert(i, chain),
        [2, r, 0] if r <= d.rules.len() => d.rules.insert(r, RuleDraft { trigger: chain, body: Vec::new() }),
        [2, r, 1, j] => {
            let body = &mut d.rules.get_mut(r)?.body;
            if j > body.len() {
                return None;
            }
            body.insert(j, chain);
        }
        _ => return None,
    }
    Some(())
}

/// Removes the unit at `point` and everything after it in its chain. Slot 0
/// removes the whole statement or rule; slot 0 of the header clears the
/// draft. Deleting from an empty draft is a no-op.
pub fn delete_at(draft: &Draft, point: &InsertionPoint, g: &Grammar) -> Result<(Draft, InsertionPoint), KeyboardError> {
    if draft.is_empty() {
        return Ok((draft.clone(), draft.frontier()));
    }
    let chain = draft.chain(&point.path).ok_or_else(|| invalid(point))?;
    if point.slot >= chain.len() && !(point.slot == 0 && chain.is_empty()) {
        return Err(invalid(point));
    }
    let mut next = draft.clone();
    if point.slot > 0 {
        next.chain_mut(&point.path).expect("checked").truncate(point.slot);
        return Ok((next, InsertionPoint::new(&point.path, point.slot)));
    }
    match *point.path {
        [0] => return Ok((Draft::default(), InsertionPoint::new(&[0], 0))),
        [1, i] => remove_statement(&mut next.imperative, i),
        [2, r, 0] => {
            next.rules.remove(r);
        }
        [2, r, 1, j] => remove_statement(&mut next.rules[r].body, j),
        _ => return Err(invalid(point)),
    }
    let hole = next.next_hole(g);
    Ok((next, hole))
}

fn remove_statement(list: &mut Vec<Vec<Unit>>, i: usize) {
    list.remove(i);
    // an empty slot only exists after a separator
    if list.first().is_some_and(Vec::is_empty) {
        list.remove(0);
    }
}
