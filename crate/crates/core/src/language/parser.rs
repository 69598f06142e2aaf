//! Recursive-descent parser over words.
//!
//! The parser is grammar directed: at every slot it knows which token units
//! may appear (devices of a kind supporting the chosen action, variables of
//! the selected kind, literals of the variable's domain, ...) and records them.
//! Failures report the farthest position reached together with everything
//! that was acceptable there, so a text is a viable prefix exactly when it
//! parses or fails at its end.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use super::ast::{Atom, Comparator, Program, ProgramId, Quantifier, Rule, Selector, StateExpr, Statement, Trigger};
use super::grammar::Grammar;
use super::lexer::{words, Word};
use super::unit::{Category, EntryKind, Expected, Keyword, Unit};
use crate::home::{DeviceId, DeviceKind, Domain, Value, LOCATION_PROPERTY};
use crate::lexicon::is_identifier;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub struct SyntaxError {
    /// Byte offset of the offending word, or the text length at end of text.
    pub position: usize,
    pub expected: Vec<Expected>,
    pub found: Option<String>,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at byte {}: expected ", self.position)?;
        const SHOWN: usize = 12;
        for (i, e) in self.expected.iter().take(SHOWN).enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{e}")?;
        }
        if self.expected.len() > SHOWN {
            write!(f, " and {} more", self.expected.len() - SHOWN)?;
        }
        match &self.found {
            Some(w) => write!(f, ", found {w:?}"),
            None => f.write_str(", found end of text"),
        }
    }
}

pub fn parse(text: &str, grammar: &Grammar) -> Result<Program, SyntaxError> {
    parse_units(text, grammar).map(|(p, _)| p)
}

/// Parses and also returns the token units consumed, in order.
pub fn parse_units(text: &str, grammar: &Grammar) -> Result<(Program, Vec<Unit>), SyntaxError> {
    let mut p = Parser::new(text, grammar);
    match p.program() {
        Ok(program) => Ok((program, p.units)),
        Err(Stop) => Err(p.error(text.len())),
    }
}

/// Whether `text` can still be completed into a program.
pub fn is_viable_prefix(text: &str, grammar: &Grammar) -> bool {
    match parse(text, grammar) {
        Ok(_) => true,
        Err(e) => e.position == text.len(),
    }
}

/// Units that may start right after `text`. Empty when `text` does not end
/// on a unit boundary of some program prefix.
pub fn continuations(text: &str, grammar: &Grammar) -> Vec<Expected> {
    let mut p = Parser::new(text, grammar);
    let _ = p.program();
    p.fresh.into_iter().collect()
}

/// Whether `text` is a program or a prefix of one that ends between units.
///
/// Unlike [`is_viable_prefix`], `... the lamp1 is` is rejected when only a
/// longer phrase such as `is turned on` could follow the device.
pub fn is_unit_prefix(text: &str, grammar: &Grammar) -> bool {
    let mut p = Parser::new(text, grammar);
    p.program().is_ok() || !p.fresh.is_empty()
}

struct Stop;

fn has_events(k: &DeviceKind) -> bool {
    !k.events.is_empty()
}

fn has_variables(k: &DeviceKind) -> bool {
    !k.variables.is_empty()
}

type P<T> = Result<T, Stop>;

enum Match {
    Full(usize),
    /// The input ended inside the phrase.
    Eof,
    No,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Statement,
    Trigger,
    Atom,
}

struct Parser<'g, 't> {
    g: &'g Grammar,
    words: Vec<Word<'t>>,
    pos: usize,
    far: usize,
    expected: BTreeSet<Expected>,
    /// Units that could start exactly at the end of the input.
    fresh: BTreeSet<Expected>,
    units: Vec<Unit>,
}

impl<'g, 't> Parser<'g, 't> {
    fn new(text: &'t str, g: &'g Grammar) -> Self {
        Parser { g, words: words(text), pos: 0, far: 0, expected: BTreeSet::new(), fresh: BTreeSet::new(), units: Vec::new() }
    }

    fn error(&self, text_len: usize) -> SyntaxError {
        let (position, found) = match self.words.get(self.far) {
            Some(w) => (w.start, Some(w.text.to_string())),
            None => (text_len, None),
        };
        SyntaxError { position, expected: self.expected.iter().cloned().collect(), found }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.words.len()
    }

    /// Records `e` as acceptable at word `at`. `start` is false when `e`
    /// began earlier and only its tail was cut off by the end of input.
    fn note(&mut self, at: usize, e: Expected, start: bool) {
        if start && at == self.words.len() {
            self.fresh.insert(e.clone());
        }
        if at > self.far {
            self.far = at;
            self.expected.clear();
        }
        if at == self.far {
            self.expected.insert(e);
        }
    }

    fn match_text(&self, text: &str) -> Match {
        let mut n = 0;
        for w in text.split(' ') {
            match self.words.get(self.pos + n) {
                None => return Match::Eof,
                Some(word) if word.text == w => n += 1,
                Some(_) => return Match::No,
            }
        }
        Match::Full(n)
    }

    /// Consumes the longest candidate present at the current position.
    fn choose(&mut self, candidates: impl IntoIterator<Item = Unit>) -> Option<Unit> {
        let mut best: Option<(usize, Unit)> = None;
        for u in candidates {
            match self.match_text(&u.text()) {
                Match::Full(n) => {
                    if best.as_ref().is_none_or(|(m, _)| n > *m) {
                        best = Some((n, u.clone()));
                    }
                }
                Match::Eof if !self.at_end() => self.note(self.words.len(), Expected::Unit(u.clone()), false),
                Match::Eof | Match::No => {}
            }
            self.note(self.pos, Expected::Unit(u), true);
        }
        let (n, u) = best?;
        self.pos += n;
        self.units.push(u.clone());
        Some(u)
    }

    fn keyword(&mut self, k: Keyword) -> bool {
        self.choose([Unit::Keyword(k)]).is_some()
    }

    fn require(&mut self, k: Keyword) -> P<()> {
        if self.keyword(k) {
            Ok(())
        } else {
            Err(Stop)
        }
    }

    fn entry(&mut self, kind: EntryKind) -> Option<Unit> {
        self.note(self.pos, Expected::Entry(kind.clone()), true);
        let unit = kind.accept(self.words.get(self.pos)?.text)?;
        self.pos += 1;
        self.units.push(unit.clone());
        Some(unit)
    }

    /// Any identifier, for the slots an open grammar leaves unconstrained.
    fn identifier(&mut self, category: Category) -> Option<String> {
        self.note(self.pos, Expected::Identifier(category), true);
        let w = self.words.get(self.pos)?;
        if !is_identifier(w.text) {
            return None;
        }
        self.pos += 1;
        Some(w.text.to_string())
    }

    fn literal(&mut self, domains: &[Domain]) -> Option<Value> {
        let mut units = BTreeSet::new();
        let mut entries = BTreeSet::new();
        for d in domains {
            match d.enumerate() {
                Some(values) => units.extend(values.into_iter().map(Unit::Literal)),
                None => {
                    entries.insert(EntryKind::Literal { domain: d.clone() });
                }
            }
        }
        if let Some(Unit::Literal(v)) = self.choose(units) {
            return Some(v);
        }
        for e in entries {
            if let Some(Unit::Literal(v)) = self.entry(e) {
                return Some(v);
            }
        }
        None
    }

    fn program(&mut self) -> P<Program> {
        self.require(Keyword::Program)?;
        let Some(Unit::Name(id)) = self.entry(EntryKind::Name) else {
            return Err(Stop);
        };
        self.require(Keyword::Colon)?;
        let mut imperative = Vec::new();
        if let Some(s) = self.statement_opt()? {
            imperative.push(s);
            self.more_statements(&mut imperative)?;
        }
        let mut rules = Vec::new();
        while let Some(r) = self.rule_opt()? {
            rules.push(r);
        }
        if (imperative.is_empty() && rules.is_empty()) || !self.at_end() {
            return Err(Stop);
        }
        Ok(Program { id, imperative, rules })
    }

    fn more_statements(&mut self, out: &mut Vec<Statement>) -> P<()> {
        while self.keyword(Keyword::Comma) {
            match self.statement_opt()? {
                Some(s) => out.push(s),
                None => return Err(Stop),
            }
        }
        Ok(())
    }

    fn statement_opt(&mut self) -> P<Option<Statement>> {
        let g = self.g;
        let mut candidates = g.action_units();
        if g.open || !g.programs.is_empty() {
            candidates.extend([Keyword::Start, Keyword::Stop].map(Unit::Keyword));
        }
        candidates.push(Unit::Keyword(Keyword::Wait));
        let Some(unit) = self.choose(candidates) else {
            return Ok(None);
        };
        let statement = match unit {
            Unit::Keyword(Keyword::Start) => Statement::Start(self.program_ref()?),
            Unit::Keyword(Keyword::Stop) => Statement::Stop(self.program_ref()?),
            Unit::Keyword(Keyword::Wait) => match self.entry(EntryKind::Duration) {
                Some(Unit::Duration(ms)) => Statement::Wait(ms),
                _ => return Err(Stop),
            },
            Unit::Action { name, .. } => {
                let (target, _, kinds) = self.selector(Mode::Statement, &|k| k.actions.contains_key(&name))?;
                let domains: Vec<Domain> = kinds
                    .iter()
                    .filter_map(|k| k.action(&name)?.params.first())
                    .map(|p| p.domain.clone())
                    .collect();
                let mut args = Vec::new();
                if !domains.is_empty() {
                    let required = domains.len() == kinds.len();
                    if self.keyword(Keyword::To) {
                        args.push(self.literal(&domains).ok_or(Stop)?);
                    } else if required {
                        return Err(Stop);
                    }
                }
                Statement::Action { target, action: name, args }
            }
            _ => unreachable!("only statement starters are candidates"),
        };
        Ok(Some(statement))
    }

    fn program_ref(&mut self) -> P<ProgramId> {
        let g = self.g;
        if let Some(Unit::Program(p)) = self.choose(g.programs.iter().cloned().map(Unit::Program)) {
            return Ok(p);
        }
        if g.open {
            if let Some(id) = self.identifier(Category::Program) {
                let p = ProgramId::new(id);
                self.units.push(Unit::Program(p.clone()));
                return Ok(p);
            }
        }
        Err(Stop)
    }

    fn selector(&mut self, mode: Mode, accept: &dyn Fn(&DeviceKind) -> bool) -> P<(Selector, Quantifier, Vec<&'g DeviceKind>)> {
        let g = self.g;
        let mut candidates: Vec<Unit> = g
            .devices
            .iter()
            .filter(|(_, t)| g.kind(&t.kind).is_some_and(accept))
            .map(|(id, _)| Unit::Device(id.clone()))
            .collect();
        if g.kinds.values().any(accept) {
            candidates.push(Unit::Keyword(Keyword::All));
            if mode == Mode::Atom {
                candidates.push(Unit::Keyword(Keyword::Any));
            }
        }
        let quantifier = match self.choose(candidates) {
            Some(Unit::Device(id)) => {
                let kind = g.device_kind(&id).expect("grammar devices have grammar kinds");
                return Ok((Selector::ById(id), Quantifier::All, vec![kind]));
            }
            Some(Unit::Keyword(Keyword::All)) => Quantifier::All,
            Some(Unit::Keyword(Keyword::Any)) => Quantifier::Any,
            Some(_) => unreachable!("only selector starters are candidates"),
            None if g.open => return self.open_device(accept),
            None => return Err(Stop),
        };
        let kinds = g.kinds.values().filter(|k| accept(k)).map(|k| Unit::Kind(k.name.clone()));
        let Some(Unit::Kind(kind)) = self.choose(kinds) else {
            return Err(Stop);
        };
        let kinds = vec![g.kind(&kind).expect("chosen from grammar")];
        let mut scopes = Vec::new();
        if g.open || !g.locations.is_empty() {
            scopes.push(Unit::Keyword(Keyword::LocatedIn));
        }
        if g.open || !g.properties.is_empty() {
            scopes.push(Unit::Keyword(Keyword::Whose));
        }
        let selector = match self.choose(scopes) {
            None => Selector::AllOfKind(kind),
            Some(Unit::Keyword(Keyword::LocatedIn)) => {
                let value = self.open_or_closed(
                    g.locations.iter().cloned().map(Unit::Location).collect(),
                    Category::Location,
                    Unit::Location,
                )?;
                Selector::Filtered { kind, property: LOCATION_PROPERTY.to_string(), value }
            }
            Some(_) => {
                let property = self.open_or_closed(
                    g.properties.keys().cloned().map(Unit::Property).collect(),
                    Category::Property,
                    Unit::Property,
                )?;
                self.require(Keyword::Is)?;
                let values = g.properties.get(&property).into_iter().flatten().cloned().map(Unit::PropertyValue).collect();
                let value = self.open_or_closed(values, Category::Value, Unit::PropertyValue)?;
                Selector::Filtered { kind, property, value }
            }
        };
        Ok((selector, quantifier, kinds))
    }

    /// `the <identifier>` in an open grammar; the device's kind is unknown so
    /// every accepted kind stays possible.
    fn open_device(&mut self, accept: &dyn Fn(&DeviceKind) -> bool) -> P<(Selector, Quantifier, Vec<&'g DeviceKind>)> {
        let g = self.g;
        self.note(self.pos, Expected::Identifier(Category::Device), true);
        let Some(the) = self.words.get(self.pos) else {
            return Err(Stop);
        };
        if the.text != "the" {
            return Err(Stop);
        }
        match self.words.get(self.pos + 1) {
            None => {
                self.note(self.words.len(), Expected::Identifier(Category::Device), false);
                Err(Stop)
            }
            Some(w) if is_identifier(w.text) => {
                let id = DeviceId::new(w.text);
                self.pos += 2;
                self.units.push(Unit::Device(id.clone()));
                let kinds = g.kinds.values().filter(|k| accept(k)).collect();
                Ok((Selector::ById(id), Quantifier::All, kinds))
            }
            Some(_) => Err(Stop),
        }
    }

    fn open_or_closed(&mut self, candidates: Vec<Unit>, category: Category, make: fn(String) -> Unit) -> P<String> {
        if let Some(u) = self.choose(candidates) {
            return Ok(u.text());
        }
        if self.g.open {
            if let Some(id) = self.identifier(category) {
                self.units.push(make(id.clone()));
                return Ok(id);
            }
        }
        Err(Stop)
    }

    fn rule_opt(&mut self) -> P<Option<Rule>> {
        let g = self.g;
        let mut starts = Vec::new();
        if g.kinds.values().any(has_events) {
            starts.push(Unit::Keyword(Keyword::EachTime));
        }
        if g.kinds.values().any(has_variables) {
            starts.push(Unit::Keyword(Keyword::If));
        }
        let Some(start) = self.choose(starts) else {
            return Ok(None);
        };
        let trigger = if start == Unit::Keyword(Keyword::EachTime) {
            self.event_trigger()?
        } else {
            Trigger::State(self.expr()?)
        };
        self.require(Keyword::Do)?;
        let mut body = vec![self.statement_opt()?.ok_or(Stop)?];
        self.more_statements(&mut body)?;
        Ok(Some(Rule { trigger, body }))
    }

    fn event_trigger(&mut self) -> P<Trigger> {
        let (selector, _, kinds) = self.selector(Mode::Trigger, &has_events)?;
        let mut events = BTreeMap::new();
        for k in &kinds {
            for e in k.events.values() {
                events.entry(e.name.clone()).or_insert_with(|| e.phrase.clone());
            }
        }
        let Some(Unit::Event { name, .. }) = self.choose(events.into_iter().map(|(name, phrase)| Unit::Event { name, phrase })) else {
            return Err(Stop);
        };
        let defs: Vec<_> = kinds.iter().filter_map(|k| k.event(&name)).collect();
        let domains: BTreeSet<Domain> = defs.iter().filter_map(|d| d.filter_domain().cloned()).collect();
        let mut filter = None;
        if !domains.is_empty() {
            let required = defs.iter().all(|d| d.filter.as_ref().is_some_and(|f| f.required));
            let domains: Vec<Domain> = domains.into_iter().collect();
            filter = self.literal(&domains);
            if filter.is_none() && required {
                return Err(Stop);
            }
        }
        Ok(Trigger::Event { selector, event: name, filter })
    }

    fn expr(&mut self) -> P<StateExpr> {
        let mut left = self.term()?;
        while self.keyword(Keyword::Or) {
            let right = self.term()?;
            left = StateExpr::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn term(&mut self) -> P<StateExpr> {
        let mut left = self.factor()?;
        while self.keyword(Keyword::And) {
            let right = self.factor()?;
            left = StateExpr::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn factor(&mut self) -> P<StateExpr> {
        if self.keyword(Keyword::Not) {
            return Ok(StateExpr::Not(Box::new(self.factor()?)));
        }
        if self.keyword(Keyword::LParen) {
            let e = self.expr()?;
            self.require(Keyword::RParen)?;
            return Ok(e);
        }
        Ok(StateExpr::Atom(self.atom()?))
    }

    fn atom(&mut self) -> P<Atom> {
        let (selector, quantifier, kinds) = self.selector(Mode::Atom, &has_variables)?;
        let vars: BTreeSet<String> = kinds.iter().flat_map(|k| k.variables.keys().cloned()).collect();
        let Some(Unit::Variable(variable)) = self.choose(vars.into_iter().map(Unit::Variable)) else {
            return Err(Stop);
        };
        let domains: BTreeSet<Domain> = kinds.iter().filter_map(|k| k.variables.get(&variable).cloned()).collect();
        let ordered = domains.iter().any(Domain::is_ordered);
        let comparators = Comparator::ALL
            .into_iter()
            .filter(|c| ordered || !c.is_ordering())
            .map(|c| Unit::Keyword(Keyword::comparator(c)));
        let Some(Unit::Keyword(k)) = self.choose(comparators) else {
            return Err(Stop);
        };
        let comparator = k.as_comparator().expect("comparator keyword");
        let domains: Vec<Domain> = domains.into_iter().filter(|d| !comparator.is_ordering() || d.is_ordered()).collect();
        let literal = self.literal(&domains).ok_or(Stop)?;
        Ok(Atom { selector, quantifier, variable, comparator, literal })
    }
}
