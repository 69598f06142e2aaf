//! Renders programs back into token units.
//!
//! A program is a sequence of chains: the header, one chain per imperative
//! statement, and per rule a trigger chain (ending in `do`) followed by one
//! chain per body statement. The editor works on the same chains, so render
//! and completion agree on what a token is.

use serde::Serialize;

use super::ast::{Atom, Program, Quantifier, Rule, Selector, StateExpr, Statement, Trigger};
use super::grammar::Grammar;
use super::unit::{join, Category, Keyword, Unit};
use crate::home::{Value, LOCATION_PROPERTY};

/// Display text of a device reference that no longer resolves.
pub const UNKNOWN_DISPLAY: &str = "Unknown";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Token {
    pub unit: Unit,
    /// Source text of the unit.
    pub text: String,
    /// What an editor shows; device ids become display names.
    pub display: String,
    pub category: Category,
    /// Chain address: `[0]` header, `[1, i]` statement, `[2, r, 0]` trigger,
    /// `[2, r, 1, j]` rule body statement.
    pub path: Vec<usize>,
    /// Position inside the chain; `None` for separators.
    pub slot: Option<usize>,
    /// The unit names a device absent from the grammar.
    pub unknown: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TokenSentence {
    pub tokens: Vec<Token>,
}

impl TokenSentence {
    /// Canonical source text.
    pub fn text(&self) -> String {
        let mut texts: Vec<&str> = Vec::with_capacity(self.tokens.len() + 1);
        for t in &self.tokens {
            texts.push(&t.text);
            if t.category == Category::Name {
                texts.push(":");
            }
        }
        join(texts)
    }

    pub fn units(&self) -> Vec<Unit> {
        let mut out = Vec::new();
        for t in &self.tokens {
            out.push(t.unit.clone());
            if t.category == Category::Name {
                out.push(Unit::Keyword(Keyword::Colon));
            }
        }
        out
    }

    pub fn has_unknown(&self) -> bool {
        self.tokens.iter().any(|t| t.unknown)
    }
}

/// A rule as chains: trigger (ending in `do`) and body statements.
pub type RuleChains = (Vec<Unit>, Vec<Vec<Unit>>);

pub fn header_units(program: &Program) -> Vec<Unit> {
    vec![Unit::Keyword(Keyword::Program), Unit::Name(program.id.clone())]
}

pub fn selector_units(selector: &Selector, quantifier: Quantifier) -> Vec<Unit> {
    let q = match quantifier {
        Quantifier::All => Keyword::All,
        Quantifier::Any => Keyword::Any,
    };
    match selector {
        Selector::ById(id) => vec![Unit::Device(id.clone())],
        Selector::AllOfKind(kind) => vec![Unit::Keyword(q), Unit::Kind(kind.clone())],
        Selector::Filtered { kind, property, value } if property == LOCATION_PROPERTY => vec![
            Unit::Keyword(q),
            Unit::Kind(kind.clone()),
            Unit::Keyword(Keyword::LocatedIn),
            Unit::Location(value.clone()),
        ],
        Selector::Filtered { kind, property, value } => vec![
            Unit::Keyword(q),
            Unit::Kind(kind.clone()),
            Unit::Keyword(Keyword::Whose),
            Unit::Property(property.clone()),
            Unit::Keyword(Keyword::Is),
            Unit::PropertyValue(value.clone()),
        ],
    }
}

pub fn statement_units(statement: &Statement, g: &Grammar) -> Vec<Unit> {
    match statement {
        Statement::Action { target, action, args } => {
            let mut out = vec![Unit::Action { name: action.clone(), phrase: g.action_phrase(action) }];
            out.extend(selector_units(target, Quantifier::All));
            for a in args {
                out.push(Unit::Keyword(Keyword::To));
                out.push(Unit::Literal(a.clone()));
            }
            out
        }
        Statement::Start(p) => vec![Unit::Keyword(Keyword::Start), Unit::Program(p.clone())],
        Statement::Stop(p) => vec![Unit::Keyword(Keyword::Stop), Unit::Program(p.clone())],
        Statement::Wait(ms) => vec![Unit::Keyword(Keyword::Wait), Unit::Duration(*ms)],
    }
}

pub fn trigger_units(trigger: &Trigger, g: &Grammar) -> Vec<Unit> {
    let mut out = Vec::new();
    match trigger {
        Trigger::Event { selector, event, filter } => {
            out.push(Unit::Keyword(Keyword::EachTime));
            out.extend(selector_units(selector, Quantifier::All));
            out.push(Unit::Event { name: event.clone(), phrase: g.event_phrase(event) });
            out.extend(filter.iter().cloned().map(Unit::Literal));
        }
        Trigger::State(expr) => {
            out.push(Unit::Keyword(Keyword::If));
            expr_units(expr, &mut out);
        }
    }
    out.push(Unit::Keyword(Keyword::Do));
    out
}

fn precedence(e: &StateExpr) -> u8 {
    match e {
        StateExpr::Or(..) => 1,
        StateExpr::And(..) => 2,
        StateExpr::Not(_) => 3,
        StateExpr::Atom(_) => 4,
    }
}

fn expr_units(e: &StateExpr, out: &mut Vec<Unit>) {
    let child = |c: &StateExpr, parens: bool, out: &mut Vec<Unit>| {
        if parens {
            out.push(Unit::Keyword(Keyword::LParen));
            expr_units(c, out);
            out.push(Unit::Keyword(Keyword::RParen));
        } else {
            expr_units(c, out);
        }
    };
    match e {
        StateExpr::Atom(a) => atom_units(a, out),
        StateExpr::Not(c) => {
            out.push(Unit::Keyword(Keyword::Not));
            child(c, precedence(c) < 3, out);
        }
        StateExpr::And(l, r) | StateExpr::Or(l, r) => {
            let p = precedence(e);
            let op = if p == 1 { Keyword::Or } else { Keyword::And };
            child(l, precedence(l) < p, out);
            out.push(Unit::Keyword(op));
            // both operators associate to the left
            child(r, precedence(r) <= p, out);
        }
    }
}

fn atom_units(a: &Atom, out: &mut Vec<Unit>) {
    out.extend(selector_units(&a.selector, a.quantifier));
    out.push(Unit::Variable(a.variable.clone()));
    out.push(Unit::Keyword(Keyword::comparator(a.comparator)));
    out.push(Unit::Literal(a.literal.clone()));
}

pub fn rule_chains(rule: &Rule, g: &Grammar) -> RuleChains {
    (trigger_units(&rule.trigger, g), rule.body.iter().map(|s| statement_units(s, g)).collect())
}

fn token(unit: Unit, path: &[usize], slot: Option<usize>, g: &Grammar) -> Token {
    let text = unit.text();
    let (display, unknown) = match &unit {
        Unit::Device(id) => match g.devices.get(id) {
            Some(term) => (term.name.clone(), false),
            None if g.open => (id.to_string(), false),
            None => (UNKNOWN_DISPLAY.to_string(), true),
        },
        Unit::Literal(Value::Sym(s)) => (s.clone(), false),
        _ => (text.clone(), false),
    };
    Token { category: unit.category(), unit, text, display, path: path.to_vec(), slot, unknown }
}

fn push_chain(out: &mut Vec<Token>, chain: &[Unit], path: &[usize], g: &Grammar) {
    for (slot, u) in chain.iter().enumerate() {
        out.push(token(u.clone(), path, Some(slot), g));
    }
}

fn separator(path: &[usize], g: &Grammar) -> Token {
    token(Unit::Keyword(Keyword::Comma), path, None, g)
}

/// Tokens of a program given as chains.
pub fn sentence(header: &[Unit], imperative: &[Vec<Unit>], rules: &[RuleChains], g: &Grammar) -> TokenSentence {
    let mut tokens = Vec::new();
    push_chain(&mut tokens, header, &[0], g);
    for (i, chain) in imperative.iter().enumerate() {
        if i > 0 {
            tokens.push(separator(&[1, i], g));
        }
        push_chain(&mut tokens, chain, &[1, i], g);
    }
    for (r, (trigger, body)) in rules.iter().enumerate() {
        push_chain(&mut tokens, trigger, &[2, r, 0], g);
        for (j, chain) in body.iter().enumerate() {
            if j > 0 {
                tokens.push(separator(&[2, r, 1, j], g));
            }
            push_chain(&mut tokens, chain, &[2, r, 1, j], g);
        }
    }
    TokenSentence { tokens }
}

pub fn render(program: &Program, g: &Grammar) -> TokenSentence {
    let imperative: Vec<_> = program.imperative.iter().map(|s| statement_units(s, g)).collect();
    let rules: Vec<_> = program.rules.iter().map(|r| rule_chains(r, g)).collect();
    sentence(&header_units(program), &imperative, &rules, g)
}

/// Canonical source text of a program.
pub fn to_text(program: &Program, g: &Grammar) -> String {
    render(program, g).text()
}
