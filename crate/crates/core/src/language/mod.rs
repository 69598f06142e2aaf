//! The automation language: token units, a grammar derived from the home,
//! parser, renderer and validator.

pub mod ast;
pub mod grammar;
pub mod lexer;
pub mod parser;
pub mod render;
pub mod unit;
pub mod validate;

pub use ast::{
    Access, Atom, Block, Comparator, Program, ProgramId, Quantifier, Rule, Selector, SelectorSite, StateExpr, Statement,
    StmtPath, Trigger,
};
pub use grammar::{DeviceTerm, Grammar};
pub use parser::{continuations, is_unit_prefix, is_viable_prefix, parse, parse_units, SyntaxError};
pub use render::{render, to_text, Token, TokenSentence, UNKNOWN_DISPLAY};
pub use unit::{join, Category, EntryKind, Expected, Keyword, Unit};
pub use validate::{validate, Binding, TypeError, UnknownRef, ValidationReport};
