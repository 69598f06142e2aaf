//! Core of the domus home automation environment.
//!
//! A simulated home ([`home`]), a pseudo-natural automation language whose
//! grammar follows the devices currently present ([`language`]), a
//! syntax-directed completion engine ([`keyboard`]), a deterministic
//! simulated-time interpreter ([`interpreter`]), an append-only timeline
//! ([`trace`]) and a dependency/conflict analyzer ([`analyzer`]).

pub mod home;
pub mod lexicon;
pub mod language;
pub mod keyboard;
pub mod trace;
pub mod scenario;
pub mod interpreter;
pub mod analyzer;
pub mod store;
pub mod service;
