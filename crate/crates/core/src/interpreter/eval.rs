//! Selector resolution and condition evaluation against the live registry.

use std::collections::BTreeSet;

use crate::home::{DeviceId, Registry};
use crate::language::{Atom, Program, Quantifier, Selector, StateExpr};

/// Available devices a selector denotes, in id order.
pub fn resolve(selector: &Selector, registry: &Registry) -> Vec<DeviceId> {
    match selector {
        Selector::ById(id) => registry.descriptor(id).filter(|d| d.is_available()).map(|d| d.id.clone()).into_iter().collect(),
        _ => registry.available().filter(|r| selector.matches(&r.descriptor)).map(|r| r.descriptor.id.clone()).collect(),
    }
}

/// Truth of one atom. Readings of Missing devices count as false, and a
/// universal atom over no devices is false.
pub fn atom_holds(atom: &Atom, registry: &Registry) -> bool {
    let holds = |id: &DeviceId| {
        registry.read_state(id, &atom.variable).is_ok_and(|r| !r.stale && atom.comparator.holds(&r.value, &atom.literal))
    };
    let devices = resolve(&atom.selector, registry);
    match atom.quantifier {
        Quantifier::Any => devices.iter().any(holds),
        Quantifier::All => !devices.is_empty() && devices.iter().all(holds),
    }
}

pub fn holds(expr: &StateExpr, registry: &Registry) -> bool {
    match expr {
        StateExpr::Atom(a) => atom_holds(a, registry),
        StateExpr::Not(e) => !holds(e, registry),
        StateExpr::And(l, r) => holds(l, registry) && holds(r, registry),
        StateExpr::Or(l, r) => holds(l, registry) || holds(r, registry),
    }
}

/// Paths of device references that do not resolve to an Available device.
pub fn unknown_refs(program: &Program, registry: &Registry) -> BTreeSet<String> {
    program
        .selector_sites()
        .into_iter()
        .filter(|site| match site.selector {
            Selector::ById(id) => !registry.descriptor(id).is_some_and(|d| d.is_available()),
            _ => false,
        })
        .map(|site| site.path)
        .collect()
}
