mod support;

use std::collections::BTreeSet;

use domus_core::home::DeviceId;
use domus_core::keyboard::{apply_option, delete_at, options, Choice, Draft, InsertionPoint};
use domus_core::language::{is_unit_prefix, render, Grammar, Unit};
use proptest::prelude::*;
use support::*;

/// A sample text for an entry placeholder.
fn sample(placeholder: &str) -> &'static str {
    match placeholder {
        "<name>" => "Zed",
        "<time>" => "12:00",
        "<duration>" => "1000",
        _ => "1",
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn frontier_options_match_brute_force(
        specs in arb_devices(12),
        tape in arb_tape(),
        cut in any::<prop::sample::Index>(),
        gone in prop::collection::vec(any::<prop::sample::Index>(), 0..3),
    ) {
        let mut r = build_home(&specs);
        let g = grammar_for(&r);
        let p = program(&mut Tape::new(&tape), &g, 4);
        let units = render(&p, &g).units();
        let draft = Draft::from_units(units[..cut.index(units.len() + 1)].iter().cloned());
        let ids: Vec<DeviceId> = r.devices().map(|d| d.descriptor.id.clone()).collect();
        let mut missing = BTreeSet::new();
        if !ids.is_empty() {
            for i in gone {
                let id = ids[i.index(ids.len())].clone();
                r.unregister_device(&id).unwrap();
                missing.insert(id);
            }
        }
        let g = grammar_for(&r);
        let at = draft.frontier();
        let offered = options(&draft, &at, &g, &r).unwrap();
        let texts: BTreeSet<String> = offered.iter().map(|o| o.text.clone()).collect();
        prop_assert_eq!(texts.len(), offered.len(), "duplicate options");
        prop_assert_eq!(&texts, &oracle(&draft, &g), "draft {:?}", draft.text(&g));
        for o in &offered {
            if let Choice::Unit { unit: Unit::Device(id) } = &o.choice {
                prop_assert!(!missing.contains(id), "offered missing device {}", id);
            }
            let o = match &o.choice {
                Choice::Entry { .. } => o.filled(sample(&o.text)).unwrap(),
                Choice::Unit { .. } => o.clone(),
            };
            let (next, hole) = apply_option(&draft, &at, &o, &g, &r).unwrap();
            prop_assert!(next.token_count() > draft.token_count());
            prop_assert!(is_unit_prefix(&next.text(&g), &g), "{} does not re-parse", next.text(&g));
            prop_assert!(options(&next, &hole, &g, &r).is_ok());
        }
    }

    #[test]
    fn deletion_shrinks_and_stays_extendable(specs in arb_devices(8), tape in arb_tape(), pick in any::<prop::sample::Index>()) {
        let r = build_home(&specs);
        let g = grammar_for(&r);
        let p = program(&mut Tape::new(&tape), &g, 3);
        let draft = Draft::from_program(&p, &g);
        let sentence = draft.sentence(&g);
        let chained: Vec<_> = sentence.tokens.iter().filter(|t| t.slot.is_some()).collect();
        let t = chained[pick.index(chained.len())];
        let (next, hole) = delete_at(&draft, &InsertionPoint::new(&t.path, t.slot.unwrap()), &g).unwrap();
        prop_assert!(next.token_count() < draft.token_count());
        if !next.is_empty() {
            prop_assert!(!options(&next, &hole, &g, &r).unwrap().is_empty(), "{:?} at {:?}", next, hole);
        }
    }
}

#[test]
fn empty_draft_has_only_the_header() {
    let r = build_home(&[]);
    let g = Grammar::derive(&r);
    let o = options(&Draft::new(), &InsertionPoint::new(&[0], 0), &g, &r).unwrap();
    assert_eq!(o.len(), 1);
    assert_eq!(o[0].text, "program");
    assert!(options(&Draft::new(), &InsertionPoint::new(&[1, 0], 0), &g, &r).is_err());
}
