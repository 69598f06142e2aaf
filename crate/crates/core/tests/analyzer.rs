mod support;

use std::collections::{BTreeMap, BTreeSet};

use domus_core::analyzer::{annotate, extract, AnalyzerError, ConflictState, EdgeKind};
use domus_core::home::{DeviceId, Registry};
use domus_core::interpreter::{InstanceSnapshot, Status};
use domus_core::language::{Program, Selector, Statement};
use proptest::prelude::*;
use support::*;

/// Devices each program may write, by direct inspection of its actions.
fn writers(programs: &[Program], r: &Registry) -> BTreeMap<DeviceId, BTreeSet<String>> {
    let mut out: BTreeMap<DeviceId, BTreeSet<String>> = BTreeMap::new();
    for p in programs {
        let bodies = p.imperative.iter().chain(p.rules.iter().flat_map(|r| r.body.iter()));
        for s in bodies {
            let Statement::Action { target, .. } = s else { continue };
            let hit: Vec<DeviceId> = match target {
                Selector::ById(id) => vec![id.clone()],
                sel => r.devices().map(|d| &d.descriptor).filter(|d| sel.matches(d)).map(|d| d.id.clone()).collect(),
            };
            for d in hit {
                out.entry(d).or_default().insert(p.id.to_string());
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn conflicts_are_exactly_shared_writes(
        specs in arb_devices(10),
        tape in arb_tape(),
        gone in prop::collection::vec(any::<prop::sample::Index>(), 0..3),
        running in prop::collection::vec(any::<bool>(), 5),
    ) {
        let mut r = build_home(&specs);
        let programs = fleet(&mut Tape::new(&tape), &r, 2);
        let ids: Vec<DeviceId> = r.devices().map(|d| d.descriptor.id.clone()).collect();
        if !ids.is_empty() {
            for i in gone {
                let _ = r.unregister_device(&ids[i.index(ids.len())]);
            }
        }
        let g = extract(&programs, &r);

        let expected: BTreeMap<DeviceId, Vec<String>> = writers(&programs, &r)
            .into_iter()
            .filter(|(_, w)| w.len() >= 2)
            .map(|(d, w)| (d, w.into_iter().collect()))
            .collect();
        let got: BTreeMap<DeviceId, Vec<String>> =
            g.conflicts.iter().map(|c| (c.device.clone(), c.writers.iter().map(|w| w.to_string()).collect())).collect();
        prop_assert_eq!(&got, &expected);

        // the conflict set is derivable from the write edges alone
        let mut from_edges: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for e in g.edges.iter().filter(|e| e.kind == EdgeKind::Writes) {
            from_edges.entry(e.to.as_str()).or_default().insert(e.from.as_str());
        }
        let derived: BTreeSet<&str> = from_edges.iter().filter(|(_, w)| w.len() >= 2).map(|(d, _)| *d).collect();
        prop_assert_eq!(derived, g.conflicts.iter().map(|c| c.device.as_str()).collect::<BTreeSet<_>>());

        for e in &g.edges {
            prop_assert!(g.programs.iter().any(|p| p.id == e.from));
            let device_edge = matches!(e.kind, EdgeKind::Writes | EdgeKind::Reads);
            if device_edge {
                prop_assert!(g.devices.iter().any(|d| d.id.as_str() == e.to));
            } else {
                prop_assert!(g.programs.iter().any(|p| p.id.as_str() == e.to));
            }
        }

        let snapshots: Vec<InstanceSnapshot> = programs
            .iter()
            .zip(&running)
            .map(|(p, run)| {
                let mut s = InstanceSnapshot::idle(p);
                s.status = if *run { Status::Running } else { Status::Stopped };
                s
            })
            .collect();
        let on: BTreeSet<String> = programs.iter().zip(&running).filter(|(_, r)| **r).map(|(p, _)| p.id.to_string()).collect();
        let a = annotate(g.clone(), &snapshots, r.generation()).unwrap();
        for c in &a.conflicts {
            let live = c.writers.iter().filter(|w| on.contains(w.as_str())).count();
            let want = if live >= 2 { ConflictState::Active } else { ConflictState::Latent };
            prop_assert_eq!(c.state, Some(want));
        }
        prop_assert_eq!(annotate(g, &snapshots, r.generation() + 1), Err(AnalyzerError::StaleGraph { graph: r.generation(), current: r.generation() + 1 }));
    }
}
