//! Path-enumeration oracle for dependency resolution, plus a random
//! manifest-set generator with deliberate version conflicts.

use std::collections::{BTreeMap, BTreeSet};

use fpscope_core::depgraph::Manifest;
use fpscope_core::ir::SdkCoordinate;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn key(c: &SdkCoordinate) -> String {
    format!("{}:{}", c.group(), c.artifact())
}

/// Resolves a bundle by brute-force path enumeration: at each depth `d` it
/// re-walks, from scratch, every dependency path of length `d` whose
/// interior hops are exactly the winners confirmed at those depths, gathers
/// the terminal coordinates for still-unassigned artifacts, and elects the
/// greatest version per artifact. Returns `group:artifact` → (version,
/// depth).
pub fn resolve_by_paths(
    manifests: &[Manifest],
    main: &SdkCoordinate,
) -> BTreeMap<String, (String, u32)> {
    let deps: BTreeMap<&SdkCoordinate, &[SdkCoordinate]> = manifests
        .iter()
        .map(|m| (&m.coordinate, m.dependencies.as_slice()))
        .collect();
    let mut assigned: BTreeMap<String, (String, u32)> = BTreeMap::new();
    assigned.insert(key(main), (main.version().to_string(), 0));

    fn walk<'a>(
        node: &'a SdkCoordinate,
        pos: u32,
        depth: u32,
        deps: &BTreeMap<&SdkCoordinate, &'a [SdkCoordinate]>,
        assigned: &BTreeMap<String, (String, u32)>,
        terminals: &mut BTreeMap<String, BTreeSet<String>>,
    ) {
        if pos == depth {
            if !assigned.contains_key(&key(node)) {
                terminals
                    .entry(key(node))
                    .or_default()
                    .insert(node.version().to_string());
            }
            return;
        }
        let Some(children) = deps.get(node) else { return };
        for child in *children {
            // Interior hops (every position short of the terminal) must be
            // the confirmed winner at exactly that depth.
            let interior_ok = pos + 1 == depth
                || assigned.get(&key(child))
                    == Some(&(child.version().to_string(), pos + 1));
            if interior_ok {
                walk(child, pos + 1, depth, deps, assigned, terminals);
            }
        }
    }

    for depth in 1..=(manifests.len() as u32 + 1) {
        let mut terminals: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        walk(main, 0, depth, &deps, &assigned, &mut terminals);
        if terminals.is_empty() {
            break;
        }
        for (artifact_key, versions) in terminals {
            let winner = versions.into_iter().next_back().expect("non-empty");
            assigned.insert(artifact_key, (winner, depth));
        }
    }
    assigned
}

/// A random acyclic manifest set. Nodes share artifact keys across distinct
/// versions so version conflicts actually occur; edges only point from
/// lower to higher node index. Node 0 is the main coordinate.
pub fn random_manifests(rng: &mut ChaCha8Rng) -> (Vec<Manifest>, SdkCoordinate) {
    let n: usize = rng.gen_range(2..=50);
    // Few artifacts force conflicts, but the (artifact, version) grid must
    // still hold n distinct coordinates.
    let min_artifacts = n.div_ceil(10);
    let artifacts = rng.gen_range(min_artifacts..=n.div_ceil(2).min(8).max(min_artifacts));
    // Distinct (artifact, version) pairs.
    let mut pool: Vec<(usize, usize)> = (0..artifacts)
        .flat_map(|a| (0..10).map(move |v| (a, v)))
        .collect();
    pool.shuffle(rng);
    let coords: Vec<SdkCoordinate> = pool[..n]
        .iter()
        .map(|(a, v)| {
            SdkCoordinate::new("g", &format!("a{a}"), &v.to_string()).expect("valid parts")
        })
        .collect();

    let edge_probability = rng.gen_range(0.05..0.4);
    let manifests = (0..n)
        .map(|i| {
            let dependencies = (i + 1..n)
                .filter(|_| rng.gen_bool(edge_probability))
                .map(|j| coords[j].clone())
                .collect();
            Manifest { coordinate: coords[i].clone(), dependencies }
        })
        .collect();
    (manifests, coords[0].clone())
}
