use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use surfmap_core::callgraph::{resolve_fixed_point, Classification};
use surfmap_core::ir::parse_module;
use surfmap_core::vtable::VTableRegistry;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/wasi_common_open.ll");
const TRUTH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/wasi_common_open.truth.tsv");

/// caller -> targets observed at run time
fn truth() -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for line in std::fs::read_to_string(TRUTH).unwrap().lines() {
        let f: Vec<&str> = line.split('\t').collect();
        out.entry(f[0].to_string()).or_default().insert(f[2].to_string());
    }
    out
}

#[test]
fn resolves_exactly_in_two_passes() {
    let text = std::fs::read_to_string(FIXTURE).unwrap();
    let t0 = Instant::now();
    let m = parse_module(&text).unwrap();
    let reg = VTableRegistry::build(&m);
    let g = resolve_fixed_point(&m, &reg);
    let elapsed = t0.elapsed();

    let mut got: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for s in g.sites.iter().filter(|s| s.classification.is_indirect()) {
        eprintln!("{} #{} {:?} {:?}", s.location.function, s.site_index, s.classification, s.targets);
        got.entry(s.location.function.clone()).or_default().extend(s.targets.iter().cloned());
    }
    assert_eq!(got, truth());
    assert!(g.stats.iterations <= 2, "iterations = {}", g.stats.iterations);
    assert_eq!(g.stats.unresolved_count, 0);
    assert!(elapsed.as_secs_f64() < 1.0);

    let kinds: BTreeMap<&str, Classification> = g
        .sites
        .iter()
        .filter(|s| s.classification.is_indirect())
        .map(|s| (s.location.function.as_str(), s.classification))
        .collect();
    assert_eq!(
        kinds["_ZN11wasi_common9snapshots9preview_19path_open28_$u7b$$u7b$closure$u7d$$u7d$17h58f44fac77c4dab7E"],
        Classification::VTableDispatch
    );
    assert_eq!(kinds["_ZN4core6future6future6Future4poll17h10d3edbf4a0cbc12E"], Classification::AsyncPoll);
    assert_eq!(kinds["_ZN4core6future6future6Future4poll17h9e231a7ffc157243E"], Classification::AsyncPoll);
}
