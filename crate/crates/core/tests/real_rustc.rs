//! Unoptimised rustc output for a small `dyn WasiDir` / async program
//! (fixtures/real/dyn_dir.rs), in both symbol mangling schemes.

use std::collections::BTreeSet;

use surfmap_core::callgraph::{resolve_fixed_point, CallGraph, Classification};
use surfmap_core::ir::{demangle, parse_module};
use surfmap_core::vtable::VTableRegistry;

fn load(scheme: &str) -> (VTableRegistry, CallGraph) {
    let p = format!("{}/../../fixtures/real/dyn_dir_{scheme}.ll", env!("CARGO_MANIFEST_DIR"));
    let m = parse_module(&std::fs::read_to_string(p).unwrap()).unwrap();
    let reg = VTableRegistry::build(&m);
    let g = resolve_fixed_point(&m, &reg);
    (reg, g)
}

/// Demangled targets of the single indirect site in the function whose
/// demangled name starts with `caller`.
fn targets_of(g: &CallGraph, caller: &str) -> (Classification, BTreeSet<String>) {
    let mut found: Vec<_> = g
        .sites
        .iter()
        .filter(|s| s.classification.is_indirect() && demangle(&s.location.function).starts_with(caller))
        .collect();
    assert_eq!(found.len(), 1, "{caller}");
    let s = found.pop().unwrap();
    (s.classification, s.targets.iter().map(|t| demangle(t)).collect())
}

fn check(scheme: &str, closure: &str) {
    let (reg, g) = load(scheme);
    let wasi_dir: Vec<_> = reg.records.iter().filter(|r| r.trait_hint.as_deref() == Some("l1::WasiDir")).collect();
    assert_eq!(wasi_dir.len(), 1, "{scheme}");
    assert_eq!(wasi_dir[0].methods.len(), 2);

    let (cls, t) = targets_of(&g, &format!("l1::path_open::{closure}"));
    assert_eq!(cls, Classification::VTableDispatch);
    assert_eq!(t, BTreeSet::from(["<l1::Dir as l1::WasiDir>::open_file".to_string()]));

    let (cls, t) = targets_of(&g, "<core::pin::Pin<");
    assert_eq!(cls, Classification::VTableDispatch);
    assert_eq!(t, BTreeSet::from([format!("<l1::Dir as l1::WasiDir>::open_file::{closure}")]));

    assert_eq!(g.stats.unresolved_count, 0);
}

#[test]
fn v0_symbols() {
    check("v0", "{closure#0}");
}

#[test]
fn legacy_symbols() {
    check("legacy", "{{closure}}");
}
