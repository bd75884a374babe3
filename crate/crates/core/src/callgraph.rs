//! Call-site classification and fixed-point indirect-call resolution.
//!
//! Every pass evaluates all still-unresolved indirect sites against the
//! snapshot left by the previous pass (so the processing order inside a pass
//! cannot matter). A site whose trace touches anything unresolved is deferred;
//! when a pass makes no progress the remaining sites fall back to type-based
//! resolution.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::dataflow::{Dataflow, EdgeOracle, NoEdges, ParamPolicy, SiteTargets, ValueOrigin, DEFAULT_BUDGET};
use crate::ir::{
    Const, Def, InstKind, InstRef, IrModule, KindClass, Location, ModuleView, Signature, Type, TypedConst, Value,
};
use crate::vtable::{VTableRegistry, FIRST_METHOD_SLOT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Classification {
    Direct,
    VTableDispatch,
    AsyncPoll,
    GenericIndirect,
    UnresolvedIndirect,
}

impl Classification {
    pub const ALL: [Classification; 5] = [
        Classification::Direct,
        Classification::VTableDispatch,
        Classification::AsyncPoll,
        Classification::GenericIndirect,
        Classification::UnresolvedIndirect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Classification::Direct => "Direct",
            Classification::VTableDispatch => "VTableDispatch",
            Classification::AsyncPoll => "AsyncPoll",
            Classification::GenericIndirect => "GenericIndirect",
            Classification::UnresolvedIndirect => "UnresolvedIndirect",
        }
    }

    pub fn is_indirect(self) -> bool {
        self != Classification::Direct
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSiteInfo {
    pub location: Location,
    /// Ordinal among the call-like instructions (call, invoke, inline asm) of the caller.
    pub site_index: usize,
    pub classification: Classification,
    pub targets: BTreeSet<String>,
    /// How each target was found.
    pub provenance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub site: Location,
    pub target: String,
    pub classification: Classification,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionStats {
    pub counts: BTreeMap<Classification, usize>,
    pub iterations: usize,
    pub unresolved_count: usize,
    /// Indirect sites whose trace was still pending when progress stopped.
    pub stalled_sites: usize,
}

impl ResolutionStats {
    pub fn total_sites(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn indirect_sites(&self) -> usize {
        self.total_sites() - self.counts.get(&Classification::Direct).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<Edge>,
    /// Sorted by location.
    pub sites: Vec<CallSiteInfo>,
    pub stats: ResolutionStats,
    pub diagnostics: Vec<String>,
    #[serde(skip)]
    refs: Vec<InstRef>,
    #[serde(skip)]
    by_ref: BTreeMap<InstRef, usize>,
}

impl CallGraph {
    pub fn site(&self, r: InstRef) -> Option<&CallSiteInfo> {
        self.by_ref.get(&r).map(|&i| &self.sites[i])
    }

    pub fn site_at(&self, loc: &Location) -> Option<&CallSiteInfo> {
        self.sites.binary_search_by(|s| s.location.cmp(loc)).ok().map(|i| &self.sites[i])
    }

    /// Call sites inside `function`, with their targets.
    pub fn out_sites<'a>(&'a self, function: &'a str) -> impl Iterator<Item = &'a CallSiteInfo> + 'a {
        let start = self.sites.partition_point(|s| s.location.function.as_str() < function);
        self.sites[start..].iter().take_while(move |s| s.location.function == function)
    }

    /// Shortest sequence of call sites leading from `entry` into `function`
    /// (empty when they are the same function).
    pub fn shortest_chain(&self, entry: &str, function: &str) -> Option<Vec<Location>> {
        if entry == function {
            return Some(Vec::new());
        }
        let mut parent: BTreeMap<&str, (&str, &Location)> = BTreeMap::new();
        let mut queue = VecDeque::from([entry]);
        let mut seen = BTreeSet::from([entry]);
        while let Some(f) = queue.pop_front() {
            for s in self.out_sites(f) {
                for t in &s.targets {
                    if seen.insert(t.as_str()) {
                        parent.insert(t.as_str(), (f, &s.location));
                        if t == function {
                            let mut chain = Vec::new();
                            let mut cur = t.as_str();
                            while let Some((p, loc)) = parent.get(cur) {
                                chain.push((*loc).clone());
                                cur = p;
                            }
                            chain.reverse();
                            return Some(chain);
                        }
                        queue.push_back(t.as_str());
                    }
                }
            }
        }
        None
    }

    /// Edge list as `caller<TAB>site-index<TAB>target<TAB>classification`, sorted.
    pub fn export_tsv(&self) -> String {
        let mut lines: Vec<String> = Vec::new();
        for s in &self.sites {
            for t in &s.targets {
                lines.push(format!("{}\t{}\t{}\t{}", s.location.function, s.site_index, t, s.classification));
            }
        }
        lines.sort();
        let mut out = lines.join("\n");
        if !out.is_empty() {
            out.push('\n');
        }
        out
    }
}

impl EdgeOracle for CallGraph {
    fn indirect_targets(&self, site: InstRef) -> SiteTargets {
        match self.site(site) {
            Some(s) if s.classification.is_indirect() && !s.targets.is_empty() => {
                SiteTargets::Resolved(s.targets.iter().cloned().collect())
            }
            _ => SiteTargets::Unknown,
        }
    }

    fn indirect_callers(&self, callee: &str) -> Vec<InstRef> {
        self.sites
            .iter()
            .zip(&self.refs)
            .filter(|(s, _)| s.classification.is_indirect() && s.targets.contains(callee))
            .map(|(_, r)| *r)
            .collect()
    }

    fn may_gain_callers(&self, _: &str) -> bool {
        false
    }
}

/// Knobs for [`resolve_fixed_point_with`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolveOptions {
    pub budget: usize,
    /// Processing order of indirect sites inside each pass, as a permutation
    /// of their program-order indices. The result does not depend on it.
    pub order: Option<Vec<usize>>,
}

impl Default for ResolveOptions {
    fn default() -> Self {
        ResolveOptions { budget: DEFAULT_BUDGET, order: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum SiteState {
    Pending,
    Final(Classification, BTreeSet<String>, BTreeMap<String, String>),
}

/// Resolution state between passes.
struct Snapshot<'v, 'm> {
    view: &'v ModuleView<'m>,
    states: BTreeMap<InstRef, SiteState>,
    /// Address-taken functions some pending site could still call.
    open_callees: BTreeSet<String>,
}

impl EdgeOracle for Snapshot<'_, '_> {
    fn indirect_targets(&self, site: InstRef) -> SiteTargets {
        match self.states.get(&site) {
            Some(SiteState::Pending) => SiteTargets::Pending,
            Some(SiteState::Final(c, ts, _)) if *c != Classification::UnresolvedIndirect => {
                SiteTargets::Resolved(ts.iter().cloned().collect())
            }
            _ => SiteTargets::Unknown,
        }
    }

    fn indirect_callers(&self, callee: &str) -> Vec<InstRef> {
        self.states
            .iter()
            .filter(|(_, s)| matches!(s, SiteState::Final(_, ts, _) if ts.contains(callee)))
            .map(|(r, _)| *r)
            .collect()
    }

    fn may_gain_callers(&self, callee: &str) -> bool {
        self.open_callees.contains(callee)
    }
}

impl<'v, 'm> Snapshot<'v, 'm> {
    fn refresh_open(&mut self) {
        let view = self.view;
        let pending: Vec<InstRef> =
            self.states.iter().filter(|(_, s)| **s == SiteState::Pending).map(|(r, _)| *r).collect();
        let mut open = BTreeSet::new();
        for f in address_taken_functions(view.module) {
            let Some(sig) = view.signature(&f) else { continue };
            if pending.iter().any(|&r| call_accepts(view, r, sig)) {
                open.insert(f);
            }
        }
        self.open_callees = open;
    }
}

fn address_taken_functions(module: &IrModule) -> impl Iterator<Item = String> + '_ {
    let defs = module.functions.iter().filter(|f| f.address_taken).map(|f| f.symbol.clone());
    let decls = module.declarations.iter().filter(|d| d.address_taken).map(|d| d.symbol.clone());
    defs.chain(decls)
}

/// Argument and return kind classes of a call-like instruction.
fn call_kinds(view: &ModuleView<'_>, site: InstRef) -> Option<(Vec<KindClass>, KindClass)> {
    let (_, args, ret) = view.inst(site).kind.call_parts()?;
    Some((args.iter().map(|a| a.ty.kind_class()).collect(), ret.kind_class()))
}

fn call_accepts(view: &ModuleView<'_>, site: InstRef, sig: &Signature) -> bool {
    match call_kinds(view, site) {
        Some((args, ret)) => sig.accepts(&args, ret),
        None => false,
    }
}

/// Signature-compatible address-taken functions: the type-only baseline.
pub fn signature_candidates(view: &ModuleView<'_>, site: InstRef) -> BTreeSet<String> {
    let Some((args, ret)) = call_kinds(view, site) else { return BTreeSet::new() };
    address_taken_functions(view.module).filter(|f| view.signature(f).is_some_and(|s| s.accepts(&args, ret))).collect()
}

/// Aggregate type and member path a value was loaded from, if syntactically evident.
fn load_key(view: &ModuleView<'_>, fi: usize, v: &Value) -> Option<(String, Vec<u64>)> {
    let (b, i) = match view.def(fi, v.as_local()?)? {
        Def::Inst(b, i) => (b, i),
        Def::Param(_) => return None,
    };
    match &view.module.functions[fi].blocks[b].insts[i].kind {
        InstKind::Load { ptr, .. } => addr_key(view, fi, &ptr.value),
        InstKind::Cast { value, .. } => load_key(view, fi, &value.value),
        _ => None,
    }
}

/// (aggregate type, member path) addressed by a struct GEP.
fn addr_key(view: &ModuleView<'_>, fi: usize, v: &Value) -> Option<(String, Vec<u64>)> {
    match v {
        Value::Local(n) => match view.def(fi, n)? {
            Def::Inst(b, i) => match &view.module.functions[fi].blocks[b].insts[i].kind {
                InstKind::AddrCalc { source_ty, indices, .. } => gep_key(source_ty, indices.iter().map(|o| &o.value)),
                InstKind::Cast { value, .. } => addr_key(view, fi, &value.value),
                _ => None,
            },
            Def::Param(_) => None,
        },
        Value::Const(Const::Gep { source_ty, indices, .. }) => {
            let vals: Vec<Value> = indices.iter().map(|t| Value::Const(t.value.clone())).collect();
            gep_key(source_ty, vals.iter())
        }
        _ => None,
    }
}

fn gep_key<'a>(source_ty: &Type, mut indices: impl Iterator<Item = &'a Value>) -> Option<(String, Vec<u64>)> {
    if !matches!(source_ty, Type::Named(_) | Type::Struct { .. }) {
        return None;
    }
    // The leading index steps over whole records and does not change the member.
    indices.next()?;
    let mut path = Vec::new();
    for v in indices {
        match v {
            Value::Const(Const::Int(i)) => path.push(u64::try_from(*i).ok()?),
            Value::Const(Const::Zero) => path.push(0),
            _ => return None,
        }
    }
    (!path.is_empty()).then(|| (source_ty.to_string(), path))
}

/// Functions stored into each (aggregate type, member path), with a flag for
/// keys that also receive values not traceable to functions.
#[derive(Debug, Default)]
struct KeyStores {
    stored: BTreeMap<(String, Vec<u64>), BTreeSet<String>>,
    escaped: BTreeSet<(String, Vec<u64>)>,
}

fn key_stores(view: &ModuleView<'_>, df: &Dataflow<'_, '_>) -> KeyStores {
    let mut ks = KeyStores::default();
    for (fi, f) in view.module.functions.iter().enumerate() {
        for (_, _, inst) in f.instructions() {
            let InstKind::Store { value, ptr, .. } = &inst.kind else { continue };
            if value.ty.kind_class() != KindClass::Address {
                continue;
            }
            let Some(key) = addr_key(view, fi, &ptr.value) else { continue };
            let o = df.trace(fi, &value.value, Some(&value.ty), DEFAULT_BUDGET, ParamPolicy::Callers);
            let mut fns = BTreeSet::new();
            let mut clean = !o.pending && !o.map.is_empty();
            for origin in o.map.keys() {
                match origin {
                    ValueOrigin::FunctionAddress(s) => {
                        fns.insert(s.clone());
                    }
                    ValueOrigin::Constant(0) => {}
                    _ => clean = false,
                }
            }
            if !clean {
                ks.escaped.insert(key.clone());
            }
            ks.stored.entry(key).or_default().extend(fns);
        }
    }
    for g in &view.module.globals {
        if let Some(init) = &g.initializer {
            collect_init_keys(view, init, &mut ks);
        }
    }
    ks
}

fn collect_init_keys(view: &ModuleView<'_>, tc: &TypedConst, ks: &mut KeyStores) {
    let Const::Aggregate(items) = &tc.value else { return };
    let is_struct = matches!(tc.ty, Type::Named(_) | Type::Struct { .. });
    for (i, item) in items.iter().enumerate() {
        if is_struct {
            if let Some(s) = item.value.as_symbol() {
                if view.is_function(s) {
                    ks.stored
                        .entry((tc.ty.to_string(), alloc::vec![i as u64]))
                        .or_default()
                        .insert(String::from(view.resolve_alias(s)));
                }
            }
            nested_keys(view, item, &tc.ty.to_string(), alloc::vec![i as u64], ks);
        }
        collect_init_keys(view, item, ks);
    }
}

/// Members of nested aggregates, keyed by the outer type and full path.
fn nested_keys(view: &ModuleView<'_>, tc: &TypedConst, outer: &str, path: Vec<u64>, ks: &mut KeyStores) {
    let Const::Aggregate(items) = &tc.value else { return };
    for (i, item) in items.iter().enumerate() {
        let mut p = path.clone();
        p.push(i as u64);
        if let Some(s) = item.value.as_symbol() {
            if view.is_function(s) {
                ks.stored
                    .entry((String::from(outer), p.clone()))
                    .or_default()
                    .insert(String::from(view.resolve_alias(s)));
            }
        }
        nested_keys(view, item, outer, p, ks);
    }
}

/// Two-layer type refinement: signature-compatible address-taken functions,
/// narrowed to those stored into the member the callee was loaded from.
pub fn mlta_resolve(view: &ModuleView<'_>, site: InstRef) -> BTreeSet<String> {
    let registry = VTableRegistry::default();
    let df = Dataflow::new(view, &registry, &NoEdges);
    let ks = key_stores(view, &df);
    mlta_with(view, site, &ks)
}

fn mlta_with(view: &ModuleView<'_>, site: InstRef, ks: &KeyStores) -> BTreeSet<String> {
    let sig = signature_candidates(view, site);
    let Some((callee, _, _)) = view.inst(site).kind.call_parts() else { return sig };
    let Some(key) = load_key(view, site.0, callee) else { return sig };
    if ks.escaped.contains(&key) {
        return sig;
    }
    match ks.stored.get(&key) {
        Some(stored) if !stored.is_empty() => sig.intersection(stored).cloned().collect(),
        _ => sig,
    }
}

/// Trait named by a `dyn Trait` fat-pointer type, e.g. `%"dyn a::b::Trait"`.
fn dyn_trait_of(ty: &Type) -> Option<&str> {
    let Type::Named(n) = ty else { return None };
    let rest = n.split("dyn ").nth(1)?;
    let end = rest.find(|c: char| c == '+' || c == '>' || c == '"').unwrap_or(rest.len());
    Some(rest[..end].trim())
}

fn trait_matches(hint: &str, wanted: &str) -> bool {
    let last = |s: &str| -> String {
        let base = s.split('<').next().unwrap_or(s);
        String::from(base.rsplit("::").next().unwrap_or(base))
    };
    hint == wanted || hint.ends_with(wanted) || wanted.ends_with(hint) || last(hint) == last(wanted)
}

/// Slot loaded by a dispatch-shaped callee, plus the trait of the fat pointer
/// the table pointer came from (when visible).
fn dispatch_shape(view: &ModuleView<'_>, fi: usize, callee: &Value) -> Option<(u32, Option<String>)> {
    let pw = view.layout.pointer_width as i64;
    let Def::Inst(b, i) = view.def(fi, callee.as_local()?)? else { return None };
    let InstKind::Load { ptr, invariant, .. } = &view.module.functions[fi].blocks[b].insts[i].kind else {
        return None;
    };
    // Slot address: table pointer plus a constant byte offset.
    let (table, off) = match &ptr.value {
        Value::Local(n) => match view.def(fi, n)? {
            Def::Inst(b2, i2) => match &view.module.functions[fi].blocks[b2].insts[i2].kind {
                InstKind::AddrCalc { source_ty, base, indices, .. } if indices.len() == 1 => {
                    let Value::Const(Const::Int(k)) = indices[0].value else { return None };
                    let scale = i64::try_from(view.size_of(source_ty)).ok()?;
                    (base.value.clone(), i64::try_from(k).ok()? * scale)
                }
                InstKind::Load { .. } => (ptr.value.clone(), 0),
                _ => return None,
            },
            Def::Param(_) => (ptr.value.clone(), 0),
        },
        _ => return None,
    };
    if off % pw != 0 || off / pw < FIRST_METHOD_SLOT as i64 {
        return None;
    }
    let slot = u32::try_from(off / pw).ok()?;
    // The table pointer itself must be a load; from a `dyn Trait` member it names the trait.
    let Def::Inst(b3, i3) = view.def(fi, table.as_local()?)? else {
        return (*invariant).then_some((slot, None));
    };
    // Otherwise (projected out of a returned fat pointer, a phi, ...) only the
    // invariant marker vouches for it.
    let InstKind::Load { ptr: tptr, .. } = &view.module.functions[fi].blocks[b3].insts[i3].kind else {
        return (*invariant).then_some((slot, None));
    };
    let mut hint = None;
    if let Some(n) = tptr.value.as_local() {
        if let Some(Def::Inst(b4, i4)) = view.def(fi, n) {
            if let InstKind::AddrCalc { source_ty, indices, .. } = &view.module.functions[fi].blocks[b4].insts[i4].kind
            {
                if matches!(indices.last().map(|o| &o.value), Some(Value::Const(Const::Int(1)))) {
                    hint = dyn_trait_of(source_ty).map(String::from);
                }
            }
        }
    }
    (*invariant || hint.is_some()).then_some((slot, hint))
}

/// Targets by matching the dispatch shape against every registry record.
fn type_route(
    view: &ModuleView<'_>,
    registry: &VTableRegistry,
    site: InstRef,
) -> Option<(BTreeSet<String>, &'static str)> {
    let (callee, args, ret) = view.inst(site).kind.call_parts()?;
    let (slot, hint) = dispatch_shape(view, site.0, callee)?;
    let kinds: Vec<KindClass> = args.iter().map(|a| a.ty.kind_class()).collect();
    let compatible = |m: &str| view.signature(m).is_some_and(|s| s.accepts(&kinds, ret.kind_class()));
    let collect = |filter: &dyn Fn(&crate::vtable::VTableRecord) -> bool| -> BTreeSet<String> {
        registry
            .records
            .iter()
            .filter(|r| filter(r))
            .filter_map(|r| r.slot(slot))
            .filter(|m| compatible(m))
            .map(String::from)
            .collect()
    };
    if let Some(t) = &hint {
        let named = collect(&|r| r.trait_hint.as_deref().is_some_and(|h| trait_matches(h, t)));
        if !named.is_empty() {
            return Some((named, "fat-pointer trait + slot"));
        }
    }
    let any = collect(&|_| true);
    (!any.is_empty()).then_some((any, "slot match across tables"))
}

enum Outcome {
    Defer,
    Final(Classification, BTreeSet<String>, BTreeMap<String, String>, Option<String>),
}

fn note_all(targets: &BTreeSet<String>, note: &str) -> BTreeMap<String, String> {
    targets.iter().map(|t| (t.clone(), String::from(note))).collect()
}

fn classify_indirect(df: &Dataflow<'_, '_>, ks: &KeyStores, site: InstRef, budget: usize, forced: bool) -> Outcome {
    let view = df.view;
    let o = df.trace_callee(site, budget, ParamPolicy::Callers);
    if o.pending && !forced {
        return Outcome::Defer;
    }
    let slots: Vec<(&String, u32)> = o
        .map
        .keys()
        .filter_map(|k| match k {
            ValueOrigin::VTableSlot(g, s) => Some((g, *s)),
            _ => None,
        })
        .collect();
    let funcs: BTreeSet<String> = o
        .map
        .keys()
        .filter_map(|k| match k {
            ValueOrigin::FunctionAddress(f) => Some(f.clone()),
            _ => None,
        })
        .collect();
    let via_heap = o.map.iter().any(|(k, fl)| matches!(k, ValueOrigin::FunctionAddress(_)) && fl.via_heap);
    let complete = !o.pending && !o.map.is_empty() && slots.len() + funcs.len() == o.map.len();
    if complete && !slots.is_empty() {
        let mut targets = BTreeSet::new();
        let mut prov = BTreeMap::new();
        for (g, s) in &slots {
            if let Some(m) = df.registry.records_of(g).next().and_then(|r| r.slot(*s)) {
                targets.insert(String::from(m));
                prov.insert(String::from(m), format!("vtable @{g} slot {s}"));
            }
        }
        let diag = (!funcs.is_empty()).then(|| {
            format!(
                "{}: both dispatch and traced function addresses reach the callee; dispatch result kept",
                view.location(site)
            )
        });
        if !targets.is_empty() {
            return Outcome::Final(Classification::VTableDispatch, targets, prov, diag);
        }
    }
    if complete && slots.is_empty() {
        let (cls, note) = if via_heap {
            (Classification::AsyncPoll, "stored into heap wrapper, loaded by poll")
        } else {
            (Classification::GenericIndirect, "traced function address")
        };
        let prov = note_all(&funcs, note);
        return Outcome::Final(cls, funcs, prov, None);
    }
    if let Some((targets, note)) = type_route(view, df.registry, site) {
        let prov = note_all(&targets, note);
        return Outcome::Final(Classification::VTableDispatch, targets, prov, None);
    }
    let mut targets = mlta_with(view, site, ks);
    let mut prov = note_all(&targets, "type refinement");
    let sig = signature_candidates(view, site);
    for f in funcs.iter().filter(|f| sig.contains(*f)) {
        if targets.insert(f.clone()) {
            prov.insert(f.clone(), String::from("traced function address"));
        }
    }
    if targets.is_empty() {
        Outcome::Final(Classification::UnresolvedIndirect, targets, prov, None)
    } else {
        Outcome::Final(Classification::GenericIndirect, targets, prov, None)
    }
}

/// Classifies one call site against a finished call graph.
pub fn classify_call_site(df: &Dataflow<'_, '_>, site: InstRef) -> CallSiteInfo {
    let view = df.view;
    let location = view.location(site);
    let site_index = view.site_ordinal(site).unwrap_or(0);
    if let Some(s) = view.inst(site).kind.direct_callee() {
        let t = String::from(view.resolve_alias(s));
        return CallSiteInfo {
            location,
            site_index,
            classification: Classification::Direct,
            provenance: BTreeMap::from([(t.clone(), String::from("direct"))]),
            targets: BTreeSet::from([t]),
        };
    }
    let ks = key_stores(view, df);
    match classify_indirect(df, &ks, site, DEFAULT_BUDGET, true) {
        Outcome::Final(classification, targets, provenance, _) => {
            CallSiteInfo { location, site_index, classification, targets, provenance }
        }
        Outcome::Defer => unreachable!("forced classification never defers"),
    }
}

/// Builds the whole-program call graph, resolving indirect calls to a fixed point.
pub fn resolve_fixed_point(module: &IrModule, registry: &VTableRegistry) -> CallGraph {
    resolve_fixed_point_with(module, registry, &ResolveOptions::default())
}

pub fn resolve_fixed_point_with(module: &IrModule, registry: &VTableRegistry, opts: &ResolveOptions) -> CallGraph {
    let view = ModuleView::new(module);
    resolve_view(&view, registry, opts)
}

/// Call instructions split into (direct, indirect), in program order.
fn split_calls(view: &ModuleView<'_>) -> (Vec<InstRef>, Vec<InstRef>) {
    let mut direct: Vec<InstRef> = Vec::new();
    let mut indirect: Vec<InstRef> = Vec::new();
    for (fi, idx) in view.index.iter().enumerate() {
        for &(b, i) in &idx.call_sites {
            let k = &view.module.functions[fi].blocks[b].insts[i].kind;
            if !k.is_call() {
                continue;
            }
            if k.direct_callee().is_some() {
                direct.push((fi, b, i));
            } else {
                indirect.push((fi, b, i));
            }
        }
    }
    (direct, indirect)
}

/// Number of indirect call sites: the length [`ResolveOptions::order`] must have.
pub fn indirect_site_count(view: &ModuleView<'_>) -> usize {
    split_calls(view).1.len()
}

pub fn resolve_view(view: &ModuleView<'_>, registry: &VTableRegistry, opts: &ResolveOptions) -> CallGraph {
    let (direct, indirect) = split_calls(view);
    let order: Vec<usize> = match &opts.order {
        Some(p) if p.len() == indirect.len() => p.clone(),
        _ => (0..indirect.len()).collect(),
    };
    let mut snap = Snapshot {
        view,
        states: indirect.iter().map(|&r| (r, SiteState::Pending)).collect(),
        open_callees: BTreeSet::new(),
    };
    let mut diagnostics = Vec::new();
    let mut iterations = 0;
    let mut stalled = 0;
    loop {
        iterations += 1;
        snap.refresh_open();
        let pending: Vec<InstRef> =
            order.iter().map(|&k| indirect[k]).filter(|r| snap.states.get(r) == Some(&SiteState::Pending)).collect();
        if pending.is_empty() {
            break;
        }
        let df = Dataflow::new(view, registry, &snap);
        let ks = key_stores(view, &df);
        let mut decided: BTreeMap<InstRef, SiteState> = BTreeMap::new();
        let mut pass_diags = Vec::new();
        for &r in &pending {
            if let Outcome::Final(c, t, p, d) = classify_indirect(&df, &ks, r, opts.budget, false) {
                decided.insert(r, SiteState::Final(c, t, p));
                pass_diags.extend(d);
            }
        }
        if decided.is_empty() {
            // No progress: resolve everything left with whatever is known now.
            stalled = pending.len();
            for &r in &pending {
                if let Outcome::Final(c, t, p, d) = classify_indirect(&df, &ks, r, opts.budget, true) {
                    decided.insert(r, SiteState::Final(c, t, p));
                    pass_diags.extend(d);
                }
            }
        }
        drop(df);
        pass_diags.sort();
        diagnostics.extend(pass_diags);
        let all_done = decided.len() == pending.len();
        snap.states.extend(decided);
        if all_done {
            break;
        }
    }
    if stalled > 0 {
        diagnostics.push(format!("{stalled} indirect site(s) resolved without complete data-flow facts"));
    }

    let mut sites: Vec<(CallSiteInfo, InstRef)> = Vec::with_capacity(direct.len() + indirect.len());
    for &r in &direct {
        let t = String::from(view.resolve_alias(view.inst(r).kind.direct_callee().unwrap_or_default()));
        sites.push((
            CallSiteInfo {
                location: view.location(r),
                site_index: view.site_ordinal(r).unwrap_or(0),
                classification: Classification::Direct,
                provenance: BTreeMap::from([(t.clone(), String::from("direct"))]),
                targets: BTreeSet::from([t]),
            },
            r,
        ));
    }
    for &r in &indirect {
        let (c, t, p) = match snap.states.remove(&r) {
            Some(SiteState::Final(c, t, p)) => (c, t, p),
            _ => (Classification::UnresolvedIndirect, BTreeSet::new(), BTreeMap::new()),
        };
        sites.push((
            CallSiteInfo {
                location: view.location(r),
                site_index: view.site_ordinal(r).unwrap_or(0),
                classification: c,
                targets: t,
                provenance: p,
            },
            r,
        ));
    }
    sites.sort_by(|a, b| a.0.location.cmp(&b.0.location));

    let mut stats = ResolutionStats { iterations, stalled_sites: stalled, ..Default::default() };
    for c in Classification::ALL {
        stats.counts.insert(c, 0);
    }
    let mut nodes: BTreeSet<String> = view.module.functions.iter().map(|f| f.symbol.clone()).collect();
    let mut edges = BTreeSet::new();
    for (s, _) in &sites {
        *stats.counts.entry(s.classification).or_default() += 1;
        if s.classification == Classification::UnresolvedIndirect {
            stats.unresolved_count += 1;
        }
        nodes.insert(s.location.function.clone());
        for t in &s.targets {
            nodes.insert(t.clone());
            edges.insert(Edge { site: s.location.clone(), target: t.clone(), classification: s.classification });
        }
    }
    let refs: Vec<InstRef> = sites.iter().map(|(_, r)| *r).collect();
    let by_ref = refs.iter().enumerate().map(|(i, r)| (*r, i)).collect();
    CallGraph { nodes, edges, sites: sites.into_iter().map(|(s, _)| s).collect(), stats, diagnostics, refs, by_ref }
}
