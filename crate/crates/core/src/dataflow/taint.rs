use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::trace::Tracer;
use super::*;
use crate::callgraph::CallGraph;

/// Parameter-to-sink-argument influence along the shortest call chain from
/// `entry` to each sink.
///
/// `df` must have been built over `graph` so that returns of indirect calls
/// are followed. Comparisons do not propagate taint; arithmetic and memory do
/// (as `Indirect`).
pub fn taint_propagate(df: &Dataflow<'_, '_>, entry: &str, sinks: &[Location], graph: &CallGraph) -> Vec<TaintFact> {
    let mut out = Vec::new();
    for sink in sinks {
        let Some(mut chain) = graph.shortest_chain(entry, &sink.function) else { continue };
        chain.push(sink.clone());
        let slice = Slice { entry: String::from(entry), call_chain: chain, sink: sink.clone() };
        out.extend(taint_slice(df, &slice));
    }
    out.sort();
    out.dedup();
    out
}

/// Taint facts for the sink of one slice, evaluated in the calling context
/// the slice describes.
pub fn taint_slice(df: &Dataflow<'_, '_>, slice: &Slice) -> Vec<TaintFact> {
    let mut facts: BTreeMap<(usize, usize), FlowKind> = BTreeMap::new();
    let Some(site) = df.view.resolve_location(&slice.sink) else { return Vec::new() };
    for ai in 0..site_args(df.view, site).len() {
        let Some(origins) = trace_along(df, slice, ai, true) else { continue };
        for (o, fl) in origins.map {
            let ValueOrigin::Parameter(f, pi) = o else { continue };
            if f != slice.entry {
                continue;
            }
            let kind = if fl.direct { FlowKind::Direct } else { FlowKind::Indirect };
            let e = facts.entry((pi, ai)).or_insert(kind);
            *e = (*e).min(kind);
        }
    }
    facts
        .into_iter()
        .map(|((pi, ai), flow_kind)| TaintFact {
            source: (slice.entry.clone(), pi),
            sink: (slice.sink.clone(), ai),
            flow_kind,
            witness: slice.clone(),
        })
        .collect()
}

/// Origins of argument `arg` of the slice's sink call, with parameters of the
/// functions along the chain replaced by the caller's arguments.
///
/// `None` when the slice does not match the module.
/// With `load_through_param`, loads through an entry parameter report that
/// parameter (indirect flow) instead of an unknown load.
pub fn trace_along(df: &Dataflow<'_, '_>, slice: &Slice, arg: usize, load_through_param: bool) -> Option<Origins> {
    let view = df.view;
    let site = view.resolve_location(&slice.sink)?;
    let n = slice.call_chain.len().checked_sub(1)?;
    let stack = slice.call_chain[..n].iter().map(|l| view.resolve_location(l)).collect::<Option<Vec<_>>>()?;
    let op = site_args(view, site).get(arg)?;
    let mut t = Tracer::new(df, DEFAULT_BUDGET, ParamPolicy::Stop);
    t.stack = stack;
    t.load_through_param = load_through_param;
    Some(t.eval(site.0, &op.value, Some(&op.ty), &[]))
}
