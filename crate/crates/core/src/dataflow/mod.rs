//! Backward value-origin tracing, constant folding and parameter taint.
//!
//! Tracing is demand-driven over SSA definitions. Memory is modelled per
//! allocation site (stack slot, heap allocator call, or global), field
//! sensitive for constant offsets; a [`MemoryIndex`] of stores, copies and
//! escapes is computed up front so loads can be matched with the stores that
//! may have produced them.

mod fold;
mod memory;
mod taint;
mod trace;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ir::{InstRef, Location, ModuleView, Operand, Value};
use crate::vtable::VTableRegistry;

pub use fold::{canonical, fold_binop, fold_cast, fold_compare, mask, sext, IntValue};
pub use memory::{Base, Escape, MemoryIndex};
pub use taint::{taint_propagate, taint_slice, trace_along};
pub use trace::const_eval;
use trace::Tracer;

/// Default step budget of a single query.
pub const DEFAULT_BUDGET: usize = 512;
/// Step budget used when tracing store addresses while indexing memory.
pub const INDEX_BUDGET: usize = 256;
/// Maximum depth of return-value descent into callees.
pub const MAX_CONTEXT: usize = 8;

/// Where a value may come from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ValueOrigin {
    Constant(i128),
    FunctionAddress(String),
    VTableSlot(String, u32),
    Parameter(String, usize),
    /// Address of a global plus a byte offset; `None` when the offset is dynamic.
    GlobalAddress(String, Option<i64>),
    /// Address inside a stack slot or heap allocation.
    Allocation {
        site: Location,
        offset: Option<i64>,
        heap: bool,
    },
    LoadFromUnknown,
    Unknown,
}

impl ValueOrigin {
    pub fn is_unknown(&self) -> bool {
        matches!(self, ValueOrigin::Unknown | ValueOrigin::LoadFromUnknown)
    }
}

/// How an origin reached the traced value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Flow {
    /// Only value identity, casts and argument passing on the way.
    pub direct: bool,
    /// Stored into and reloaded from a heap allocation.
    pub via_heap: bool,
}

impl Flow {
    pub const DIRECT: Flow = Flow { direct: true, via_heap: false };

    fn merge(self, o: Flow) -> Flow {
        Flow { direct: self.direct || o.direct, via_heap: self.via_heap || o.via_heap }
    }
}

/// Result of a trace: origins with flow tags, plus whether the answer may
/// still grow once unresolved call edges are resolved.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Origins {
    pub map: BTreeMap<ValueOrigin, Flow>,
    pub pending: bool,
}

impl Origins {
    pub fn one(o: ValueOrigin, flow: Flow) -> Self {
        let mut r = Origins::default();
        r.insert(o, flow);
        r
    }

    pub fn unknown() -> Self {
        Self::one(ValueOrigin::Unknown, Flow::DIRECT)
    }

    pub fn pending() -> Self {
        Origins { map: BTreeMap::new(), pending: true }
    }

    pub fn insert(&mut self, o: ValueOrigin, flow: Flow) {
        let e = self.map.entry(o).or_insert(flow);
        *e = e.merge(flow);
    }

    pub fn extend(&mut self, other: Origins) {
        self.pending |= other.pending;
        for (o, f) in other.map {
            self.insert(o, f);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty() && !self.pending
    }

    pub fn has_unknown(&self) -> bool {
        self.map.keys().any(ValueOrigin::is_unknown)
    }

    pub fn origins(&self) -> BTreeSet<ValueOrigin> {
        self.map.keys().cloned().collect()
    }

    /// Constants, if every origin is one.
    pub fn constants(&self) -> Option<BTreeSet<i128>> {
        if self.pending {
            return None;
        }
        self.map
            .keys()
            .map(|o| match o {
                ValueOrigin::Constant(c) => Some(*c),
                _ => None,
            })
            .collect()
    }

    fn map_flow(mut self, f: impl Fn(&ValueOrigin, Flow) -> Flow) -> Self {
        for (o, fl) in self.map.iter_mut() {
            *fl = f(o, *fl);
        }
        self
    }
}

/// Current knowledge about indirect call targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SiteTargets {
    Resolved(Vec<String>),
    /// Not resolved yet; a later pass may resolve it.
    Pending,
    /// Will never be resolved.
    Unknown,
}

/// Call-edge information available to tracing.
pub trait EdgeOracle {
    fn indirect_targets(&self, site: InstRef) -> SiteTargets;
    /// Indirect call sites currently known to reach `callee`.
    fn indirect_callers(&self, callee: &str) -> Vec<InstRef>;
    /// Whether more indirect callers of `callee` may still be discovered.
    fn may_gain_callers(&self, callee: &str) -> bool;
}

/// No indirect-call knowledge at all.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoEdges;

impl EdgeOracle for NoEdges {
    fn indirect_targets(&self, _: InstRef) -> SiteTargets {
        SiteTargets::Unknown
    }
    fn indirect_callers(&self, _: &str) -> Vec<InstRef> {
        Vec::new()
    }
    fn may_gain_callers(&self, _: &str) -> bool {
        false
    }
}

/// What a parameter reached with an empty call context resolves to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamPolicy {
    /// Report `Parameter(f, i)`.
    Stop,
    /// Continue into every known caller's argument.
    Callers,
}

/// Externals that neither retain nor write through pointer arguments.
pub const NON_CAPTURING_EXTERNALS: &[&str] = &[
    "free",
    "__rust_dealloc",
    "printf",
    "puts",
    "fprintf",
    "snprintf",
    "sprintf",
    "strlen",
    "memcmp",
    "bcmp",
    "memset",
    "write",
    "read",
    "pread64",
    "pwrite64",
    "open",
    "open64",
    "openat",
    "statx",
    "unlink",
    "unlinkat",
    "send",
    "sendto",
    "fsync",
    "fdatasync",
    "close",
];

/// Heap allocation entry points; their result is a fresh allocation site.
pub const ALLOCATORS: &[&str] = &[
    "malloc",
    "calloc",
    "realloc",
    "aligned_alloc",
    "__rust_alloc",
    "__rust_alloc_zeroed",
    "__rust_realloc",
    "_Znwm",
    "_Znam",
];

/// Shared, immutable analysis state for tracing queries over one module.
pub struct Dataflow<'v, 'm> {
    pub view: &'v ModuleView<'m>,
    pub registry: &'v VTableRegistry,
    pub oracle: &'v dyn EdgeOracle,
    pub memory: MemoryIndex,
}

impl<'v, 'm> Dataflow<'v, 'm> {
    pub fn new(view: &'v ModuleView<'m>, registry: &'v VTableRegistry, oracle: &'v dyn EdgeOracle) -> Self {
        let mut df = Dataflow { view, registry, oracle, memory: MemoryIndex::default() };
        df.memory = MemoryIndex::build(&df);
        df
    }

    /// Whether calling `symbol` returns a fresh heap allocation.
    pub fn is_allocator(&self, symbol: &str) -> bool {
        if ALLOCATORS.contains(&symbol) {
            return true;
        }
        let d = self.view.demangled(symbol).unwrap_or(symbol);
        d == "alloc::alloc::exchange_malloc" || d.ends_with("::exchange_malloc")
    }

    pub fn is_non_capturing(&self, symbol: &str) -> bool {
        symbol.starts_with("llvm.") || NON_CAPTURING_EXTERNALS.contains(&symbol) || self.is_allocator(symbol)
    }

    /// Traces `value` as seen in function `fi`.
    pub fn trace(
        &self,
        fi: usize,
        value: &Value,
        ty: Option<&crate::ir::Type>,
        budget: usize,
        policy: ParamPolicy,
    ) -> Origins {
        let mut t = Tracer::new(self, budget, policy);
        t.eval(fi, value, ty, &[])
    }

    /// Traces argument `arg` of the call-like instruction at `site`.
    pub fn trace_argument(&self, site: InstRef, arg: usize, budget: usize, policy: ParamPolicy) -> Origins {
        match site_args(self.view, site).get(arg) {
            Some(op) => self.trace(site.0, &op.value, Some(&op.ty), budget, policy),
            None => Origins::unknown(),
        }
    }

    /// Traces the callee operand of a call at `site`.
    pub fn trace_callee(&self, site: InstRef, budget: usize, policy: ParamPolicy) -> Origins {
        match self.view.inst(site).kind.call_parts() {
            Some((callee, _, _)) => self.trace(site.0, callee, Some(&crate::ir::Type::ptr()), budget, policy),
            None => Origins::unknown(),
        }
    }
}

/// Arguments of a call, invoke or inline-asm instruction.
pub fn site_args<'a>(view: &ModuleView<'a>, site: InstRef) -> &'a [Operand] {
    match &view.inst(site).kind {
        crate::ir::InstKind::InlineAsm { args, .. } => args,
        k => k.call_parts().map(|(_, a, _)| a).unwrap_or(&[]),
    }
}

/// Origins of `value` in `function`, without any indirect-call knowledge.
///
/// Parameters of `function` are reported as `Parameter`; an exhausted budget
/// yields `Unknown`.
pub fn trace_back(
    view: &ModuleView<'_>,
    registry: &VTableRegistry,
    function: &str,
    value: &Value,
    budget: usize,
) -> BTreeSet<ValueOrigin> {
    let Some(fi) = view.function_index(function) else {
        return BTreeSet::from([ValueOrigin::Unknown]);
    };
    let df = Dataflow::new(view, registry, &NoEdges);
    df.trace(fi, value, None, budget, ParamPolicy::Stop).origins()
}

/// An entry-to-sink path: the call sites from the entry function down to, and
/// including, the sink call.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Slice {
    pub entry: String,
    pub call_chain: Vec<Location>,
    pub sink: Location,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FlowKind {
    Direct,
    Indirect,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaintFact {
    /// (entry function, parameter index)
    pub source: (String, usize),
    /// (sink instruction, argument index)
    pub sink: (Location, usize),
    pub flow_kind: FlowKind,
    pub witness: Slice,
}
