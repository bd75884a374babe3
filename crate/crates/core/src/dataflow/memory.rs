use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use super::trace::{const_eval_local, Tracer};
use super::*;
use crate::ir::{InstKind, KindClass, Type};

/// Rounds of store-address tracing; each round can see through memory
/// indexed by the previous one.
const INDEX_ROUNDS: usize = 4;

/// An abstract memory object.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Base {
    Global(String),
    /// Stack slot or heap allocator call.
    Alloc(InstRef),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreEntry {
    pub off: Option<i64>,
    pub ty: Type,
    pub value: Value,
    pub at: InstRef,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CopyEntry {
    pub dst_off: Option<i64>,
    pub src: Base,
    pub src_off: Option<i64>,
    pub len: Option<u64>,
    pub at: InstRef,
}

/// Whether code outside the analysed module may read or write an object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub enum Escape {
    #[default]
    No,
    /// Only through call sites that are not resolved yet.
    PendingOnly,
    Yes,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemoryIndex {
    pub stores: BTreeMap<Base, Vec<StoreEntry>>,
    pub copies: BTreeMap<Base, Vec<CopyEntry>>,
    pub escapes: BTreeMap<Base, Escape>,
    /// Scalar stack slots only ever loaded and stored whole (register-like).
    pub promotable: BTreeSet<InstRef>,
    /// Stores whose address could not be traced to any object.
    pub wild_stores: usize,
}

impl MemoryIndex {
    pub fn escape(&self, base: &Base) -> Escape {
        self.escapes.get(base).copied().unwrap_or_default()
    }

    pub(super) fn build(df: &Dataflow<'_, '_>) -> MemoryIndex {
        let mut cur = MemoryIndex { promotable: promotable_slots(df.view), ..Default::default() };
        for _ in 0..INDEX_ROUNDS {
            let probe = Dataflow { view: df.view, registry: df.registry, oracle: df.oracle, memory: cur.clone() };
            let next = collect(&probe, cur.promotable.clone());
            if next == cur {
                break;
            }
            cur = next;
        }
        cur
    }
}

fn is_scalar(ty: &Type) -> bool {
    matches!(ty, Type::Int(_) | Type::Ptr(_) | Type::Float(_))
}

fn promotable_slots(view: &ModuleView<'_>) -> BTreeSet<InstRef> {
    let mut out = BTreeSet::new();
    for (fi, f) in view.module.functions.iter().enumerate() {
        let idx = &view.index[fi];
        for (b, i, inst) in f.instructions() {
            let (InstKind::LocalAlloc { ty, count: None }, Some(name)) = (&inst.kind, &inst.result) else { continue };
            if !is_scalar(ty) {
                continue;
            }
            let size = view.size_of(ty);
            let ok = idx.uses.get(name).into_iter().flatten().all(|&(ub, ui)| match &f.blocks[ub].insts[ui].kind {
                InstKind::Load { ty: lt, ptr, .. } => ptr.value.as_local() == Some(name) && view.size_of(lt) == size,
                InstKind::Store { value, ptr, .. } => {
                    ptr.value.as_local() == Some(name)
                        && value.value.as_local() != Some(name)
                        && view.size_of(&value.ty) == size
                }
                _ => false,
            });
            if ok {
                out.insert((fi, b, i));
            }
        }
    }
    out
}

fn bases(df: &Dataflow<'_, '_>, o: &Origins) -> (Vec<(Base, Option<i64>)>, bool) {
    let mut out = Vec::new();
    let mut wild = false;
    for origin in o.map.keys() {
        match origin {
            ValueOrigin::GlobalAddress(g, off) => out.push((Base::Global(g.clone()), *off)),
            ValueOrigin::Allocation { site, offset, .. } => match df.view.resolve_location(site) {
                Some(at) => out.push((Base::Alloc(at), *offset)),
                None => wild = true,
            },
            _ => wild = true,
        }
    }
    (out, wild)
}

fn is_copy(symbol: &str) -> bool {
    symbol.starts_with("llvm.memcpy") || symbol.starts_with("llvm.memmove") || symbol == "memcpy" || symbol == "memmove"
}

fn collect(df: &Dataflow<'_, '_>, promotable: BTreeSet<InstRef>) -> MemoryIndex {
    let view = df.view;
    let mut idx = MemoryIndex { promotable, ..Default::default() };
    let trace = |fi: usize, op: &Operand| -> Origins {
        let mut t = Tracer::new(df, INDEX_BUDGET, ParamPolicy::Callers);
        t.eval(fi, &op.value, Some(&op.ty), &[])
    };
    let mark = |idx: &mut MemoryIndex, o: &Origins, level: Escape| {
        for (b, _) in bases(df, o).0 {
            let e = idx.escapes.entry(b).or_default();
            *e = (*e).max(level);
        }
    };
    for (fi, f) in view.module.functions.iter().enumerate() {
        for (b, i, inst) in f.instructions() {
            let at = (fi, b, i);
            match &inst.kind {
                InstKind::Store { value, ptr, .. } => {
                    let (bs, wild) = bases(df, &trace(fi, ptr));
                    if wild && bs.is_empty() {
                        idx.wild_stores += 1;
                    }
                    for (base, off) in bs {
                        idx.stores.entry(base).or_default().push(StoreEntry {
                            off,
                            ty: value.ty.clone(),
                            value: value.value.clone(),
                            at,
                        });
                    }
                }
                InstKind::InlineAsm { args, .. } => {
                    for a in args.iter().filter(|a| a.ty.kind_class() == KindClass::Address) {
                        let o = trace(fi, a);
                        mark(&mut idx, &o, Escape::Yes);
                    }
                }
                InstKind::Call { callee, args, .. } | InstKind::Invoke { callee, args, .. } => {
                    let level = match callee.as_symbol().map(|s| view.resolve_alias(s)) {
                        Some(s) if is_copy(s) && args.len() >= 3 => {
                            let (dst, _) = bases(df, &trace(fi, &args[0]));
                            let (src, _) = bases(df, &trace(fi, &args[1]));
                            let len = const_eval_local(view, fi, &args[2].value, &args[2].ty)
                                .and_then(|v| u64::try_from(v.unsigned()).ok());
                            for (d, doff) in &dst {
                                for (s, soff) in &src {
                                    idx.copies.entry(d.clone()).or_default().push(CopyEntry {
                                        dst_off: *doff,
                                        src: s.clone(),
                                        src_off: *soff,
                                        len,
                                        at,
                                    });
                                }
                            }
                            Escape::No
                        }
                        Some(s) if view.function(s).is_some() || df.is_non_capturing(s) => Escape::No,
                        Some(_) => Escape::Yes,
                        None => match df.oracle.indirect_targets(at) {
                            SiteTargets::Resolved(ts) => {
                                if ts.iter().any(|t| view.function(t).is_none() && !df.is_non_capturing(t)) {
                                    Escape::Yes
                                } else {
                                    Escape::No
                                }
                            }
                            SiteTargets::Pending => Escape::PendingOnly,
                            SiteTargets::Unknown => Escape::Yes,
                        },
                    };
                    if level != Escape::No {
                        for a in args.iter().filter(|a| a.ty.kind_class() == KindClass::Address) {
                            let o = trace(fi, a);
                            mark(&mut idx, &o, level);
                        }
                    }
                }
                _ => {}
            }
        }
    }
    idx
}
