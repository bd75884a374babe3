use alloc::string::String;
use alloc::vec::Vec;

use super::fold::{canonical, fold_binop, fold_cast, fold_compare, to_raw, IntValue};
use super::memory::{Base, Escape};
use super::*;
use crate::ir::{CastOp, Const, Def, InstKind, IntFlags, IntOpKind, Type, TypedConst};

/// Cap on constant combinations folded by one arithmetic node.
const FOLD_PRODUCT_CAP: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Key {
    Val(usize, String, Vec<u64>, Option<InstRef>),
    Mem(Base, Option<i64>, u64, Option<InstRef>),
}

pub(super) struct Tracer<'d, 'v, 'm> {
    df: &'d Dataflow<'v, 'm>,
    budget: usize,
    policy: ParamPolicy,
    /// Call sites descended through, innermost last.
    pub(super) stack: Vec<InstRef>,
    active: Vec<Key>,
    /// Loads through an entry parameter report that parameter (taint mode).
    pub(super) load_through_param: bool,
}

fn add_off(a: Option<i64>, b: Option<i64>) -> Option<i64> {
    Some(a?.checked_add(b?)?)
}

impl<'d, 'v, 'm> Tracer<'d, 'v, 'm> {
    pub(super) fn new(df: &'d Dataflow<'v, 'm>, budget: usize, policy: ParamPolicy) -> Self {
        Tracer { df, budget, policy, stack: Vec::new(), active: Vec::new(), load_through_param: false }
    }

    fn step(&mut self) -> bool {
        if self.budget == 0 {
            return false;
        }
        self.budget -= 1;
        true
    }

    fn bits_of(&self, ty: &Type) -> Option<u32> {
        match self.df.view.layout.resolve(ty, &self.df.view.module.type_table) {
            Type::Int(b) => Some(*b),
            Type::Ptr(_) => Some((self.df.view.layout.pointer_width * 8) as u32),
            _ => None,
        }
    }

    fn size_of(&self, ty: &Type) -> u64 {
        self.df.view.size_of(ty)
    }

    pub(super) fn eval(&mut self, fi: usize, v: &Value, ty: Option<&Type>, proj: &[u64]) -> Origins {
        if !self.step() {
            return Origins::unknown();
        }
        match v {
            Value::Const(c) => self.const_origins(c, ty, proj),
            Value::Local(n) => {
                let key = Key::Val(fi, n.clone(), proj.to_vec(), self.stack.last().copied());
                if self.active.contains(&key) {
                    return Origins::default();
                }
                self.active.push(key);
                let r = match self.df.view.def(fi, n) {
                    None => Origins::unknown(),
                    Some(Def::Param(i)) => self.param(fi, i, proj),
                    Some(Def::Inst(b, i)) => self.inst(fi, b, i, proj),
                };
                self.active.pop();
                r
            }
        }
    }

    fn symbol_origin(&self, s: &str, off: Option<i64>) -> Origins {
        let view = self.df.view;
        let s = view.resolve_alias(s);
        if view.is_function(s) {
            if off == Some(0) {
                return Origins::one(ValueOrigin::FunctionAddress(String::from(s)), Flow::DIRECT);
            }
            return Origins::unknown();
        }
        if view.global(s).is_some() {
            return Origins::one(ValueOrigin::GlobalAddress(String::from(s), off), Flow::DIRECT);
        }
        Origins::unknown()
    }

    fn const_origins(&mut self, c: &Const, ty: Option<&Type>, proj: &[u64]) -> Origins {
        if let Some((&first, rest)) = proj.split_first() {
            return match c {
                Const::Aggregate(items) => match items.get(first as usize) {
                    Some(it) => self.const_origins(&it.value, Some(&it.ty), rest),
                    None => Origins::unknown(),
                },
                Const::Zero | Const::Null => Origins::one(ValueOrigin::Constant(0), Flow::DIRECT),
                _ => Origins::unknown(),
            };
        }
        match c {
            Const::Int(v) => {
                let v = match ty.and_then(|t| self.bits_of(t)) {
                    Some(b) => canonical(to_raw(*v, b), b),
                    None => *v,
                };
                Origins::one(ValueOrigin::Constant(v), Flow::DIRECT)
            }
            Const::Null | Const::Zero => Origins::one(ValueOrigin::Constant(0), Flow::DIRECT),
            Const::Symbol(s) => self.symbol_origin(s, Some(0)),
            Const::Cast { op, value, to } => {
                let inner = self.const_origins(&value.value, Some(&value.ty), &[]);
                self.apply_cast(inner, *op, &value.ty, to)
            }
            Const::Gep { source_ty, base, indices, .. } => {
                let idx: Option<Vec<i64>> = indices
                    .iter()
                    .map(|i| match i.value {
                        Const::Int(v) => i64::try_from(v).ok(),
                        Const::Zero | Const::Null => Some(0),
                        _ => None,
                    })
                    .collect();
                let off = idx.and_then(|idx| self.static_gep(source_ty, &idx));
                let inner = self.const_origins(&base.value, Some(&base.ty), &[]);
                self.apply_gep(inner, off)
            }
            Const::Aggregate(items) => {
                let mut r = Origins::default();
                for it in items {
                    r.extend(self.const_origins(&it.value, Some(&it.ty), &[]));
                }
                r
            }
            _ => Origins::unknown(),
        }
    }

    fn apply_cast(&self, r: Origins, op: CastOp, from: &Type, to: &Type) -> Origins {
        let (fb, tb) = (self.bits_of(from), self.bits_of(to));
        let mut out = Origins { map: Default::default(), pending: r.pending };
        for (o, fl) in r.map {
            match o {
                ValueOrigin::Constant(v) => match (fb, tb) {
                    (Some(fb), Some(tb)) => match fold_cast(op, fb, tb, to_raw(v, fb)) {
                        Some(raw) => out.insert(ValueOrigin::Constant(canonical(raw, tb)), fl),
                        None => out.insert(ValueOrigin::Unknown, fl),
                    },
                    _ => out.insert(ValueOrigin::Unknown, fl),
                },
                other => out.insert(other, fl),
            }
        }
        out
    }

    /// Byte offset of a GEP with constant indices.
    fn static_gep(&self, source_ty: &Type, idx: &[i64]) -> Option<i64> {
        let layout = &self.df.view.layout;
        let types = &self.df.view.module.type_table;
        let (&first, rest) = idx.split_first()?;
        let mut off = first.checked_mul(i64::try_from(self.size_of(source_ty)).ok()?)?;
        let mut cur = source_ty.clone();
        for &i in rest {
            let (o, t) = layout.member(&cur, u64::try_from(i).ok()?, types)?;
            off = off.checked_add(i64::try_from(o).ok()?)?;
            cur = t;
        }
        Some(off)
    }

    fn gep_offset(&mut self, fi: usize, source_ty: &Type, indices: &[Operand]) -> Option<i64> {
        let mut idx = Vec::with_capacity(indices.len());
        for op in indices {
            let v = match &op.value {
                Value::Const(Const::Int(v)) => i64::try_from(*v).ok()?,
                Value::Const(Const::Zero) => 0,
                other => {
                    let r = self.eval(fi, other, Some(&op.ty), &[]);
                    match r.constants() {
                        Some(cs) if cs.len() == 1 => i64::try_from(*cs.iter().next()?).ok()?,
                        _ => return None,
                    }
                }
            };
            idx.push(v);
        }
        self.static_gep(source_ty, &idx)
    }

    fn apply_gep(&self, r: Origins, off: Option<i64>) -> Origins {
        let mut out = Origins { map: Default::default(), pending: r.pending };
        for (o, fl) in r.map {
            match o {
                ValueOrigin::GlobalAddress(s, o) => out.insert(ValueOrigin::GlobalAddress(s, add_off(o, off)), fl),
                ValueOrigin::Allocation { site, offset, heap } => {
                    out.insert(ValueOrigin::Allocation { site, offset: add_off(offset, off), heap }, fl)
                }
                f @ ValueOrigin::FunctionAddress(_) if off == Some(0) => out.insert(f, fl),
                p @ ValueOrigin::Parameter(..) => out.insert(p, Flow { direct: false, ..fl }),
                ValueOrigin::LoadFromUnknown => out.insert(ValueOrigin::LoadFromUnknown, fl),
                _ => out.insert(ValueOrigin::Unknown, fl),
            }
        }
        out
    }

    fn param(&mut self, fi: usize, i: usize, proj: &[u64]) -> Origins {
        let view = self.df.view;
        if let Some(site) = self.stack.pop() {
            let r = match site_args(view, site).get(i) {
                Some(op) => self.eval(site.0, &op.value, Some(&op.ty), proj),
                None => Origins::unknown(),
            };
            self.stack.push(site);
            return r;
        }
        let sym = &view.module.functions[fi].symbol;
        match self.policy {
            ParamPolicy::Stop => Origins::one(ValueOrigin::Parameter(sym.clone(), i), Flow::DIRECT),
            ParamPolicy::Callers => {
                let mut sites: Vec<InstRef> = view.direct_callers.get(sym).cloned().unwrap_or_default();
                sites.extend(self.df.oracle.indirect_callers(sym));
                sites.sort_unstable();
                sites.dedup();
                let mut r = Origins::default();
                for &s in &sites {
                    match site_args(view, s).get(i) {
                        Some(op) => r.extend(self.eval(s.0, &op.value, Some(&op.ty), proj)),
                        None => r.insert(ValueOrigin::Unknown, Flow::DIRECT),
                    }
                }
                if sites.is_empty() {
                    r.insert(ValueOrigin::Parameter(sym.clone(), i), Flow::DIRECT);
                }
                if self.df.oracle.may_gain_callers(sym) {
                    r.pending = true;
                }
                r
            }
        }
    }

    fn member_type(&self, ty: &Type, path: &[u64]) -> Option<Type> {
        let mut cur = ty.clone();
        for &i in path {
            cur = self.df.view.layout.member(&cur, i, &self.df.view.module.type_table)?.1;
        }
        Some(cur)
    }

    fn path_offset(&self, ty: &Type, path: &[u64]) -> Option<(Type, u64)> {
        let mut cur = ty.clone();
        let mut off = 0;
        for &i in path {
            let (o, t) = self.df.view.layout.member(&cur, i, &self.df.view.module.type_table)?;
            off += o;
            cur = t;
        }
        Some((cur, off))
    }

    fn inst(&mut self, fi: usize, b: usize, i: usize, proj: &[u64]) -> Origins {
        let view = self.df.view;
        let inst = &view.module.functions[fi].blocks[b].insts[i];
        let site = (fi, b, i);
        match &inst.kind {
            InstKind::Cast { op, value, to } => {
                let r = self.eval(fi, &value.value, Some(&value.ty), proj);
                if proj.is_empty() {
                    self.apply_cast(r, *op, &value.ty, to)
                } else {
                    r
                }
            }
            InstKind::Phi { ty, incoming } => {
                let mut r = Origins::default();
                for (v, _) in incoming {
                    r.extend(self.eval(fi, v, Some(ty), proj));
                }
                r
            }
            InstKind::Opaque { opcode, ty, operands, indices, .. } => match (opcode.as_str(), operands.as_slice()) {
                ("select", [_, a, b]) => {
                    let mut r = self.eval(fi, a, ty.as_ref(), proj);
                    r.extend(self.eval(fi, b, ty.as_ref(), proj));
                    r
                }
                ("freeze", [a]) => self.eval(fi, a, ty.as_ref(), proj),
                ("extractvalue", [agg]) => {
                    let mut p = indices.clone();
                    p.extend_from_slice(proj);
                    self.eval(fi, agg, ty.as_ref(), &p)
                }
                ("insertvalue", [agg, val]) => {
                    let elem_ty = ty.as_ref().and_then(|t| self.member_type(t, indices));
                    if !proj.is_empty() && proj.starts_with(indices) {
                        self.eval(fi, val, elem_ty.as_ref(), &proj[indices.len()..])
                    } else if indices.starts_with(proj) {
                        let mut r = self.eval(fi, agg, ty.as_ref(), proj);
                        r.extend(self.eval(fi, val, elem_ty.as_ref(), &[]));
                        r
                    } else {
                        self.eval(fi, agg, ty.as_ref(), proj)
                    }
                }
                _ => Origins::unknown(),
            },
            InstKind::LocalAlloc { .. } if proj.is_empty() => Origins::one(
                ValueOrigin::Allocation { site: view.location(site), offset: Some(0), heap: false },
                Flow::DIRECT,
            ),
            InstKind::AddrCalc { source_ty, base, indices, .. } if proj.is_empty() => {
                let off = self.gep_offset(fi, source_ty, indices);
                let r = self.eval(fi, &base.value, Some(&base.ty), &[]);
                self.apply_gep(r, off)
            }
            InstKind::Load { ty, ptr, .. } => self.load(fi, ty, ptr, proj),
            InstKind::IntOp { op, flags, ty, lhs, rhs } => self.int_op(fi, *op, *flags, ty, lhs, rhs),
            InstKind::Compare { pred, ty, lhs, rhs } => {
                let a = self.eval(fi, lhs, Some(ty), &[]);
                let c = self.eval(fi, rhs, Some(ty), &[]);
                let pending = a.pending || c.pending;
                let mut r = Origins { pending, ..Default::default() };
                match (a.constants(), c.constants(), self.bits_of(ty)) {
                    (Some(xs), Some(ys), Some(bits))
                        if !xs.is_empty() && !ys.is_empty() && xs.len() * ys.len() <= FOLD_PRODUCT_CAP =>
                    {
                        for &x in &xs {
                            for &y in &ys {
                                let t = fold_compare(*pred, bits, to_raw(x, bits), to_raw(y, bits));
                                r.insert(ValueOrigin::Constant(t as i128), Flow::DIRECT);
                            }
                        }
                    }
                    _ => r.insert(ValueOrigin::Unknown, Flow::DIRECT),
                }
                r
            }
            InstKind::Call { .. } | InstKind::Invoke { .. } => self.call_result(site, proj),
            _ => Origins::unknown(),
        }
    }

    fn int_op(&mut self, fi: usize, op: IntOpKind, flags: IntFlags, ty: &Type, lhs: &Value, rhs: &Value) -> Origins {
        let a = self.eval(fi, lhs, Some(ty), &[]);
        let b = self.eval(fi, rhs, Some(ty), &[]);
        let mut r = Origins { pending: a.pending || b.pending, ..Default::default() };
        if a.map.is_empty() || b.map.is_empty() {
            // A cycle through arithmetic or a still-pending operand.
            r.insert(ValueOrigin::Unknown, Flow::DIRECT);
            return r;
        }
        if let (Some(xs), Some(ys), Some(bits)) = (a.constants(), b.constants(), self.bits_of(ty)) {
            if xs.len() * ys.len() <= FOLD_PRODUCT_CAP {
                for &x in &xs {
                    for &y in &ys {
                        match fold_binop(op, flags, bits, to_raw(x, bits), to_raw(y, bits)) {
                            Some(v) => r.insert(ValueOrigin::Constant(canonical(v, bits)), Flow::DIRECT),
                            None => r.insert(ValueOrigin::Unknown, Flow::DIRECT),
                        }
                    }
                }
                return r;
            }
        }
        for (o, fl) in a.map.into_iter().chain(b.map) {
            if let ValueOrigin::Parameter(..) = o {
                r.insert(o, Flow { direct: false, ..fl });
            }
        }
        r.insert(ValueOrigin::Unknown, Flow::DIRECT);
        r
    }

    fn call_result(&mut self, site: InstRef, proj: &[u64]) -> Origins {
        let view = self.df.view;
        let Some((callee, _, _)) = view.inst(site).kind.call_parts() else {
            return Origins::unknown();
        };
        if let Some(s) = callee.as_symbol() {
            let s = view.resolve_alias(s);
            if self.df.is_allocator(s) {
                if !proj.is_empty() {
                    return Origins::unknown();
                }
                let loc = view.location(site);
                return Origins::one(ValueOrigin::Allocation { site: loc, offset: Some(0), heap: true }, Flow::DIRECT);
            }
            return match view.function_index(s) {
                Some(cfi) => self.returns(cfi, site, proj),
                None => Origins::unknown(),
            };
        }
        match self.df.oracle.indirect_targets(site) {
            SiteTargets::Resolved(ts) if !ts.is_empty() => {
                let mut r = Origins::default();
                for t in &ts {
                    match view.function_index(t) {
                        Some(cfi) => r.extend(self.returns(cfi, site, proj)),
                        None => r.insert(ValueOrigin::Unknown, Flow::DIRECT),
                    }
                }
                r
            }
            SiteTargets::Pending => Origins::pending(),
            _ => Origins::unknown(),
        }
    }

    fn returns(&mut self, cfi: usize, site: InstRef, proj: &[u64]) -> Origins {
        if self.stack.len() >= MAX_CONTEXT {
            return Origins::unknown();
        }
        let f = &self.df.view.module.functions[cfi];
        self.stack.push(site);
        let mut r = Origins::default();
        for blk in &f.blocks {
            for inst in &blk.insts {
                if let InstKind::Return { value: Some(op) } = &inst.kind {
                    r.extend(self.eval(cfi, &op.value, Some(&op.ty), proj));
                }
            }
        }
        self.stack.pop();
        r
    }

    fn load(&mut self, fi: usize, ty: &Type, ptr: &Operand, proj: &[u64]) -> Origins {
        let (rty, extra) = if proj.is_empty() {
            (ty.clone(), 0)
        } else {
            match self.path_offset(ty, proj) {
                Some(x) => x,
                None => return Origins::unknown(),
            }
        };
        let extra = i64::try_from(extra).ok();
        let ptrs = self.eval(fi, &ptr.value, Some(&ptr.ty), &[]);
        let mut r = Origins { pending: ptrs.pending, ..Default::default() };
        for (o, _) in ptrs.map {
            match o {
                ValueOrigin::GlobalAddress(g, off) => {
                    r.extend(self.read(fi, Base::Global(g), add_off(off, extra), &rty))
                }
                ValueOrigin::Allocation { site, offset, .. } => match self.df.view.resolve_location(&site) {
                    Some(at) => r.extend(self.read(fi, Base::Alloc(at), add_off(offset, extra), &rty)),
                    None => r.insert(ValueOrigin::Unknown, Flow::DIRECT),
                },
                p @ ValueOrigin::Parameter(..) if self.load_through_param => {
                    r.insert(p, Flow { direct: false, via_heap: false })
                }
                ValueOrigin::Parameter(..) | ValueOrigin::Unknown | ValueOrigin::LoadFromUnknown => {
                    r.insert(ValueOrigin::LoadFromUnknown, Flow::DIRECT)
                }
                _ => r.insert(ValueOrigin::Unknown, Flow::DIRECT),
            }
        }
        r
    }

    fn is_heap(&self, base: &Base) -> bool {
        match base {
            Base::Alloc(at) => matches!(self.df.view.inst(*at).kind, InstKind::Call { .. } | InstKind::Invoke { .. }),
            Base::Global(_) => false,
        }
    }

    /// Reads `ty` at `off` of `base`, as seen from function `fi`.
    fn read(&mut self, fi: usize, base: Base, off: Option<i64>, ty: &Type) -> Origins {
        if !self.step() {
            return Origins::unknown();
        }
        let size = self.size_of(ty);
        let key = Key::Mem(base.clone(), off, size, self.stack.last().copied());
        if self.active.contains(&key) {
            return Origins::default();
        }
        self.active.push(key);
        let r = self.read_inner(fi, &base, off, ty, size);
        self.active.pop();
        let heap = self.is_heap(&base);
        let keep_direct = matches!(base, Base::Alloc(at) if self.df.memory.promotable.contains(&at));
        r.map_flow(|_, fl| Flow { direct: fl.direct && keep_direct, via_heap: fl.via_heap || heap })
    }

    fn read_inner(&mut self, fi: usize, base: &Base, off: Option<i64>, ty: &Type, size: u64) -> Origins {
        let df = self.df;
        let mut r = Origins::default();
        match base {
            Base::Global(g) => {
                if let Some(o) = off.and_then(|o| u64::try_from(o).ok()) {
                    if let Some((rec, slot)) = df.registry.locate(g, o) {
                        let origin = match slot {
                            1 => ValueOrigin::Constant(rec.size_bytes as i128),
                            2 => ValueOrigin::Constant(rec.align_bytes as i128),
                            s => ValueOrigin::VTableSlot(g.clone(), s),
                        };
                        return Origins::one(origin, Flow::DIRECT);
                    }
                }
                let Some(gv) = df.view.global(g) else {
                    return Origins::unknown();
                };
                match &gv.initializer {
                    Some(init) => r.extend(self.const_read(init, off, size)),
                    None => r.insert(ValueOrigin::LoadFromUnknown, Flow::DIRECT),
                }
                if !gv.is_constant {
                    self.stored(fi, base, off, ty, &mut r);
                    if df.memory.escape(base) == Escape::Yes {
                        r.insert(ValueOrigin::LoadFromUnknown, Flow::DIRECT);
                    }
                }
            }
            Base::Alloc(_) => {
                let found = self.stored(fi, base, off, ty, &mut r);
                match df.memory.escape(base) {
                    Escape::Yes => r.insert(ValueOrigin::LoadFromUnknown, Flow::DIRECT),
                    Escape::PendingOnly => r.pending = true,
                    Escape::No if !found => r.insert(ValueOrigin::LoadFromUnknown, Flow::DIRECT),
                    Escape::No => {}
                }
            }
        }
        r
    }

    /// Call context under which a store in function `store_fi` is evaluated.
    fn frame_for(&self, store_fi: usize, cur_fi: usize) -> Vec<InstRef> {
        if store_fi == cur_fi {
            return self.stack.clone();
        }
        match self.stack.iter().rposition(|s| s.0 == store_fi) {
            Some(j) => self.stack[..j].to_vec(),
            None => Vec::new(),
        }
    }

    /// Adds values of stores and copies overlapping the read; returns whether any did.
    fn stored(&mut self, fi: usize, base: &Base, off: Option<i64>, ty: &Type, r: &mut Origins) -> bool {
        let df = self.df;
        let mut found = false;
        let size = self.size_of(ty);
        for e in df.memory.stores.get(base).into_iter().flatten() {
            let Some(paths) = self.overlap(e.off, &e.ty, off, ty) else { continue };
            found = true;
            if paths.is_empty() {
                r.insert(ValueOrigin::Unknown, Flow::DIRECT);
            }
            for p in paths {
                let frame = self.frame_for(e.at.0, fi);
                let saved = core::mem::replace(&mut self.stack, frame);
                r.extend(self.eval(e.at.0, &e.value, Some(&e.ty), &p));
                self.stack = saved;
            }
        }
        for c in df.memory.copies.get(base).into_iter().flatten() {
            let src_off = match (c.dst_off, c.len, off) {
                (Some(d), Some(len), Some(o)) => {
                    let len = i64::try_from(len).unwrap_or(i64::MAX);
                    let s = i64::try_from(size).unwrap_or(i64::MAX);
                    if o + s <= d || o >= d.saturating_add(len) {
                        continue;
                    }
                    if o < d || o + s > d.saturating_add(len) {
                        found = true;
                        r.insert(ValueOrigin::Unknown, Flow::DIRECT);
                        continue;
                    }
                    add_off(c.src_off, Some(o - d))
                }
                _ => None,
            };
            found = true;
            r.extend(self.read(fi, c.src.clone(), src_off, ty));
        }
        found
    }

    /// Member paths of a store of `sty` at `s` that a read of `rty` at `o`
    /// observes. `None`: disjoint; empty: overlapping but not decomposable.
    fn overlap(&self, s: Option<i64>, sty: &Type, o: Option<i64>, rty: &Type) -> Option<Vec<Vec<u64>>> {
        let ss = i64::try_from(self.size_of(sty)).ok()?;
        let rs = i64::try_from(self.size_of(rty)).ok()?;
        match (s, o) {
            (Some(s), Some(o)) => {
                if o + rs <= s || s + ss <= o {
                    return None;
                }
                if o < s || o + rs > s + ss {
                    return Some(Vec::new());
                }
                Some(self.path_at(sty, (o - s) as u64, rs as u64).into_iter().collect())
            }
            _ => {
                let mut out = Vec::new();
                self.paths_of_size(sty, rs as u64, &mut Vec::new(), &mut out);
                Some(out)
            }
        }
    }

    fn path_at(&self, ty: &Type, mut rel: u64, size: u64) -> Option<Vec<u64>> {
        let layout = &self.df.view.layout;
        let types = &self.df.view.module.type_table;
        let mut cur = ty.clone();
        let mut path = Vec::new();
        for _ in 0..32 {
            if rel == 0 && self.size_of(&cur) == size {
                return Some(path);
            }
            let (i, start, t) = layout.member_at(&cur, rel, types)?;
            path.push(i);
            rel -= start;
            cur = t;
        }
        None
    }

    fn paths_of_size(&self, ty: &Type, size: u64, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if out.len() >= 64 || prefix.len() > 8 {
            return;
        }
        if self.size_of(ty) == size {
            out.push(prefix.clone());
            return;
        }
        let layout = &self.df.view.layout;
        let types = &self.df.view.module.type_table;
        let n = match layout.resolve(ty, types) {
            Type::Struct { fields, .. } => fields.len() as u64,
            Type::Array(n, _) | Type::Vector(n, _) => (*n).min(64),
            _ => 0,
        };
        for i in 0..n {
            if let Some((_, t)) = layout.member(ty, i, types) {
                prefix.push(i);
                self.paths_of_size(&t, size, prefix, out);
                prefix.pop();
            }
        }
    }

    /// Origins of a `size`-byte read at `off` inside a constant initializer.
    fn const_read(&mut self, init: &TypedConst, off: Option<i64>, size: u64) -> Origins {
        let mut r = match off {
            Some(o) => match u64::try_from(o) {
                Ok(o) => self.const_read_at(init, o, size),
                Err(_) => Origins::unknown(),
            },
            None => {
                let mut r = Origins::default();
                self.const_leaves(init, size, &mut r);
                if r.map.is_empty() {
                    r.insert(ValueOrigin::Unknown, Flow::DIRECT);
                }
                r
            }
        };
        r = r.map_flow(|_, fl| Flow { direct: false, ..fl });
        r
    }

    fn const_read_at(&mut self, tc: &TypedConst, rel: u64, size: u64) -> Origins {
        if rel == 0 && self.size_of(&tc.ty) == size {
            return self.const_origins(&tc.value, Some(&tc.ty), &[]);
        }
        match &tc.value {
            Const::Aggregate(items) => {
                let types = &self.df.view.module.type_table;
                match self.df.view.layout.member_at(&tc.ty, rel, types) {
                    Some((i, start, _)) => match items.get(i as usize) {
                        Some(item) => self.const_read_at(item, rel - start, size),
                        None => Origins::unknown(),
                    },
                    None => Origins::unknown(),
                }
            }
            Const::Zero | Const::Null => Origins::one(ValueOrigin::Constant(0), Flow::DIRECT),
            Const::Bytes(bs) if size <= 16 && size > 0 => {
                let (lo, hi) = (rel as usize, (rel + size) as usize);
                match bs.get(lo..hi) {
                    Some(chunk) => {
                        let raw = chunk.iter().rev().fold(0u128, |acc, b| (acc << 8) | *b as u128);
                        let bits = (size * 8) as u32;
                        Origins::one(ValueOrigin::Constant(canonical(raw, bits)), Flow::DIRECT)
                    }
                    None => Origins::unknown(),
                }
            }
            _ => Origins::unknown(),
        }
    }

    fn const_leaves(&mut self, tc: &TypedConst, size: u64, r: &mut Origins) {
        if self.size_of(&tc.ty) == size {
            r.extend(self.const_origins(&tc.value, Some(&tc.ty), &[]));
            return;
        }
        if let Const::Aggregate(items) = &tc.value {
            for it in items {
                self.const_leaves(it, size, r);
            }
        }
    }
}

/// Folds `value` in `function` using SSA definitions only.
///
/// Absent when any leaf is not an integer constant, or the result is poison.
pub fn const_eval(view: &ModuleView<'_>, function: &str, value: &Value, ty: &Type) -> Option<IntValue> {
    const_eval_local(view, view.function_index(function)?, value, ty)
}

pub(crate) fn const_eval_local(view: &ModuleView<'_>, fi: usize, value: &Value, ty: &Type) -> Option<IntValue> {
    ConstEval { view, fi, visiting: Vec::new() }.eval(value, ty)
}

struct ConstEval<'a, 'm> {
    view: &'a ModuleView<'m>,
    fi: usize,
    visiting: Vec<String>,
}

impl ConstEval<'_, '_> {
    fn bits(&self, ty: &Type) -> Option<u32> {
        match self.view.layout.resolve(ty, &self.view.module.type_table) {
            Type::Int(b) => Some(*b),
            Type::Ptr(_) => Some((self.view.layout.pointer_width * 8) as u32),
            _ => None,
        }
    }

    fn constant(&mut self, c: &Const, ty: &Type) -> Option<IntValue> {
        let bits = self.bits(ty)?;
        match c {
            Const::Int(v) => Some(IntValue::new(bits, *v)),
            Const::Null | Const::Zero => Some(IntValue { bits, raw: 0 }),
            Const::Cast { op, value, to } => {
                let inner = self.constant(&value.value, &value.ty)?;
                let tb = self.bits(to)?;
                Some(IntValue { bits: tb, raw: fold_cast(*op, inner.bits, tb, inner.raw)? })
            }
            _ => None,
        }
    }

    fn eval(&mut self, v: &Value, ty: &Type) -> Option<IntValue> {
        let name = match v {
            Value::Const(c) => return self.constant(c, ty),
            Value::Local(n) => n,
        };
        if self.visiting.len() > 4096 || self.visiting.contains(name) {
            return None;
        }
        let Some(Def::Inst(b, i)) = self.view.def(self.fi, name) else {
            return None;
        };
        self.visiting.push(name.clone());
        let kind = &self.view.module.functions[self.fi].blocks[b].insts[i].kind;
        let r = self.eval_kind(kind);
        self.visiting.pop();
        r
    }

    fn eval_kind(&mut self, kind: &InstKind) -> Option<IntValue> {
        match kind {
            InstKind::Cast { op, value, to } => {
                let inner = self.eval(&value.value, &value.ty)?;
                let tb = self.bits(to)?;
                Some(IntValue { bits: tb, raw: fold_cast(*op, inner.bits, tb, inner.raw)? })
            }
            InstKind::IntOp { op, flags, ty, lhs, rhs } => {
                let a = self.eval(lhs, ty)?;
                let b = self.eval(rhs, ty)?;
                let bits = self.bits(ty)?;
                Some(IntValue { bits, raw: fold_binop(*op, *flags, bits, a.raw, b.raw)? })
            }
            InstKind::Compare { pred, ty, lhs, rhs } => {
                let a = self.eval(lhs, ty)?;
                let b = self.eval(rhs, ty)?;
                Some(IntValue { bits: 1, raw: fold_compare(*pred, a.bits, a.raw, b.raw) as u128 })
            }
            InstKind::Phi { ty, incoming } => {
                let mut out: Option<IntValue> = None;
                for (v, _) in incoming {
                    let x = self.eval(v, ty)?;
                    if out.is_some_and(|o| o != x) {
                        return None;
                    }
                    out = Some(x);
                }
                out
            }
            InstKind::Opaque { opcode, ty: Some(ty), operands, .. } => match (opcode.as_str(), operands.as_slice()) {
                ("select", [c, a, b]) => {
                    let c = self.eval(c, &Type::Int(1))?;
                    self.eval(if c.raw & 1 == 1 { a } else { b }, ty)
                }
                ("freeze", [a]) => self.eval(a, ty),
                _ => None,
            },
            _ => None,
        }
    }
}
