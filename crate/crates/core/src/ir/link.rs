//! Whole-program linking of parsed modules.
//!
//! Definitions replace declarations; byte-identical duplicates are dropped
//! (first wins); differing duplicates are an error. Module-local symbols that
//! collide with a symbol already present are renamed `name.N` in the
//! incoming module.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::lexer::rewrite_refs;
use super::types::Type;
use super::*;
use crate::error::IrError;

pub fn link_modules(modules: &[IrModule]) -> Result<IrModule, IrError> {
    let name = modules.iter().map(|m| m.name.as_str()).collect::<Vec<_>>().join("+");
    let mut acc = IrModule::empty(&name);
    for m in modules {
        merge_into(&mut acc, m.clone())?;
    }
    acc.functions.sort_by(|a, b| a.symbol.cmp(&b.symbol));
    acc.declarations.sort_by(|a, b| a.symbol.cmp(&b.symbol));
    acc.globals.sort_by(|a, b| a.symbol.cmp(&b.symbol));
    acc.aliases.sort_by(|a, b| a.symbol.cmp(&b.symbol));
    acc.compute_address_taken();
    Ok(acc)
}

fn local_symbols(m: &IrModule) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    out.extend(m.functions.iter().filter(|f| f.linkage.is_local()).map(|f| f.symbol.clone()));
    out.extend(m.globals.iter().filter(|g| g.linkage.is_local()).map(|g| g.symbol.clone()));
    out.extend(m.aliases.iter().filter(|a| a.linkage.is_local()).map(|a| a.symbol.clone()));
    out
}

fn fresh_name(base: &str, taken: &BTreeSet<String>) -> String {
    (1u64..).map(|n| format!("{base}.{n}")).find(|c| !taken.contains(c)).unwrap_or_else(|| String::from(base))
}

fn merge_into(acc: &mut IrModule, mut incoming: IrModule) -> Result<(), IrError> {
    // Local-linkage collisions: rename whichever side holds the local symbol.
    let acc_syms = acc.symbols();
    let in_syms = incoming.symbols();
    let mut taken: BTreeSet<String> = acc_syms.union(&in_syms).cloned().collect();

    let in_locals = local_symbols(&incoming);
    let mut in_map = BTreeMap::new();
    for s in &in_locals {
        if acc_syms.contains(s) && !identical_symbol(acc, &incoming, s) {
            let new = fresh_name(s, &taken);
            taken.insert(new.clone());
            in_map.insert(s.clone(), new);
        }
    }
    rename_symbols(&mut incoming, &in_map);

    let acc_locals = local_symbols(acc);
    let mut acc_map = BTreeMap::new();
    for s in &acc_locals {
        if in_syms.contains(s) && !in_locals.contains(s) {
            let new = fresh_name(s, &taken);
            taken.insert(new.clone());
            acc_map.insert(s.clone(), new);
        }
    }
    rename_symbols(acc, &acc_map);

    // Named types: identical or opaque definitions merge, conflicts rename.
    let mut type_map = BTreeMap::new();
    for (name, def) in &incoming.type_table {
        match acc.type_table.get(name) {
            None => {}
            Some(existing) if existing == def || def.is_none() => {}
            Some(None) => {}
            Some(Some(_)) => {
                let taken_types: BTreeSet<String> =
                    acc.type_table.keys().chain(incoming.type_table.keys()).cloned().collect();
                type_map.insert(name.clone(), fresh_name(name, &taken_types));
            }
        }
    }
    rename_types(&mut incoming, &type_map);
    for (name, def) in core::mem::take(&mut incoming.type_table) {
        match acc.type_table.get(&name) {
            Some(Some(_)) => {}
            _ => {
                if def.is_some() || !acc.type_table.contains_key(&name) {
                    acc.type_table.insert(name, def);
                }
            }
        }
    }

    for f in incoming.functions {
        if let Some(existing) = acc.functions.iter().find(|g| g.symbol == f.symbol) {
            if existing.same_body(&f) {
                continue;
            }
            return Err(IrError::DuplicateDefinition(f.symbol));
        }
        acc.declarations.retain(|d| d.symbol != f.symbol);
        acc.functions.push(f);
    }
    for d in incoming.declarations {
        let defined = acc.functions.iter().any(|f| f.symbol == d.symbol)
            || acc.declarations.iter().any(|x| x.symbol == d.symbol)
            || acc.aliases.iter().any(|a| a.symbol == d.symbol);
        if !defined {
            acc.declarations.push(d);
        }
    }
    for g in incoming.globals {
        match acc.globals.iter().position(|x| x.symbol == g.symbol) {
            None => acc.globals.push(g),
            Some(i) => {
                let existing = &acc.globals[i];
                match (&existing.initializer, &g.initializer) {
                    (_, None) => {}
                    (None, Some(_)) => acc.globals[i] = g,
                    (Some(a), Some(b)) => {
                        if a != b || existing.value_type != g.value_type {
                            return Err(IrError::DuplicateDefinition(g.symbol));
                        }
                    }
                }
            }
        }
    }
    for a in incoming.aliases {
        match acc.aliases.iter().find(|x| x.symbol == a.symbol) {
            Some(x) if *x == a => {}
            Some(_) => return Err(IrError::DuplicateDefinition(a.symbol)),
            None => {
                acc.declarations.retain(|d| d.symbol != a.symbol);
                acc.aliases.push(a);
            }
        }
    }
    for block in incoming.module_asm {
        acc.module_asm.push(block);
    }
    Ok(())
}

fn identical_symbol(a: &IrModule, b: &IrModule, s: &str) -> bool {
    match (a.function(s), b.function(s)) {
        (Some(x), Some(y)) => return x.same_body(y) && x.linkage == y.linkage,
        (None, None) => {}
        _ => return false,
    }
    match (a.global(s), b.global(s)) {
        (Some(x), Some(y)) => x == y,
        _ => false,
    }
}

/// Renames global symbols throughout a module.
pub fn rename_symbols(m: &mut IrModule, map: &BTreeMap<String, String>) {
    if map.is_empty() {
        return;
    }
    let ren = |s: &mut String| {
        if let Some(n) = map.get(s.as_str()) {
            *s = n.clone();
        }
    };
    for f in &mut m.functions {
        ren(&mut f.symbol);
        for b in &mut f.blocks {
            for inst in &mut b.insts {
                map_inst_values(&mut inst.kind, &mut |v| map_value_symbols(v, map), &mut |t| {
                    rewrite_refs(t, &mut |global, name| if global { map.get(name).cloned() } else { None })
                });
            }
        }
    }
    for d in &mut m.declarations {
        ren(&mut d.symbol);
    }
    for g in &mut m.globals {
        ren(&mut g.symbol);
        if let Some(init) = &mut g.initializer {
            map_const_symbols(&mut init.value, map);
        }
    }
    for a in &mut m.aliases {
        ren(&mut a.symbol);
        ren(&mut a.target);
    }
}

fn map_value_symbols(v: &mut Value, map: &BTreeMap<String, String>) {
    if let Value::Const(c) = v {
        map_const_symbols(c, map);
    }
}

fn map_const_symbols(c: &mut Const, map: &BTreeMap<String, String>) {
    match c {
        Const::Symbol(s) => {
            if let Some(n) = map.get(s.as_str()) {
                *s = n.clone();
            }
        }
        Const::Aggregate(items) => items.iter_mut().for_each(|i| map_const_symbols(&mut i.value, map)),
        Const::Gep { base, indices, .. } => {
            map_const_symbols(&mut base.value, map);
            indices.iter_mut().for_each(|i| map_const_symbols(&mut i.value, map));
        }
        Const::Cast { value, .. } => map_const_symbols(&mut value.value, map),
        Const::Opaque(t) => {
            *t = rewrite_refs(t, &mut |global, name| if global { map.get(name).cloned() } else { None });
        }
        _ => {}
    }
}

/// Applies `fv` to every value operand and `ft` to every verbatim text.
fn map_inst_values(k: &mut InstKind, fv: &mut dyn FnMut(&mut Value), ft: &mut dyn FnMut(&str) -> String) {
    match k {
        InstKind::Call { callee, args, .. } | InstKind::Invoke { callee, args, .. } => {
            fv(callee);
            args.iter_mut().for_each(|a| fv(&mut a.value));
        }
        InstKind::Load { ptr, .. } => fv(&mut ptr.value),
        InstKind::Store { value, ptr, .. } => {
            fv(&mut value.value);
            fv(&mut ptr.value);
        }
        InstKind::AddrCalc { base, indices, .. } => {
            fv(&mut base.value);
            indices.iter_mut().for_each(|i| fv(&mut i.value));
        }
        InstKind::Phi { incoming, .. } => incoming.iter_mut().for_each(|(v, _)| fv(v)),
        InstKind::Cast { value, .. } => fv(&mut value.value),
        InstKind::LocalAlloc { count, .. } => {
            if let Some(c) = count {
                fv(&mut c.value)
            }
        }
        InstKind::IntOp { lhs, rhs, .. } | InstKind::Compare { lhs, rhs, .. } => {
            fv(lhs);
            fv(rhs);
        }
        InstKind::Branch { cond, .. } => {
            if let Some(c) = cond {
                fv(c)
            }
        }
        InstKind::Switch { value, .. } => fv(value),
        InstKind::Return { value } => {
            if let Some(v) = value {
                fv(&mut v.value)
            }
        }
        InstKind::Unreachable => {}
        InstKind::InlineAsm { args, .. } => args.iter_mut().for_each(|a| fv(&mut a.value)),
        InstKind::Opaque { operands, text, .. } => {
            operands.iter_mut().for_each(|v| fv(v));
            *text = ft(text);
        }
    }
}

fn rename_type(t: &mut Type, map: &BTreeMap<String, String>) {
    match t {
        Type::Named(n) => {
            if let Some(x) = map.get(n.as_str()) {
                *n = x.clone();
            }
        }
        Type::Ptr(Some(inner)) | Type::Array(_, inner) | Type::Vector(_, inner) => rename_type(inner, map),
        Type::Struct { fields, .. } => fields.iter_mut().for_each(|f| rename_type(f, map)),
        Type::Function { ret, params, .. } => {
            rename_type(ret, map);
            params.iter_mut().for_each(|p| rename_type(p, map));
        }
        _ => {}
    }
}

fn rename_const_types(c: &mut TypedConst, map: &BTreeMap<String, String>) {
    rename_type(&mut c.ty, map);
    match &mut c.value {
        Const::Aggregate(items) => items.iter_mut().for_each(|i| rename_const_types(i, map)),
        Const::Gep { source_ty, base, indices, .. } => {
            rename_type(source_ty, map);
            rename_const_types(base, map);
            indices.iter_mut().for_each(|i| rename_const_types(i, map));
        }
        Const::Cast { value, to, .. } => {
            rename_const_types(value, map);
            rename_type(to, map);
        }
        _ => {}
    }
}

fn rename_types(m: &mut IrModule, map: &BTreeMap<String, String>) {
    if map.is_empty() {
        return;
    }
    let defs: Vec<(String, Option<Type>)> = core::mem::take(&mut m.type_table).into_iter().collect();
    for (name, mut def) in defs {
        if let Some(t) = &mut def {
            rename_type(t, map);
        }
        let name = map.get(&name).cloned().unwrap_or(name);
        m.type_table.insert(name, def);
    }
    let sig = |s: &mut Signature| {
        rename_type(&mut s.ret, map);
        s.params.iter_mut().for_each(|p| rename_type(p, map));
    };
    for d in &mut m.declarations {
        sig(&mut d.signature);
    }
    for g in &mut m.globals {
        rename_type(&mut g.value_type, map);
        if let Some(init) = &mut g.initializer {
            rename_const_types(init, map);
        }
    }
    for f in &mut m.functions {
        sig(&mut f.signature);
        let locals: BTreeSet<String> = f
            .params
            .iter()
            .cloned()
            .chain(f.blocks.iter().flat_map(|b| b.insts.iter().filter_map(|i| i.result.clone())))
            .collect();
        for b in &mut f.blocks {
            for inst in &mut b.insts {
                rename_inst_types(&mut inst.kind, map, &locals);
            }
        }
    }
}

fn rename_operand(o: &mut Operand, map: &BTreeMap<String, String>) {
    rename_type(&mut o.ty, map);
}

fn rename_inst_types(k: &mut InstKind, map: &BTreeMap<String, String>, locals: &BTreeSet<String>) {
    match k {
        InstKind::Call { ret_ty, fn_ty, args, .. } | InstKind::Invoke { ret_ty, fn_ty, args, .. } => {
            rename_type(ret_ty, map);
            if let Some(t) = fn_ty {
                rename_type(t, map);
            }
            args.iter_mut().for_each(|a| rename_operand(a, map));
        }
        InstKind::Load { ty, ptr, .. } => {
            rename_type(ty, map);
            rename_operand(ptr, map);
        }
        InstKind::Store { value, ptr, .. } => {
            rename_operand(value, map);
            rename_operand(ptr, map);
        }
        InstKind::AddrCalc { source_ty, base, indices, .. } => {
            rename_type(source_ty, map);
            rename_operand(base, map);
            indices.iter_mut().for_each(|i| rename_operand(i, map));
        }
        InstKind::Phi { ty, .. }
        | InstKind::IntOp { ty, .. }
        | InstKind::Compare { ty, .. }
        | InstKind::Switch { ty, .. }
        | InstKind::LocalAlloc { ty, .. } => rename_type(ty, map),
        InstKind::Cast { value, to, .. } => {
            rename_operand(value, map);
            rename_type(to, map);
        }
        InstKind::Return { value: Some(v) } => rename_operand(v, map),
        InstKind::InlineAsm { ret_ty, args, .. } => {
            rename_type(ret_ty, map);
            args.iter_mut().for_each(|a| rename_operand(a, map));
        }
        InstKind::Opaque { ty, text, .. } => {
            if let Some(t) = ty {
                rename_type(t, map);
            }
            *text = rewrite_refs(text, &mut |global, name| {
                if !global && !locals.contains(name) {
                    map.get(name).cloned()
                } else {
                    None
                }
            });
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(name: &str, src: &str) -> IrModule {
        parse_module_with(src, &ParseOptions { name: Some(name.into()), ..Default::default() }).unwrap()
    }

    #[test]
    fn definition_replaces_declaration() {
        let a = parse("a", "declare i32 @f(i32)\ndefine i32 @g() {\n  %r = call i32 @f(i32 1)\n  ret i32 %r\n}");
        let b = parse("b", "define i32 @f(i32 %x) {\n  ret i32 %x\n}");
        let m = link_modules(&[a, b]).unwrap();
        assert_eq!(m.functions.iter().filter(|f| f.symbol == "f").count(), 1);
        assert!(m.declarations.iter().all(|d| d.symbol != "f"));
    }

    #[test]
    fn empty_link() {
        let m = link_modules(&[]).unwrap();
        assert!(m.functions.is_empty() && m.globals.is_empty() && m.declarations.is_empty());
    }

    #[test]
    fn differing_definitions_conflict() {
        let a = parse("a", "define i32 @g() {\n  ret i32 1\n}");
        let b = parse("b", "define i32 @g() {\n  ret i32 2\n}");
        assert_eq!(link_modules(&[a, b]).unwrap_err(), IrError::DuplicateDefinition("g".into()));
    }

    #[test]
    fn identical_definitions_dedupe() {
        let src = "define linkonce_odr i32 @g() {\n  ret i32 1\n}";
        let m = link_modules(&[parse("a", src), parse("b", src)]).unwrap();
        assert_eq!(m.functions.len(), 1);
    }

    #[test]
    fn private_collisions_are_renamed() {
        let a =
            parse("a", "@vt = private constant i64 1\ndefine i64 @fa() {\n  %v = load i64, ptr @vt\n  ret i64 %v\n}");
        let b =
            parse("b", "@vt = private constant i64 2\ndefine i64 @fb() {\n  %v = load i64, ptr @vt\n  ret i64 %v\n}");
        let m = link_modules(&[a, b]).unwrap();
        assert!(m.global("vt").is_some() && m.global("vt.1").is_some());
        let fb = m.function("fb").unwrap();
        let InstKind::Load { ptr, .. } = &fb.blocks[0].insts[0].kind else { panic!() };
        assert_eq!(ptr.value, Value::symbol("vt.1"));
    }

    #[test]
    fn address_taken_after_link() {
        let a = parse("a", "declare void @cb()\n@tbl = global ptr @cb");
        let b = parse("b", "define void @cb() {\n  ret void\n}");
        let m = link_modules(&[a, b]).unwrap();
        assert!(m.function("cb").unwrap().address_taken);
    }
}
