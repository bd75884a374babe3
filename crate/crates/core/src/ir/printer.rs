//! Renders an [`IrModule`] back to textual IR that [`super::parse_module`]
//! accepts. Attributes and debug metadata are not part of the model and are
//! not printed.

use alloc::string::String;
use core::fmt::Write;

use super::types::Type;
use super::*;

/// Quotes an identifier body when it is not a plain LLVM identifier.
pub fn quote_ident(name: &str) -> String {
    let plain = !name.is_empty()
        && (name.bytes().all(|b| b.is_ascii_digit())
            || (!name.as_bytes()[0].is_ascii_digit()
                && name.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'$' | b'.' | b'_'))));
    if plain {
        String::from(name)
    } else {
        let mut s = String::from("\"");
        escape_into(&mut s, name.as_bytes());
        s.push('"');
        s
    }
}

fn escape_into(out: &mut String, bytes: &[u8]) {
    for &b in bytes {
        if b == b'"' || b == b'\\' || !(0x20..0x7f).contains(&b) {
            let _ = write!(out, "\\{b:02X}");
        } else {
            out.push(b as char);
        }
    }
}

fn quoted(bytes: &[u8]) -> String {
    let mut s = String::from("\"");
    escape_into(&mut s, bytes);
    s.push('"');
    s
}

pub fn print_module(m: &IrModule) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "source_filename = {}", quoted(m.name.as_bytes()));
    for (name, def) in &m.type_table {
        match def {
            Some(t) => {
                let _ = writeln!(out, "%{} = type {}", quote_ident(name), t);
            }
            None => {
                let _ = writeln!(out, "%{} = type opaque", quote_ident(name));
            }
        }
    }
    for block in &m.module_asm {
        out.push('\n');
        for line in block.split('\n') {
            let _ = writeln!(out, "module asm {}", quoted(line.as_bytes()));
        }
    }
    out.push('\n');
    for g in &m.globals {
        let linkage =
            if g.initializer.is_none() || g.linkage != Linkage::External { g.linkage.keyword() } else { "dso_local" };
        let _ = write!(
            out,
            "@{} = {} {} {}",
            quote_ident(&g.symbol),
            linkage,
            if g.is_constant { "constant" } else { "global" },
            g.value_type
        );
        if let Some(init) = &g.initializer {
            out.push(' ');
            print_const(&mut out, &init.ty, &init.value);
        }
        out.push('\n');
    }
    for a in &m.aliases {
        let _ = writeln!(
            out,
            "@{} = {} alias {}, ptr @{}",
            quote_ident(&a.symbol),
            a.linkage.keyword(),
            a.value_type,
            quote_ident(&a.target)
        );
    }
    for d in &m.declarations {
        let _ = write!(out, "declare {}{} @{}(", linkage_prefix(d.linkage), d.signature.ret, quote_ident(&d.symbol));
        for (i, p) in d.signature.params.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{p}");
        }
        if d.signature.variadic {
            out.push_str(if d.signature.params.is_empty() { "..." } else { ", ..." });
        }
        out.push_str(")\n");
    }
    for f in &m.functions {
        out.push('\n');
        print_function(&mut out, f);
    }
    out
}

fn linkage_prefix(l: Linkage) -> String {
    if l == Linkage::External {
        String::new()
    } else {
        let mut s = String::from(l.keyword());
        s.push(' ');
        s
    }
}

fn print_function(out: &mut String, f: &FunctionDef) {
    let _ = write!(out, "define {}{} @{}(", linkage_prefix(f.linkage), f.signature.ret, quote_ident(&f.symbol));
    for (i, (ty, name)) in f.signature.params.iter().zip(&f.params).enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{ty} %{}", quote_ident(name));
    }
    if f.signature.variadic {
        out.push_str(if f.params.is_empty() { "..." } else { ", ..." });
    }
    out.push_str(") {\n");
    for b in &f.blocks {
        let _ = writeln!(out, "{}:", quote_ident(&b.label));
        for inst in &b.insts {
            out.push_str("  ");
            if let Some(r) = &inst.result {
                let _ = write!(out, "%{} = ", quote_ident(r));
            }
            print_inst(out, &inst.kind);
            out.push('\n');
        }
    }
    out.push_str("}\n");
}

fn print_value(out: &mut String, ty: &Type, v: &Value) {
    match v {
        Value::Local(n) => {
            let _ = write!(out, "%{}", quote_ident(n));
        }
        Value::Const(c) => print_const(out, ty, c),
    }
}

fn print_operand(out: &mut String, o: &Operand) {
    let _ = write!(out, "{} ", o.ty);
    print_value(out, &o.ty, &o.value);
}

fn print_typed_const(out: &mut String, c: &TypedConst) {
    let _ = write!(out, "{} ", c.ty);
    print_const(out, &c.ty, &c.value);
}

fn print_const(out: &mut String, ty: &Type, c: &Const) {
    match c {
        Const::Int(v) => {
            if *ty == Type::Int(1) && (*v == 0 || *v == 1) {
                out.push_str(if *v == 1 { "true" } else { "false" });
            } else {
                let _ = write!(out, "{v}");
            }
        }
        Const::Float(s) | Const::Opaque(s) => out.push_str(s),
        Const::Null => out.push_str("null"),
        Const::Undef => out.push_str("undef"),
        Const::Poison => out.push_str("poison"),
        Const::Zero => out.push_str("zeroinitializer"),
        Const::None => out.push_str("none"),
        Const::Symbol(s) => {
            let _ = write!(out, "@{}", quote_ident(s));
        }
        Const::Bytes(b) => {
            out.push('c');
            out.push_str(&quoted(b));
        }
        Const::Aggregate(items) => {
            let (open, close) = match ty {
                Type::Struct { packed: true, .. } => ("<{ ", " }>"),
                Type::Array(..) => ("[", "]"),
                Type::Vector(..) => ("<", ">"),
                _ => ("{ ", " }"),
            };
            if items.is_empty() {
                out.push_str(open.trim_end());
                out.push_str(close.trim_start());
                return;
            }
            out.push_str(open);
            for (i, it) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                print_typed_const(out, it);
            }
            out.push_str(close);
        }
        Const::Gep { inbounds, source_ty, base, indices } => {
            let _ = write!(out, "getelementptr {}({}, ", if *inbounds { "inbounds " } else { "" }, source_ty);
            print_typed_const(out, base);
            for i in indices {
                out.push_str(", ");
                print_typed_const(out, i);
            }
            out.push(')');
        }
        Const::Cast { op, value, to } => {
            let _ = write!(out, "{} (", op.keyword());
            print_typed_const(out, value);
            let _ = write!(out, " to {to})");
        }
    }
}

fn print_args(out: &mut String, args: &[Operand]) {
    out.push('(');
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        print_operand(out, a);
    }
    out.push(')');
}

fn print_callee(out: &mut String, ret_ty: &Type, fn_ty: &Option<Type>, callee: &Value, args: &[Operand]) {
    match fn_ty {
        Some(t) => {
            let _ = write!(out, "{t} ");
        }
        None => {
            let _ = write!(out, "{ret_ty} ");
        }
    }
    print_value(out, &Type::ptr(), callee);
    print_args(out, args);
}

fn print_inst(out: &mut String, k: &InstKind) {
    match k {
        InstKind::Call { ret_ty, fn_ty, callee, args } => {
            out.push_str("call ");
            print_callee(out, ret_ty, fn_ty, callee, args);
        }
        InstKind::Invoke { ret_ty, fn_ty, callee, args, normal, unwind } => {
            out.push_str("invoke ");
            print_callee(out, ret_ty, fn_ty, callee, args);
            let _ = write!(out, "\n          to label %{} unwind ", quote_ident(normal));
            if unwind == "caller" {
                out.push_str("to caller");
            } else {
                let _ = write!(out, "label %{}", quote_ident(unwind));
            }
        }
        InstKind::Load { ty, ptr, volatile, invariant } => {
            let _ = write!(out, "load {}{ty}, ", if *volatile { "volatile " } else { "" });
            print_operand(out, ptr);
            if *invariant {
                out.push_str(", !invariant.load !{}");
            }
        }
        InstKind::Store { value, ptr, volatile } => {
            out.push_str(if *volatile { "store volatile " } else { "store " });
            print_operand(out, value);
            out.push_str(", ");
            print_operand(out, ptr);
        }
        InstKind::AddrCalc { inbounds, source_ty, base, indices } => {
            let _ = write!(out, "getelementptr {}{source_ty}, ", if *inbounds { "inbounds " } else { "" });
            print_operand(out, base);
            for i in indices {
                out.push_str(", ");
                print_operand(out, i);
            }
        }
        InstKind::Phi { ty, incoming } => {
            let _ = write!(out, "phi {ty} ");
            for (i, (v, l)) in incoming.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str("[ ");
                print_value(out, ty, v);
                let _ = write!(out, ", %{} ]", quote_ident(l));
            }
        }
        InstKind::Cast { op, value, to } => {
            let _ = write!(out, "{} ", op.keyword());
            print_operand(out, value);
            let _ = write!(out, " to {to}");
        }
        InstKind::LocalAlloc { ty, count } => {
            let _ = write!(out, "alloca {ty}");
            if let Some(c) = count {
                out.push_str(", ");
                print_operand(out, c);
            }
        }
        InstKind::IntOp { op, flags, ty, lhs, rhs } => {
            out.push_str(op.keyword());
            for (on, name) in
                [(flags.nuw, " nuw"), (flags.nsw, " nsw"), (flags.exact, " exact"), (flags.disjoint, " disjoint")]
            {
                if on {
                    out.push_str(name);
                }
            }
            let _ = write!(out, " {ty} ");
            print_value(out, ty, lhs);
            out.push_str(", ");
            print_value(out, ty, rhs);
        }
        InstKind::Compare { pred, ty, lhs, rhs } => {
            let _ = write!(out, "icmp {} {ty} ", pred.keyword());
            print_value(out, ty, lhs);
            out.push_str(", ");
            print_value(out, ty, rhs);
        }
        InstKind::Branch { cond, targets } => match cond {
            None => {
                let _ = write!(out, "br label %{}", quote_ident(&targets[0]));
            }
            Some(c) => {
                out.push_str("br i1 ");
                print_value(out, &Type::Int(1), c);
                let _ = write!(out, ", label %{}, label %{}", quote_ident(&targets[0]), quote_ident(&targets[1]));
            }
        },
        InstKind::Switch { ty, value, default, cases } => {
            let _ = write!(out, "switch {ty} ");
            print_value(out, ty, value);
            let _ = write!(out, ", label %{} [", quote_ident(default));
            for (k, l) in cases {
                let _ = write!(out, "\n    {ty} ");
                print_const(out, ty, &Const::Int(*k));
                let _ = write!(out, ", label %{}", quote_ident(l));
            }
            out.push_str("\n  ]");
        }
        InstKind::Return { value } => match value {
            None => out.push_str("ret void"),
            Some(v) => {
                out.push_str("ret ");
                print_operand(out, v);
            }
        },
        InstKind::Unreachable => out.push_str("unreachable"),
        InstKind::InlineAsm { ret_ty, side_effect, template, constraints, args } => {
            let _ = write!(
                out,
                "call {ret_ty} asm {}{}, {}",
                if *side_effect { "sideeffect " } else { "" },
                quoted(template.as_bytes()),
                quoted(constraints.as_bytes())
            );
            print_args(out, args);
        }
        InstKind::Opaque { text, .. } => out.push_str(text),
    }
}
