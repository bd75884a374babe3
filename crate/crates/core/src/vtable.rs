//! Discovery of trait-object dispatch tables among constant globals.
//!
//! A table is recognised purely by shape: a drop slot (function address or
//! null), two pointer-width integers (size, power-of-two alignment) and a
//! contiguous run of function addresses. Symbol names only contribute the
//! trait hint.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::ir::{demangle, CastOp, Const, DataLayout, IrModule, Type, TypedConst};

/// First method slot; slots 0..3 hold drop, size and alignment.
pub const FIRST_METHOD_SLOT: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Confidence {
    Structural,
    StructuralPlusName,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VTableRecord {
    pub global_symbol: String,
    /// Byte offset of the table inside the global (non-zero for fused statics).
    pub base_offset: u64,
    pub trait_hint: Option<String>,
    /// `None` when the producer emitted a null drop slot (no drop glue).
    pub drop_fn: Option<String>,
    pub size_bytes: u64,
    pub align_bytes: u64,
    pub methods: Vec<(u32, String)>,
    pub confidence: Confidence,
}

impl VTableRecord {
    pub fn slot(&self, slot: u32) -> Option<&str> {
        if slot == 0 {
            return self.drop_fn.as_deref();
        }
        let i = slot.checked_sub(FIRST_METHOD_SLOT)? as usize;
        self.methods.get(i).map(|(_, s)| s.as_str())
    }

    /// Byte span occupied by the table inside its global.
    pub fn span(&self, pointer_width: u64) -> (u64, u64) {
        let end = self.base_offset + (FIRST_METHOD_SLOT as u64 + self.methods.len() as u64) * pointer_width;
        (self.base_offset, end)
    }
}

impl fmt::Display for VTableRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "@{}+{} trait={} drop={} size={} align={} confidence={:?} methods=[",
            self.global_symbol,
            self.base_offset,
            self.trait_hint.as_deref().unwrap_or("-"),
            self.drop_fn.as_deref().unwrap_or("null"),
            self.size_bytes,
            self.align_bytes,
            self.confidence
        )?;
        for (i, (slot, m)) in self.methods.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{slot}:{m}")?;
        }
        f.write_str("]")
    }
}

/// Immutable set of discovered tables with symbol lookup.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VTableRegistry {
    pub records: Vec<VTableRecord>,
    pub pointer_width: u64,
    pub diagnostics: Vec<String>,
    by_symbol: BTreeMap<String, Vec<usize>>,
}

impl VTableRegistry {
    pub fn build(module: &IrModule) -> Self {
        Self::build_with(module, DataLayout::default())
    }

    pub fn build_with(module: &IrModule, layout: DataLayout) -> Self {
        let mut diagnostics = Vec::new();
        let records = scan(module, layout, &mut diagnostics);
        let mut by_symbol: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            by_symbol.entry(r.global_symbol.clone()).or_default().push(i);
        }
        VTableRegistry { records, pointer_width: layout.pointer_width, diagnostics, by_symbol }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, global_symbol: &str) -> bool {
        self.by_symbol.contains_key(global_symbol)
    }

    pub fn records_of(&self, global_symbol: &str) -> impl Iterator<Item = &VTableRecord> {
        self.by_symbol.get(global_symbol).into_iter().flat_map(move |ix| ix.iter().map(move |&i| &self.records[i]))
    }

    /// Table containing `byte_offset` of `global_symbol`, with the slot index there.
    pub fn locate(&self, global_symbol: &str, byte_offset: u64) -> Option<(&VTableRecord, u32)> {
        let pw = self.pointer_width.max(1);
        self.records_of(global_symbol).find_map(|r| {
            let (lo, hi) = r.span(pw);
            if byte_offset < lo || byte_offset >= hi || (byte_offset - lo) % pw != 0 {
                return None;
            }
            Some((r, ((byte_offset - lo) / pw) as u32))
        })
    }

    pub fn lookup_offset(&self, global_symbol: &str, byte_offset: u64) -> Option<&str> {
        let (r, slot) = self.locate(global_symbol, byte_offset)?;
        r.slot(slot)
    }
}

/// Discovers dispatch tables, sorted by global symbol.
pub fn scan_vtables(module: &IrModule) -> Vec<VTableRecord> {
    scan(module, DataLayout::default(), &mut Vec::new())
}

/// Method at `slot` of the first table in `global_symbol`; slot 0 is the drop function.
pub fn lookup_slot<'r>(registry: &'r VTableRegistry, global_symbol: &str, slot: u32) -> Option<&'r str> {
    registry.records_of(global_symbol).next()?.slot(slot)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Byte(u8),
    Unknown,
}

/// Byte image of a constant initializer with symbol addresses kept aside.
struct Image {
    bytes: Vec<Cell>,
    addrs: BTreeMap<u64, String>,
    /// (start, size) of every aggregate node, outermost first.
    aggregates: Vec<(u64, u64)>,
}

impl Image {
    fn build(init: &TypedConst, layout: &DataLayout, module: &IrModule) -> Self {
        let size = layout.size_of(&init.ty, &module.type_table) as usize;
        let mut img = Image { bytes: alloc::vec![Cell::Unknown; size], addrs: BTreeMap::new(), aggregates: Vec::new() };
        img.fill(init, 0, layout, module);
        img
    }

    fn write_int(&mut self, at: u64, width_bytes: u64, v: i128) {
        for k in 0..width_bytes {
            if let Some(c) = self.bytes.get_mut((at + k) as usize) {
                *c = Cell::Byte(((v >> (8 * k.min(15))) & 0xff) as u8);
            }
        }
    }

    fn fill(&mut self, c: &TypedConst, at: u64, layout: &DataLayout, module: &IrModule) {
        let types = &module.type_table;
        let size = layout.size_of(&c.ty, types);
        match &c.value {
            Const::Int(v) => self.write_int(at, size, *v),
            Const::Null | Const::Zero => self.write_int(at, size, 0),
            Const::Bytes(bs) => {
                for (k, b) in bs.iter().enumerate() {
                    if let Some(cell) = self.bytes.get_mut(at as usize + k) {
                        *cell = Cell::Byte(*b);
                    }
                }
            }
            Const::Aggregate(items) => {
                self.aggregates.push((at, size));
                let resolved = layout.resolve(&c.ty, types).clone();
                for (i, item) in items.iter().enumerate() {
                    let off = match &resolved {
                        Type::Struct { .. } => layout.member(&resolved, i as u64, types).map(|(o, _)| o),
                        Type::Array(_, el) | Type::Vector(_, el) => Some(i as u64 * layout.size_of(el, types)),
                        _ => None,
                    };
                    if let Some(off) = off {
                        self.fill(item, at + off, layout, module);
                    }
                }
            }
            Const::Cast { op: CastOp::PtrToInt | CastOp::IntToPtr, value, .. }
                if matches!(value.value, Const::Int(_) | Const::Null) =>
            {
                let v = if let Const::Int(v) = value.value { v } else { 0 };
                self.write_int(at, size, v)
            }
            other => {
                if let Some(sym) = address_of(other) {
                    if size == layout.pointer_width {
                        self.addrs.insert(at, String::from(sym));
                    }
                }
            }
        }
    }

    fn word(&self, at: u64, pw: u64) -> Word<'_> {
        if let Some(s) = self.addrs.get(&at) {
            return Word::Addr(s);
        }
        let mut v: u64 = 0;
        for k in 0..pw {
            match self.bytes.get((at + k) as usize) {
                Some(Cell::Byte(b)) => v |= (*b as u64) << (8 * k),
                _ => return Word::Other,
            }
        }
        if self.addrs.range(at..at + pw).next().is_some() {
            return Word::Other;
        }
        Word::Int(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Word<'a> {
    Addr(&'a str),
    Int(u64),
    Other,
}

/// Symbol whose address a constant denotes (possibly through casts or a zero-offset GEP).
fn address_of(c: &Const) -> Option<&str> {
    match c {
        Const::Symbol(s) => Some(s),
        Const::Cast { op: CastOp::BitCast | CastOp::AddrSpaceCast, value, .. } => address_of(&value.value),
        Const::Gep { base, indices, .. } if indices.iter().all(|i| matches!(i.value, Const::Int(0) | Const::Zero)) => {
            address_of(&base.value)
        }
        _ => None,
    }
}

fn scan(module: &IrModule, layout: DataLayout, diagnostics: &mut Vec<String>) -> Vec<VTableRecord> {
    let pw = layout.pointer_width.max(1);
    let is_fn = |s: &str| module.function(s).is_some() || module.declaration(s).is_some();
    let mut out = Vec::new();
    for g in module.globals.iter().filter(|g| g.is_constant) {
        let Some(init) = &g.initializer else { continue };
        let img = Image::build(init, &layout, module);
        let mut starts: Vec<(u64, u64)> = Vec::new();
        starts.push((0, img.bytes.len() as u64));
        starts.extend(img.aggregates.iter().copied());
        starts.sort();
        starts.dedup_by_key(|s| s.0);
        let mut covered_until = 0u64;
        for (start, extent) in starts {
            if start < covered_until || start % pw != 0 {
                continue;
            }
            let end = start + extent;
            let drop_fn = match img.word(start, pw) {
                Word::Addr(s) if is_fn(s) => Some(String::from(s)),
                Word::Int(0) => None,
                _ => continue,
            };
            let (Word::Int(size), Word::Int(align)) = (img.word(start + pw, pw), img.word(start + 2 * pw, pw)) else {
                continue;
            };
            if !align.is_power_of_two() {
                continue;
            }
            let mut methods = Vec::new();
            let mut at = start + 3 * pw;
            while at + pw <= end {
                let Word::Addr(s) = img.word(at, pw) else { break };
                if is_fn(s) {
                    methods.push((FIRST_METHOD_SLOT + methods.len() as u32, String::from(s)));
                } else if module.global(s).is_some() {
                    diagnostics.push(format!(
                        "@{}: slot {} holds the address of @{} (nested table), recorded as method",
                        g.symbol,
                        FIRST_METHOD_SLOT as usize + methods.len(),
                        s
                    ));
                    methods.push((FIRST_METHOD_SLOT + methods.len() as u32, String::from(s)));
                } else {
                    break;
                }
                at += pw;
            }
            if methods.is_empty() {
                continue;
            }
            covered_until = at;
            let (trait_hint, confidence) = match name_hint(&g.symbol) {
                Some(t) => (Some(t), Confidence::StructuralPlusName),
                None => (method_trait(&methods), Confidence::Structural),
            };
            out.push(VTableRecord {
                global_symbol: g.symbol.clone(),
                base_offset: start,
                trait_hint,
                drop_fn,
                size_bytes: size,
                align_bytes: align,
                methods,
                confidence,
            });
        }
    }
    out.sort_by(|a, b| (&a.global_symbol, a.base_offset).cmp(&(&b.global_symbol, b.base_offset)));
    out
}

fn has_vtable_marker(demangled: &str) -> bool {
    demangled.contains("{{vtable}}")
        || demangled.contains("{vtable}")
        || demangled.rsplit("::").next().is_some_and(|seg| seg == "vtable" || seg.starts_with("vtable."))
}

/// Trait named by a marked table symbol such as `<T as path::Trait>::{{vtable}}`.
fn name_hint(symbol: &str) -> Option<String> {
    let d = demangle(symbol);
    if !has_vtable_marker(&d) {
        return None;
    }
    qualified_trait(&d).or_else(|| {
        // `path::Trait::{{vtable}}` without a qualified self type.
        let head = d.rsplit_once("::")?.0;
        (!head.is_empty()).then(|| head.to_string())
    })
}

/// The `Trait` of a leading `<Self as Trait>` qualified path.
pub(crate) fn qualified_trait(demangled: &str) -> Option<String> {
    let body = demangled.strip_prefix('<')?;
    let mut depth = 0i32;
    let mut as_at = None;
    for (i, ch) in body.char_indices() {
        match ch {
            '<' | '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            '>' if depth == 0 => {
                let start = as_at?;
                return Some(body[start..i].to_string());
            }
            '>' => depth -= 1,
            ' ' if depth == 0 && body[i..].starts_with(" as ") && as_at.is_none() => as_at = Some(i + 4),
            _ => {}
        }
    }
    None
}

/// Trait shared by every method implementation, if the names agree.
fn method_trait(methods: &[(u32, String)]) -> Option<String> {
    let mut found: Option<String> = None;
    for (_, m) in methods {
        let d = demangle(m);
        // `<X as Trait>::method` only; closures and shims nested below a
        // method belong to some other table.
        let tail = d.rsplit_once(">::").map(|(_, t)| t)?;
        if d.starts_with('<') && tail.contains("::") {
            return None;
        }
        let t = qualified_trait(&d)?;
        match &found {
            Some(f) if *f != t => return None,
            _ => found = Some(t),
        }
    }
    found
}
