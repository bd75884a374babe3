//! First-class IR types, their kind classes, and a 64-bit data layout.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FloatKind {
    Half,
    BFloat,
    Float,
    Double,
    Fp128,
    X86Fp80,
    PpcFp128,
}

impl FloatKind {
    pub fn keyword(self) -> &'static str {
        match self {
            FloatKind::Half => "half",
            FloatKind::BFloat => "bfloat",
            FloatKind::Float => "float",
            FloatKind::Double => "double",
            FloatKind::Fp128 => "fp128",
            FloatKind::X86Fp80 => "x86_fp80",
            FloatKind::PpcFp128 => "ppc_fp128",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        Some(match word {
            "half" => FloatKind::Half,
            "bfloat" => FloatKind::BFloat,
            "float" => FloatKind::Float,
            "double" => FloatKind::Double,
            "fp128" => FloatKind::Fp128,
            "x86_fp80" => FloatKind::X86Fp80,
            "ppc_fp128" => FloatKind::PpcFp128,
            _ => return None,
        })
    }

    fn size(self) -> u64 {
        match self {
            FloatKind::Half | FloatKind::BFloat => 2,
            FloatKind::Float => 4,
            FloatKind::Double => 8,
            FloatKind::Fp128 | FloatKind::X86Fp80 | FloatKind::PpcFp128 => 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Type {
    Void,
    Int(u32),
    Float(FloatKind),
    /// `ptr` when the pointee is `None`; `T*` in typed-pointer IR.
    Ptr(Option<Box<Type>>),
    Array(u64, Box<Type>),
    Vector(u64, Box<Type>),
    Struct {
        fields: Vec<Type>,
        packed: bool,
    },
    Named(String),
    Function {
        ret: Box<Type>,
        params: Vec<Type>,
        variadic: bool,
    },
    Label,
    Metadata,
    Token,
    /// Anything else the parser accepted by keyword (e.g. `x86_amx`).
    Other(String),
}

/// Coarse type classes used for signature compatibility.
///
/// Lifted and producer-cast code routinely changes integer widths and pointer
/// element types, so matching is done on these classes instead of exact types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KindClass {
    Integer,
    Address,
    Aggregate,
    Float,
    Void,
    Other,
}

impl Type {
    pub fn ptr() -> Type {
        Type::Ptr(None)
    }

    pub fn is_void(&self) -> bool {
        matches!(self, Type::Void)
    }

    pub fn int_bits(&self) -> Option<u32> {
        match self {
            Type::Int(b) => Some(*b),
            _ => None,
        }
    }

    pub fn kind_class(&self) -> KindClass {
        match self {
            Type::Void => KindClass::Void,
            Type::Int(_) => KindClass::Integer,
            Type::Float(_) => KindClass::Float,
            Type::Ptr(_) => KindClass::Address,
            Type::Array(..) | Type::Vector(..) | Type::Struct { .. } | Type::Named(_) => KindClass::Aggregate,
            Type::Function { .. } | Type::Label | Type::Metadata | Type::Token | Type::Other(_) => KindClass::Other,
        }
    }

    /// Visits every named aggregate referenced by this type.
    pub fn for_each_named(&self, f: &mut dyn FnMut(&str)) {
        match self {
            Type::Named(n) => f(n),
            Type::Ptr(Some(t)) | Type::Array(_, t) | Type::Vector(_, t) => t.for_each_named(f),
            Type::Struct { fields, .. } => fields.iter().for_each(|t| t.for_each_named(f)),
            Type::Function { ret, params, .. } => {
                ret.for_each_named(f);
                params.iter().for_each(|t| t.for_each_named(f));
            }
            _ => {}
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Void => f.write_str("void"),
            Type::Int(b) => write!(f, "i{b}"),
            Type::Float(k) => f.write_str(k.keyword()),
            Type::Ptr(None) => f.write_str("ptr"),
            Type::Ptr(Some(t)) => write!(f, "{t}*"),
            Type::Array(n, t) => write!(f, "[{n} x {t}]"),
            Type::Vector(n, t) => write!(f, "<{n} x {t}>"),
            Type::Struct { fields, packed } => {
                if fields.is_empty() {
                    return f.write_str(if *packed { "<{}>" } else { "{}" });
                }
                f.write_str(if *packed { "<{ " } else { "{ " })?;
                for (i, t) in fields.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{t}")?;
                }
                f.write_str(if *packed { " }>" } else { " }" })
            }
            Type::Named(n) => write!(f, "%{}", super::printer::quote_ident(n)),
            Type::Function { ret, params, variadic } => {
                write!(f, "{ret} (")?;
                for (i, t) in params.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{t}")?;
                }
                if *variadic {
                    f.write_str(if params.is_empty() { "..." } else { ", ..." })?;
                }
                f.write_str(")")
            }
            Type::Label => f.write_str("label"),
            Type::Metadata => f.write_str("metadata"),
            Type::Token => f.write_str("token"),
            Type::Other(s) => f.write_str(s),
        }
    }
}

/// Byte layout of IR types on a little-endian target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataLayout {
    pub pointer_width: u64,
}

impl Default for DataLayout {
    fn default() -> Self {
        DataLayout { pointer_width: 8 }
    }
}

/// Named aggregate definitions; `None` marks an opaque struct.
pub type TypeTable = BTreeMap<String, Option<Type>>;

impl DataLayout {
    pub fn size_of(&self, ty: &Type, types: &TypeTable) -> u64 {
        self.size_depth(ty, types, 0)
    }

    pub fn align_of(&self, ty: &Type, types: &TypeTable) -> u64 {
        self.align_depth(ty, types, 0)
    }

    fn size_depth(&self, ty: &Type, types: &TypeTable, depth: u32) -> u64 {
        if depth > 64 {
            return 0;
        }
        match ty {
            Type::Int(bits) => int_bytes(*bits),
            Type::Float(k) => k.size(),
            Type::Ptr(_) => self.pointer_width,
            Type::Array(n, elem) => n.saturating_mul(self.size_depth(elem, types, depth + 1)),
            Type::Vector(n, elem) => {
                let raw = n.saturating_mul(self.size_depth(elem, types, depth + 1));
                raw.max(1).next_power_of_two()
            }
            Type::Struct { fields, packed } => self.struct_offsets(fields, *packed, types, depth).1,
            Type::Named(name) => match types.get(name) {
                Some(Some(def)) => self.size_depth(def, types, depth + 1),
                _ => 0,
            },
            _ => 0,
        }
    }

    fn align_depth(&self, ty: &Type, types: &TypeTable, depth: u32) -> u64 {
        if depth > 64 {
            return 1;
        }
        match ty {
            Type::Int(bits) => int_bytes(*bits).min(16),
            Type::Float(k) => k.size().min(16),
            Type::Ptr(_) => self.pointer_width,
            Type::Array(_, elem) => self.align_depth(elem, types, depth + 1),
            Type::Vector(..) => self.size_depth(ty, types, depth).clamp(1, 64),
            Type::Struct { fields, packed } => {
                if *packed {
                    1
                } else {
                    fields.iter().map(|f| self.align_depth(f, types, depth + 1)).max().unwrap_or(1)
                }
            }
            Type::Named(name) => match types.get(name) {
                Some(Some(def)) => self.align_depth(def, types, depth + 1),
                _ => 1,
            },
            _ => 1,
        }
    }

    /// Field byte offsets and total (padded) size of a struct body.
    fn struct_offsets(&self, fields: &[Type], packed: bool, types: &TypeTable, depth: u32) -> (Vec<u64>, u64) {
        let mut offsets = Vec::with_capacity(fields.len());
        let mut at = 0u64;
        let mut max_align = 1u64;
        for field in fields {
            let align = if packed { 1 } else { self.align_depth(field, types, depth + 1) };
            max_align = max_align.max(align);
            at = align_up(at, align);
            offsets.push(at);
            at += self.size_depth(field, types, depth + 1);
        }
        (offsets, align_up(at, max_align))
    }

    /// Resolves named types one level.
    pub fn resolve<'t>(&self, ty: &'t Type, types: &'t TypeTable) -> &'t Type {
        let mut cur = ty;
        for _ in 0..64 {
            match cur {
                Type::Named(n) => match types.get(n) {
                    Some(Some(def)) => cur = def,
                    _ => return cur,
                },
                _ => return cur,
            }
        }
        cur
    }

    /// Byte offset of aggregate member `index` and the member's type.
    pub fn member(&self, ty: &Type, index: u64, types: &TypeTable) -> Option<(u64, Type)> {
        match self.resolve(ty, types) {
            Type::Struct { fields, packed } => {
                let i = usize::try_from(index).ok()?;
                let field = fields.get(i)?;
                let (offs, _) = self.struct_offsets(fields, *packed, types, 0);
                Some((offs[i], field.clone()))
            }
            Type::Array(_, elem) | Type::Vector(_, elem) => {
                let size = self.size_of(elem, types);
                Some((index.wrapping_mul(size), (**elem).clone()))
            }
            _ => None,
        }
    }

    /// Finds the member covering byte `offset` inside `ty`; returns its index,
    /// start offset and type.
    pub fn member_at(&self, ty: &Type, offset: u64, types: &TypeTable) -> Option<(u64, u64, Type)> {
        match self.resolve(ty, types) {
            Type::Struct { fields, packed } => {
                let (offs, _) = self.struct_offsets(fields, *packed, types, 0);
                for (i, field) in fields.iter().enumerate() {
                    let start = offs[i];
                    let end = start + self.size_of(field, types);
                    if offset >= start && offset < end.max(start + 1) {
                        return Some((i as u64, start, field.clone()));
                    }
                }
                None
            }
            Type::Array(n, elem) | Type::Vector(n, elem) => {
                let size = self.size_of(elem, types).max(1);
                let idx = offset / size;
                (idx < *n).then(|| (idx, idx * size, (**elem).clone()))
            }
            _ => None,
        }
    }
}

fn int_bytes(bits: u32) -> u64 {
    let bytes = u64::from(bits).div_ceil(8).max(1);
    bytes.next_power_of_two()
}

fn align_up(at: u64, align: u64) -> u64 {
    if align <= 1 {
        at
    } else {
        at.div_ceil(align) * align
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn struct_layout_pads_fields() {
        let types = TypeTable::new();
        let dl = DataLayout::default();
        let t = Type::Struct { fields: vec![Type::Int(8), Type::Int(64), Type::Int(32)], packed: false };
        assert_eq!(dl.size_of(&t, &types), 24);
        assert_eq!(dl.member(&t, 1, &types).unwrap().0, 8);
        assert_eq!(dl.member(&t, 2, &types).unwrap().0, 16);
        let p = Type::Struct { fields: vec![Type::Int(8), Type::Int(64)], packed: true };
        assert_eq!(dl.size_of(&p, &types), 9);
    }

    #[test]
    fn rustc_vtable_header_is_24_bytes() {
        let types = TypeTable::new();
        let dl = DataLayout::default();
        let t = Type::Struct {
            fields: vec![Type::Array(24, Box::new(Type::Int(8))), Type::ptr(), Type::ptr()],
            packed: true,
        };
        assert_eq!(dl.size_of(&t, &types), 40);
        assert_eq!(dl.member_at(&t, 32, &types).unwrap().1, 32);
    }

    #[test]
    fn kind_classes() {
        assert_eq!(Type::Int(1).kind_class(), KindClass::Integer);
        assert_eq!(Type::Ptr(Some(Box::new(Type::Int(8)))).kind_class(), KindClass::Address);
        assert_eq!(Type::Named("T".into()).kind_class(), KindClass::Aggregate);
    }
}
