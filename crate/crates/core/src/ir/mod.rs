//! Data model for a subset of LLVM-style textual SSA IR.
//!
//! Instructions outside the recognised subset are kept as
//! [`InstKind::Opaque`] with every identifier they mention, so analyses can
//! stay conservative instead of failing on unfamiliar constructs.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub mod demangle;
mod lexer;
pub mod link;
mod parser;
pub mod printer;
pub mod types;
pub mod view;

pub use demangle::demangle;
pub use link::link_modules;
pub use parser::{parse_module, parse_module_with, ParseOptions};
pub use printer::print_module;
pub use types::{DataLayout, FloatKind, KindClass, Type, TypeTable};
pub use view::{Def, InstRef, ModuleView};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Linkage {
    #[default]
    External,
    Private,
    Internal,
    AvailableExternally,
    LinkOnce,
    LinkOnceOdr,
    Weak,
    WeakOdr,
    Common,
    Appending,
    ExternWeak,
}

impl Linkage {
    pub fn from_keyword(word: &str) -> Option<Self> {
        Some(match word {
            "external" => Linkage::External,
            "private" => Linkage::Private,
            "internal" => Linkage::Internal,
            "available_externally" => Linkage::AvailableExternally,
            "linkonce" => Linkage::LinkOnce,
            "linkonce_odr" => Linkage::LinkOnceOdr,
            "weak" => Linkage::Weak,
            "weak_odr" => Linkage::WeakOdr,
            "common" => Linkage::Common,
            "appending" => Linkage::Appending,
            "extern_weak" => Linkage::ExternWeak,
            _ => return None,
        })
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Linkage::External => "external",
            Linkage::Private => "private",
            Linkage::Internal => "internal",
            Linkage::AvailableExternally => "available_externally",
            Linkage::LinkOnce => "linkonce",
            Linkage::LinkOnceOdr => "linkonce_odr",
            Linkage::Weak => "weak",
            Linkage::WeakOdr => "weak_odr",
            Linkage::Common => "common",
            Linkage::Appending => "appending",
            Linkage::ExternWeak => "extern_weak",
        }
    }

    /// Symbols invisible outside their module.
    pub fn is_local(self) -> bool {
        matches!(self, Linkage::Private | Linkage::Internal)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub params: Vec<Type>,
    pub ret: Type,
    pub variadic: bool,
}

impl Signature {
    pub fn kind_classes(&self) -> (Vec<KindClass>, KindClass) {
        (self.params.iter().map(Type::kind_class).collect(), self.ret.kind_class())
    }

    /// Arity and kind-class compatibility of a call passing `args` and
    /// expecting `ret`.
    pub fn accepts(&self, args: &[KindClass], ret: KindClass) -> bool {
        let arity_ok = if self.variadic { args.len() >= self.params.len() } else { args.len() == self.params.len() };
        arity_ok && self.ret.kind_class() == ret && self.params.iter().zip(args).all(|(p, a)| p.kind_class() == *a)
    }

    pub fn as_type(&self) -> Type {
        Type::Function { ret: Box::new(self.ret.clone()), params: self.params.clone(), variadic: self.variadic }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrModule {
    pub name: String,
    pub functions: Vec<FunctionDef>,
    pub declarations: Vec<FunctionDecl>,
    pub globals: Vec<GlobalVar>,
    pub aliases: Vec<Alias>,
    pub module_asm: Vec<String>,
    pub type_table: TypeTable,
}

impl IrModule {
    pub fn empty(name: &str) -> Self {
        IrModule {
            name: name.into(),
            functions: Vec::new(),
            declarations: Vec::new(),
            globals: Vec::new(),
            aliases: Vec::new(),
            module_asm: Vec::new(),
            type_table: TypeTable::new(),
        }
    }

    pub fn function(&self, symbol: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.symbol == symbol)
    }

    pub fn declaration(&self, symbol: &str) -> Option<&FunctionDecl> {
        self.declarations.iter().find(|d| d.symbol == symbol)
    }

    pub fn global(&self, symbol: &str) -> Option<&GlobalVar> {
        self.globals.iter().find(|g| g.symbol == symbol)
    }

    /// Every symbol the module defines or declares.
    pub fn symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        out.extend(self.functions.iter().map(|f| f.symbol.clone()));
        out.extend(self.declarations.iter().map(|f| f.symbol.clone()));
        out.extend(self.globals.iter().map(|g| g.symbol.clone()));
        out.extend(self.aliases.iter().map(|a| a.symbol.clone()));
        out
    }

    /// Recomputes `address_taken` for every function and declaration.
    pub fn compute_address_taken(&mut self) {
        let taken = address_taken_symbols(self);
        for f in &mut self.functions {
            f.address_taken = taken.contains(&f.symbol);
        }
        for d in &mut self.declarations {
            d.address_taken = taken.contains(&d.symbol);
        }
    }
}

/// Symbols used anywhere other than as the callee of a direct call.
pub fn address_taken_symbols(module: &IrModule) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for g in &module.globals {
        if let Some(init) = &g.initializer {
            init.value.for_each_symbol(&mut |s| {
                out.insert(String::from(s));
            });
        }
    }
    for a in &module.aliases {
        out.insert(a.target.clone());
    }
    for f in &module.functions {
        for b in &f.blocks {
            for inst in &b.insts {
                let callee = inst.kind.direct_callee();
                let mut skipped = false;
                inst.kind.for_each_ref(&mut |r| {
                    if let Ref::Global(s) = r {
                        if !skipped && Some(s) == callee {
                            skipped = true;
                        } else {
                            out.insert(String::from(s));
                        }
                    }
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDef {
    pub symbol: String,
    pub demangled: Option<String>,
    pub linkage: Linkage,
    pub signature: Signature,
    /// Parameter value ids, positionally aligned with `signature.params`.
    pub params: Vec<String>,
    pub blocks: Vec<BasicBlock>,
    pub address_taken: bool,
}

impl FunctionDef {
    pub fn display_name(&self) -> &str {
        self.demangled.as_deref().unwrap_or(&self.symbol)
    }

    /// Structural equality ignoring the link-dependent `address_taken` bit.
    pub fn same_body(&self, other: &FunctionDef) -> bool {
        self.symbol == other.symbol
            && self.signature == other.signature
            && self.params == other.params
            && self.blocks == other.blocks
    }

    pub fn instructions(&self) -> impl Iterator<Item = (usize, usize, &Instruction)> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(b, blk)| blk.insts.iter().enumerate().map(move |(i, inst)| (b, i, inst)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDecl {
    pub symbol: String,
    pub demangled: Option<String>,
    pub linkage: Linkage,
    pub signature: Signature,
    pub address_taken: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalVar {
    pub symbol: String,
    pub demangled: Option<String>,
    pub linkage: Linkage,
    pub is_constant: bool,
    pub value_type: Type,
    /// `None` for external globals.
    pub initializer: Option<TypedConst>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alias {
    pub symbol: String,
    pub linkage: Linkage,
    pub value_type: Type,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasicBlock {
    pub label: String,
    pub insts: Vec<Instruction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub result: Option<String>,
    pub kind: InstKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CastOp {
    Trunc,
    ZExt,
    SExt,
    FpTrunc,
    FpExt,
    FpToUi,
    FpToSi,
    UiToFp,
    SiToFp,
    PtrToInt,
    IntToPtr,
    BitCast,
    AddrSpaceCast,
}

impl CastOp {
    pub const ALL: [CastOp; 13] = [
        CastOp::Trunc,
        CastOp::ZExt,
        CastOp::SExt,
        CastOp::FpTrunc,
        CastOp::FpExt,
        CastOp::FpToUi,
        CastOp::FpToSi,
        CastOp::UiToFp,
        CastOp::SiToFp,
        CastOp::PtrToInt,
        CastOp::IntToPtr,
        CastOp::BitCast,
        CastOp::AddrSpaceCast,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            CastOp::Trunc => "trunc",
            CastOp::ZExt => "zext",
            CastOp::SExt => "sext",
            CastOp::FpTrunc => "fptrunc",
            CastOp::FpExt => "fpext",
            CastOp::FpToUi => "fptoui",
            CastOp::FpToSi => "fptosi",
            CastOp::UiToFp => "uitofp",
            CastOp::SiToFp => "sitofp",
            CastOp::PtrToInt => "ptrtoint",
            CastOp::IntToPtr => "inttoptr",
            CastOp::BitCast => "bitcast",
            CastOp::AddrSpaceCast => "addrspacecast",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.keyword() == word)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntOpKind {
    Add,
    Sub,
    Mul,
    UDiv,
    SDiv,
    URem,
    SRem,
    Shl,
    LShr,
    AShr,
    And,
    Or,
    Xor,
}

impl IntOpKind {
    pub const ALL: [IntOpKind; 13] = [
        IntOpKind::Add,
        IntOpKind::Sub,
        IntOpKind::Mul,
        IntOpKind::UDiv,
        IntOpKind::SDiv,
        IntOpKind::URem,
        IntOpKind::SRem,
        IntOpKind::Shl,
        IntOpKind::LShr,
        IntOpKind::AShr,
        IntOpKind::And,
        IntOpKind::Or,
        IntOpKind::Xor,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            IntOpKind::Add => "add",
            IntOpKind::Sub => "sub",
            IntOpKind::Mul => "mul",
            IntOpKind::UDiv => "udiv",
            IntOpKind::SDiv => "sdiv",
            IntOpKind::URem => "urem",
            IntOpKind::SRem => "srem",
            IntOpKind::Shl => "shl",
            IntOpKind::LShr => "lshr",
            IntOpKind::AShr => "ashr",
            IntOpKind::And => "and",
            IntOpKind::Or => "or",
            IntOpKind::Xor => "xor",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.keyword() == word)
    }
}

/// Poison-generating flags on integer operations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntFlags {
    pub nuw: bool,
    pub nsw: bool,
    pub exact: bool,
    pub disjoint: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntPredicate {
    Eq,
    Ne,
    Ugt,
    Uge,
    Ult,
    Ule,
    Sgt,
    Sge,
    Slt,
    Sle,
}

impl IntPredicate {
    pub const ALL: [IntPredicate; 10] = [
        IntPredicate::Eq,
        IntPredicate::Ne,
        IntPredicate::Ugt,
        IntPredicate::Uge,
        IntPredicate::Ult,
        IntPredicate::Ule,
        IntPredicate::Sgt,
        IntPredicate::Sge,
        IntPredicate::Slt,
        IntPredicate::Sle,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            IntPredicate::Eq => "eq",
            IntPredicate::Ne => "ne",
            IntPredicate::Ugt => "ugt",
            IntPredicate::Uge => "uge",
            IntPredicate::Ult => "ult",
            IntPredicate::Ule => "ule",
            IntPredicate::Sgt => "sgt",
            IntPredicate::Sge => "sge",
            IntPredicate::Slt => "slt",
            IntPredicate::Sle => "sle",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.keyword() == word)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Const {
    Int(i128),
    /// Floating-point literal text, kept verbatim.
    Float(String),
    Null,
    Undef,
    Poison,
    Zero,
    None,
    Symbol(String),
    Bytes(Vec<u8>),
    /// Struct, array or vector elements; the shape follows the enclosing type.
    Aggregate(Vec<TypedConst>),
    Gep {
        inbounds: bool,
        source_ty: Type,
        base: Box<TypedConst>,
        indices: Vec<TypedConst>,
    },
    Cast {
        op: CastOp,
        value: Box<TypedConst>,
        to: Type,
    },
    /// Anything else (metadata operands, `blockaddress`, ...), verbatim.
    Opaque(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TypedConst {
    pub ty: Type,
    pub value: Const,
}

impl Const {
    pub fn for_each_symbol(&self, f: &mut dyn FnMut(&str)) {
        self.for_each_ref(&mut |r| {
            if let Ref::Global(s) = r {
                f(s)
            }
        });
    }

    pub fn for_each_ref(&self, f: &mut dyn FnMut(Ref<'_>)) {
        match self {
            Const::Symbol(s) => f(Ref::Global(s)),
            Const::Aggregate(items) => items.iter().for_each(|c| c.value.for_each_ref(f)),
            Const::Gep { base, indices, .. } => {
                base.value.for_each_ref(f);
                indices.iter().for_each(|c| c.value.for_each_ref(f));
            }
            Const::Cast { value, .. } => value.value.for_each_ref(f),
            Const::Opaque(text) => lexer::scan_refs(text, f),
            _ => {}
        }
    }

    /// Strips address-preserving casts around a symbol.
    pub fn as_symbol(&self) -> Option<&str> {
        match self {
            Const::Symbol(s) => Some(s),
            Const::Cast { op: CastOp::BitCast | CastOp::AddrSpaceCast, value, .. } => value.value.as_symbol(),
            _ => None,
        }
    }
}

/// A value identifier reference inside an instruction or constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Ref<'a> {
    Local(&'a str),
    Global(&'a str),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Local(String),
    Const(Const),
}

impl Value {
    pub fn local(name: &str) -> Value {
        Value::Local(name.into())
    }

    pub fn int(v: i128) -> Value {
        Value::Const(Const::Int(v))
    }

    pub fn symbol(name: &str) -> Value {
        Value::Const(Const::Symbol(name.into()))
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self {
            Value::Const(c) => c.as_symbol(),
            Value::Local(_) => None,
        }
    }

    pub fn as_local(&self) -> Option<&str> {
        match self {
            Value::Local(s) => Some(s),
            Value::Const(_) => None,
        }
    }

    pub fn for_each_ref(&self, f: &mut dyn FnMut(Ref<'_>)) {
        match self {
            Value::Local(s) => f(Ref::Local(s)),
            Value::Const(c) => c.for_each_ref(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Operand {
    pub ty: Type,
    pub value: Value,
}

impl Operand {
    pub fn new(ty: Type, value: Value) -> Self {
        Operand { ty, value }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstKind {
    Call {
        ret_ty: Type,
        /// Explicit function type, present for variadic callees.
        fn_ty: Option<Type>,
        callee: Value,
        args: Vec<Operand>,
    },
    Invoke {
        ret_ty: Type,
        fn_ty: Option<Type>,
        callee: Value,
        args: Vec<Operand>,
        normal: String,
        unwind: String,
    },
    Load {
        ty: Type,
        ptr: Operand,
        volatile: bool,
        /// Carries `!invariant.load`.
        invariant: bool,
    },
    Store {
        value: Operand,
        ptr: Operand,
        volatile: bool,
    },
    AddrCalc {
        inbounds: bool,
        source_ty: Type,
        base: Operand,
        indices: Vec<Operand>,
    },
    Phi {
        ty: Type,
        incoming: Vec<(Value, String)>,
    },
    Cast {
        op: CastOp,
        value: Operand,
        to: Type,
    },
    LocalAlloc {
        ty: Type,
        count: Option<Operand>,
    },
    IntOp {
        op: IntOpKind,
        flags: IntFlags,
        ty: Type,
        lhs: Value,
        rhs: Value,
    },
    Compare {
        pred: IntPredicate,
        ty: Type,
        lhs: Value,
        rhs: Value,
    },
    Branch {
        cond: Option<Value>,
        targets: Vec<String>,
    },
    Switch {
        ty: Type,
        value: Value,
        default: String,
        cases: Vec<(i128, String)>,
    },
    Return {
        value: Option<Operand>,
    },
    Unreachable,
    InlineAsm {
        ret_ty: Type,
        side_effect: bool,
        template: String,
        constraints: String,
        args: Vec<Operand>,
    },
    /// Unrecognised instruction. `select`, `extractvalue`, `insertvalue` and
    /// `freeze` keep positional operands, a result type and index lists;
    /// everything else keeps every identifier in `text`.
    Opaque {
        opcode: String,
        ty: Option<Type>,
        operands: Vec<Value>,
        indices: Vec<u64>,
        text: String,
    },
}

impl InstKind {
    pub fn is_call(&self) -> bool {
        matches!(self, InstKind::Call { .. } | InstKind::Invoke { .. })
    }

    /// Callee, arguments and return type of a call or invoke.
    pub fn call_parts(&self) -> Option<(&Value, &[Operand], &Type)> {
        match self {
            InstKind::Call { callee, args, ret_ty, .. } | InstKind::Invoke { callee, args, ret_ty, .. } => {
                Some((callee, args, ret_ty))
            }
            _ => None,
        }
    }

    pub fn direct_callee(&self) -> Option<&str> {
        self.call_parts().and_then(|(c, _, _)| c.as_symbol())
    }

    pub fn successors(&self) -> Vec<&str> {
        match self {
            InstKind::Branch { targets, .. } => targets.iter().map(String::as_str).collect(),
            InstKind::Switch { default, cases, .. } => {
                core::iter::once(default.as_str()).chain(cases.iter().map(|(_, l)| l.as_str())).collect()
            }
            InstKind::Invoke { normal, unwind, .. } => alloc::vec![normal.as_str(), unwind.as_str()],
            _ => Vec::new(),
        }
    }

    /// Every value identifier the instruction mentions, in operand order.
    /// Block labels are not values and are excluded.
    pub fn for_each_ref(&self, f: &mut dyn FnMut(Ref<'_>)) {
        let op = |o: &Operand, f: &mut dyn FnMut(Ref<'_>)| o.value.for_each_ref(f);
        match self {
            InstKind::Call { callee, args, .. } | InstKind::Invoke { callee, args, .. } => {
                callee.for_each_ref(f);
                args.iter().for_each(|a| op(a, f));
            }
            InstKind::Load { ptr, .. } => op(ptr, f),
            InstKind::Store { value, ptr, .. } => {
                op(value, f);
                op(ptr, f);
            }
            InstKind::AddrCalc { base, indices, .. } => {
                op(base, f);
                indices.iter().for_each(|i| op(i, f));
            }
            InstKind::Phi { incoming, .. } => incoming.iter().for_each(|(v, _)| v.for_each_ref(f)),
            InstKind::Cast { value, .. } => op(value, f),
            InstKind::LocalAlloc { count, .. } => {
                if let Some(c) = count {
                    op(c, f)
                }
            }
            InstKind::IntOp { lhs, rhs, .. } | InstKind::Compare { lhs, rhs, .. } => {
                lhs.for_each_ref(f);
                rhs.for_each_ref(f);
            }
            InstKind::Branch { cond, .. } => {
                if let Some(c) = cond {
                    c.for_each_ref(f)
                }
            }
            InstKind::Switch { value, .. } => value.for_each_ref(f),
            InstKind::Return { value } => {
                if let Some(v) = value {
                    op(v, f)
                }
            }
            InstKind::Unreachable => {}
            InstKind::InlineAsm { args, .. } => args.iter().for_each(|a| op(a, f)),
            InstKind::Opaque { operands, .. } => operands.iter().for_each(|v| v.for_each_ref(f)),
        }
    }
}

/// A call/invoke/asm position inside a function.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Location {
    pub function: String,
    pub block: String,
    pub index: u32,
}

impl core::fmt::Display for Location {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}:{}:{}", self.function, self.block, self.index)
    }
}
