//! Read-only indices over a linked module.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::types::{DataLayout, Type};
use super::*;

/// Where an SSA value is defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Def {
    Param(usize),
    Inst(usize, usize),
}

/// Position of an instruction: (function index, block index, instruction index).
pub type InstRef = (usize, usize, usize);

#[derive(Debug, Clone)]
pub struct FunctionIndex {
    pub defs: BTreeMap<String, Def>,
    pub blocks: BTreeMap<String, usize>,
    /// Instructions using each local value.
    pub uses: BTreeMap<String, Vec<(usize, usize)>>,
    /// Call-like instructions in program order.
    pub call_sites: Vec<(usize, usize)>,
}

#[derive(Debug)]
pub struct ModuleView<'m> {
    pub module: &'m IrModule,
    pub layout: DataLayout,
    functions: BTreeMap<&'m str, usize>,
    declarations: BTreeMap<&'m str, usize>,
    globals: BTreeMap<&'m str, usize>,
    aliases: BTreeMap<&'m str, &'m str>,
    pub index: Vec<FunctionIndex>,
    /// Instructions mentioning each global symbol.
    pub global_uses: BTreeMap<String, Vec<InstRef>>,
    /// Direct call sites per callee symbol.
    pub direct_callers: BTreeMap<String, Vec<InstRef>>,
}

impl<'m> ModuleView<'m> {
    pub fn new(module: &'m IrModule) -> Self {
        Self::with_layout(module, DataLayout::default())
    }

    pub fn with_layout(module: &'m IrModule, layout: DataLayout) -> Self {
        let functions = module.functions.iter().enumerate().map(|(i, f)| (f.symbol.as_str(), i)).collect();
        let declarations = module.declarations.iter().enumerate().map(|(i, f)| (f.symbol.as_str(), i)).collect();
        let globals = module.globals.iter().enumerate().map(|(i, g)| (g.symbol.as_str(), i)).collect();
        let aliases = module.aliases.iter().map(|a| (a.symbol.as_str(), a.target.as_str())).collect();
        let mut view = ModuleView {
            module,
            layout,
            functions,
            declarations,
            globals,
            aliases,
            index: Vec::with_capacity(module.functions.len()),
            global_uses: BTreeMap::new(),
            direct_callers: BTreeMap::new(),
        };
        for (fi, f) in module.functions.iter().enumerate() {
            let mut idx = FunctionIndex {
                defs: BTreeMap::new(),
                blocks: BTreeMap::new(),
                uses: BTreeMap::new(),
                call_sites: Vec::new(),
            };
            for (i, p) in f.params.iter().enumerate() {
                idx.defs.insert(p.clone(), Def::Param(i));
            }
            for (b, blk) in f.blocks.iter().enumerate() {
                idx.blocks.insert(blk.label.clone(), b);
                for (i, inst) in blk.insts.iter().enumerate() {
                    if let Some(r) = &inst.result {
                        idx.defs.insert(r.clone(), Def::Inst(b, i));
                    }
                    if inst.kind.is_call() || matches!(inst.kind, InstKind::InlineAsm { .. }) {
                        idx.call_sites.push((b, i));
                    }
                    inst.kind.for_each_ref(&mut |r| match r {
                        Ref::Local(n) => idx.uses.entry(String::from(n)).or_default().push((b, i)),
                        Ref::Global(s) => view.global_uses.entry(String::from(s)).or_default().push((fi, b, i)),
                    });
                    if let Some(c) = inst.kind.direct_callee() {
                        let target = view.resolve_alias(c);
                        view.direct_callers.entry(String::from(target)).or_default().push((fi, b, i));
                    }
                }
            }
            view.index.push(idx);
        }
        view
    }

    pub fn resolve_alias<'a>(&'a self, symbol: &'a str) -> &'a str {
        let mut cur = symbol;
        for _ in 0..16 {
            match self.aliases.get(cur) {
                Some(t) => cur = t,
                None => break,
            }
        }
        cur
    }

    pub fn function_index(&self, symbol: &str) -> Option<usize> {
        self.functions.get(self.resolve_alias(symbol)).copied()
    }

    pub fn function(&self, symbol: &str) -> Option<&'m FunctionDef> {
        self.function_index(symbol).map(|i| &self.module.functions[i])
    }

    pub fn declaration(&self, symbol: &str) -> Option<&'m FunctionDecl> {
        self.declarations.get(self.resolve_alias(symbol)).map(|&i| &self.module.declarations[i])
    }

    pub fn global(&self, symbol: &str) -> Option<&'m GlobalVar> {
        self.globals.get(self.resolve_alias(symbol)).map(|&i| &self.module.globals[i])
    }

    pub fn is_function(&self, symbol: &str) -> bool {
        let s = self.resolve_alias(symbol);
        self.functions.contains_key(s) || self.declarations.contains_key(s)
    }

    pub fn signature(&self, symbol: &str) -> Option<&'m Signature> {
        self.function(symbol).map(|f| &f.signature).or_else(|| self.declaration(symbol).map(|d| &d.signature))
    }

    pub fn demangled(&self, symbol: &str) -> Option<&'m str> {
        self.function(symbol)
            .and_then(|f| f.demangled.as_deref())
            .or_else(|| self.declaration(symbol).and_then(|d| d.demangled.as_deref()))
            .or_else(|| self.global(symbol).and_then(|g| g.demangled.as_deref()))
    }

    pub fn inst(&self, r: InstRef) -> &'m Instruction {
        &self.module.functions[r.0].blocks[r.1].insts[r.2]
    }

    pub fn location(&self, r: InstRef) -> Location {
        let f = &self.module.functions[r.0];
        Location { function: f.symbol.clone(), block: f.blocks[r.1].label.clone(), index: r.2 as u32 }
    }

    pub fn resolve_location(&self, loc: &Location) -> Option<InstRef> {
        let fi = self.function_index(&loc.function)?;
        let b = *self.index[fi].blocks.get(&loc.block)?;
        let i = loc.index as usize;
        (i < self.module.functions[fi].blocks[b].insts.len()).then_some((fi, b, i))
    }

    pub fn def(&self, fi: usize, name: &str) -> Option<Def> {
        self.index[fi].defs.get(name).copied()
    }

    /// Ordinal of a call-like instruction among the function's call sites.
    pub fn site_ordinal(&self, r: InstRef) -> Option<usize> {
        self.index[r.0].call_sites.iter().position(|&(b, i)| (b, i) == (r.1, r.2))
    }

    pub fn size_of(&self, ty: &Type) -> u64 {
        self.layout.size_of(ty, &self.module.type_table)
    }
}
