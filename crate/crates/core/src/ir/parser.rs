use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::lexer::{lex, Tok, Token};
use super::types::{FloatKind, Type};
use super::*;
use crate::error::IrError;

/// Knobs for [`parse_module_with`].
#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Module name; defaults to `source_filename`, then `"module"`.
    pub name: Option<String>,
    /// Keep every instruction as [`InstKind::Opaque`].
    pub force_opaque: bool,
}

pub fn parse_module(text: &str) -> Result<IrModule, IrError> {
    parse_module_with(text, &ParseOptions::default())
}

pub fn parse_module_with(text: &str, opts: &ParseOptions) -> Result<IrModule, IrError> {
    let toks = lex(text).map_err(|e| IrError::Syntax { line: e.line, col: e.col, msg: e.msg.into() })?;
    let mut p = Parser {
        src: text,
        toks,
        pos: 0,
        force_opaque: opts.force_opaque,
        module: IrModule::empty(opts.name.as_deref().unwrap_or("")),
        named_refs: Vec::new(),
        call_refs: Vec::new(),
        last_asm_line: None,
    };
    p.parse_top()?;
    let mut source_name = p.module.name.clone();
    if source_name.is_empty() {
        source_name = String::from("module");
    }
    p.module.name = source_name;
    p.check_refs()?;
    let mut module = p.module;
    filter_opaque_refs(&mut module);
    module.compute_address_taken();
    Ok(module)
}

const FAST_MATH: [&str; 9] = ["nnan", "ninf", "nsz", "arcp", "contract", "afn", "reassoc", "fast", "tail"];

const CONTINUATION: [&str; 5] = ["to", "unwind", "cleanup", "catch", "filter"];

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    pos: usize,
    force_opaque: bool,
    module: IrModule,
    named_refs: Vec<(u32, u32, String)>,
    call_refs: Vec<(u32, u32, String)>,
    last_asm_line: Option<u32>,
}

type PResult<T> = Result<T, IrError>;

fn is_type_word(w: &str) -> bool {
    matches!(w, "void" | "ptr" | "label" | "metadata" | "token" | "x86_mmx" | "x86_amx" | "opaque")
        || FloatKind::from_keyword(w).is_some()
        || int_width(w).is_some()
}

fn int_width(w: &str) -> Option<u32> {
    let digits = w.strip_prefix('i')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

const VALUE_WORDS: [&str; 12] = [
    "true",
    "false",
    "null",
    "undef",
    "poison",
    "zeroinitializer",
    "none",
    "getelementptr",
    "blockaddress",
    "dso_local_equivalent",
    "no_cfi",
    "asm",
];

fn is_value_word(w: &str) -> bool {
    VALUE_WORDS.contains(&w) || CastOp::from_keyword(w).is_some() || IntOpKind::from_keyword(w).is_some()
}

impl<'a> Parser<'a> {
    // ---- token helpers ----

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.tok)
    }

    fn cur_pos(&self) -> (u32, u32) {
        match self.toks.get(self.pos).or_else(|| self.toks.last()) {
            Some(t) => (t.line, t.col),
            None => (1, 1),
        }
    }

    fn cur_line(&self) -> u32 {
        self.toks.get(self.pos).map_or(u32::MAX, |t| t.line)
    }

    fn prev_line(&self) -> u32 {
        if self.pos == 0 {
            0
        } else {
            self.toks[self.pos - 1].line
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let (line, col) = self.cur_pos();
        Err(IrError::Syntax { line, col, msg: msg.into() })
    }

    fn bump(&mut self) -> PResult<Token> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => self.err("unexpected end of input"),
        }
    }

    fn is_punct(&self, c: char) -> bool {
        self.peek() == Some(&Tok::Punct(c))
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.is_punct(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: char) -> PResult<()> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(x)) if x == w)
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, w: &str) -> PResult<()> {
        if self.eat_word(w) {
            Ok(())
        } else {
            self.err(format!("expected '{w}'"))
        }
    }

    fn word(&self) -> Option<&str> {
        match self.peek() {
            Some(Tok::Word(w)) => Some(w),
            _ => None,
        }
    }

    fn expect_local(&mut self) -> PResult<String> {
        match self.peek() {
            Some(Tok::Local(n)) => {
                let n = n.clone();
                self.pos += 1;
                Ok(n)
            }
            _ => self.err("expected local identifier"),
        }
    }

    fn expect_label_ref(&mut self) -> PResult<String> {
        self.expect_word("label")?;
        self.expect_local()
    }

    fn expect_str(&mut self) -> PResult<String> {
        match self.peek() {
            Some(Tok::Str(s)) => {
                let s = String::from_utf8_lossy(s).into_owned();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("expected string literal"),
        }
    }

    fn expect_uint(&mut self) -> PResult<u64> {
        match self.peek() {
            Some(Tok::Num(n)) => match n.parse::<u64>() {
                Ok(v) => {
                    self.pos += 1;
                    Ok(v)
                }
                Err(_) => self.err("expected unsigned integer"),
            },
            _ => self.err("expected unsigned integer"),
        }
    }

    /// Skips a balanced `( ... )` group if one starts here.
    fn skip_group(&mut self) -> PResult<()> {
        if !self.is_punct('(') {
            return Ok(());
        }
        let mut depth = 0i32;
        loop {
            let t = self.bump()?;
            match t.tok {
                Tok::Punct('(') | Tok::Punct('[') | Tok::Punct('{') => depth += 1,
                Tok::Punct(')') | Tok::Punct(']') | Tok::Punct('}') => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(());
                    }
                }
                _ => {}
            }
        }
    }

    /// Skips to the end of the current logical line (bracket-aware).
    fn skip_statement(&mut self) -> PResult<()> {
        let line = self.cur_line();
        let mut depth = 0i32;
        while let Some(t) = self.toks.get(self.pos) {
            if depth <= 0 && t.line != line && self.pos > 0 && self.toks[self.pos - 1].line != t.line {
                break;
            }
            match t.tok {
                Tok::Punct('(') | Tok::Punct('[') | Tok::Punct('{') => depth += 1,
                Tok::Punct(')') | Tok::Punct(']') | Tok::Punct('}') => depth -= 1,
                _ => {}
            }
            self.pos += 1;
        }
        Ok(())
    }

    fn at_line_end(&self) -> bool {
        self.cur_line() != self.prev_line()
    }

    fn span_text(&self, from: usize) -> String {
        let start = self.toks[from].start;
        let end = self.toks[self.pos - 1].end;
        String::from(&self.src[start..end])
    }

    // ---- types ----

    fn at_type_start(&self) -> bool {
        match self.peek() {
            Some(Tok::Word(w)) => is_type_word(w),
            Some(Tok::Punct('[' | '{' | '<')) | Some(Tok::Local(_)) => true,
            _ => false,
        }
    }

    fn parse_type(&mut self) -> PResult<Type> {
        let (line, col) = self.cur_pos();
        let mut ty = match self.bump()?.tok {
            Tok::Word(w) => match w.as_str() {
                "void" => Type::Void,
                "ptr" => {
                    self.skip_addrspace()?;
                    Type::Ptr(None)
                }
                "label" => Type::Label,
                "metadata" => Type::Metadata,
                "token" => Type::Token,
                "x86_mmx" | "x86_amx" => Type::Other(w.clone()),
                _ => {
                    if let Some(b) = int_width(&w) {
                        Type::Int(b)
                    } else if let Some(k) = FloatKind::from_keyword(&w) {
                        Type::Float(k)
                    } else {
                        self.pos -= 1;
                        return self.err(format!("expected type, found '{w}'"));
                    }
                }
            },
            Tok::Punct('[') => {
                let n = self.expect_uint()?;
                self.expect_word("x")?;
                let elem = self.parse_type()?;
                self.expect_punct(']')?;
                Type::Array(n, Box::new(elem))
            }
            Tok::Punct('<') => {
                if self.eat_punct('{') {
                    let fields = self.parse_type_list('}')?;
                    self.expect_punct('>')?;
                    Type::Struct { fields, packed: true }
                } else {
                    self.eat_word("vscale");
                    self.eat_word("x");
                    let n = self.expect_uint()?;
                    self.expect_word("x")?;
                    let elem = self.parse_type()?;
                    self.expect_punct('>')?;
                    Type::Vector(n, Box::new(elem))
                }
            }
            Tok::Punct('{') => {
                let fields = self.parse_type_list('}')?;
                Type::Struct { fields, packed: false }
            }
            Tok::Local(name) => {
                self.named_refs.push((line, col, name.clone()));
                Type::Named(name)
            }
            _ => {
                self.pos -= 1;
                return self.err("expected type");
            }
        };
        loop {
            if self.is_word("addrspace") && self.peek_at(2).is_some() {
                self.skip_addrspace()?;
            } else if self.eat_punct('*') {
                ty = Type::Ptr(Some(Box::new(ty)));
            } else if self.is_punct('(') && !matches!(ty, Type::Label | Type::Metadata) {
                self.pos += 1;
                let mut params = Vec::new();
                let mut variadic = false;
                if !self.eat_punct(')') {
                    loop {
                        if matches!(self.peek(), Some(Tok::Ellipsis)) {
                            self.pos += 1;
                            variadic = true;
                        } else {
                            params.push(self.parse_type()?);
                        }
                        if self.eat_punct(')') {
                            break;
                        }
                        self.expect_punct(',')?;
                    }
                }
                ty = Type::Function { ret: Box::new(ty), params, variadic };
            } else {
                return Ok(ty);
            }
        }
    }

    fn skip_addrspace(&mut self) -> PResult<()> {
        if self.eat_word("addrspace") {
            self.skip_group()?;
        }
        Ok(())
    }

    fn parse_type_list(&mut self, close: char) -> PResult<Vec<Type>> {
        let mut out = Vec::new();
        if self.eat_punct(close) {
            return Ok(out);
        }
        loop {
            out.push(self.parse_type()?);
            if self.eat_punct(close) {
                return Ok(out);
            }
            self.expect_punct(',')?;
        }
    }

    // ---- constants and values ----

    fn parse_typed_const(&mut self) -> PResult<TypedConst> {
        let ty = self.parse_type()?;
        let value = self.parse_const(&ty)?;
        Ok(TypedConst { ty, value })
    }

    fn parse_operand(&mut self) -> PResult<Operand> {
        let ty = self.parse_type()?;
        let value = self.parse_value(&ty)?;
        Ok(Operand { ty, value })
    }

    fn parse_value(&mut self, ty: &Type) -> PResult<Value> {
        if let Some(Tok::Local(n)) = self.peek() {
            let n = n.clone();
            self.pos += 1;
            return Ok(Value::Local(n));
        }
        Ok(Value::Const(self.parse_const(ty)?))
    }

    fn parse_const(&mut self, ty: &Type) -> PResult<Const> {
        let start = self.pos;
        let tok = self.bump()?;
        Ok(match tok.tok {
            Tok::Global(n) => Const::Symbol(n),
            Tok::Num(n) => {
                if matches!(ty, Type::Float(_)) {
                    Const::Float(n)
                } else {
                    match n.parse::<i128>() {
                        Ok(v) => Const::Int(v),
                        Err(_) => {
                            self.pos -= 1;
                            return self.err(format!("bad integer literal '{n}'"));
                        }
                    }
                }
            }
            Tok::CStr(b) => Const::Bytes(b),
            Tok::Punct('{') => Const::Aggregate(self.parse_const_list('}')?),
            Tok::Punct('[') => Const::Aggregate(self.parse_const_list(']')?),
            Tok::Punct('<') => {
                if self.eat_punct('{') {
                    let items = self.parse_const_list('}')?;
                    self.expect_punct('>')?;
                    Const::Aggregate(items)
                } else {
                    Const::Aggregate(self.parse_const_list('>')?)
                }
            }
            Tok::Meta(_) => {
                if self.is_punct('{') || self.is_punct('(') {
                    self.skip_brace_or_group()?;
                } else if matches!(self.peek(), Some(Tok::Str(_))) && self.toks[start].end == self.toks[self.pos].start
                {
                    self.pos += 1;
                }
                Const::Opaque(self.span_text(start))
            }
            Tok::Word(w) => match w.as_str() {
                "true" => Const::Int(1),
                "false" => Const::Int(0),
                "null" => Const::Null,
                "undef" => Const::Undef,
                "poison" => Const::Poison,
                "zeroinitializer" => Const::Zero,
                "none" => Const::None,
                "getelementptr" => {
                    let inbounds = self.skip_gep_flags()?;
                    self.expect_punct('(')?;
                    let source_ty = self.parse_type()?;
                    self.expect_punct(',')?;
                    let base = Box::new(self.parse_typed_const()?);
                    let mut indices = Vec::new();
                    while self.eat_punct(',') {
                        if self.eat_word("inrange") {
                            self.skip_group()?;
                        }
                        indices.push(self.parse_typed_const()?);
                    }
                    self.expect_punct(')')?;
                    Const::Gep { inbounds, source_ty, base, indices }
                }
                _ if CastOp::from_keyword(&w).is_some() => {
                    let op = CastOp::from_keyword(&w).unwrap_or(CastOp::BitCast);
                    self.expect_punct('(')?;
                    let value = Box::new(self.parse_typed_const()?);
                    self.expect_word("to")?;
                    let to = self.parse_type()?;
                    self.expect_punct(')')?;
                    Const::Cast { op, value, to }
                }
                _ if matches!(ty, Type::Metadata) && is_type_word(&w) => {
                    self.pos -= 1;
                    let t = self.parse_type()?;
                    self.parse_value(&t)?;
                    Const::Opaque(self.span_text(start))
                }
                _ => {
                    // blockaddress(...), dso_local_equivalent @f, constant binops, ...
                    while let Some(Tok::Word(w)) = self.peek() {
                        if is_type_word(w) {
                            break;
                        }
                        self.pos += 1;
                    }
                    if self.is_punct('(') {
                        self.skip_group()?;
                    } else if matches!(self.peek(), Some(Tok::Global(_))) {
                        self.pos += 1;
                    } else {
                        self.pos = start;
                        return self.err(format!("unsupported constant '{w}'"));
                    }
                    Const::Opaque(self.span_text(start))
                }
            },
            Tok::Local(_) if matches!(ty, Type::Metadata) => Const::Opaque(self.span_text(start)),
            _ => {
                self.pos -= 1;
                return self.err("expected constant");
            }
        })
    }

    fn skip_brace_or_group(&mut self) -> PResult<()> {
        let mut depth = 0i32;
        loop {
            let t = self.bump()?;
            match t.tok {
                Tok::Punct('(') | Tok::Punct('[') | Tok::Punct('{') => depth += 1,
                Tok::Punct(')') | Tok::Punct(']') | Tok::Punct('}') => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(());
                    }
                }
                _ => {}
            }
        }
    }

    fn parse_const_list(&mut self, close: char) -> PResult<Vec<TypedConst>> {
        let mut out = Vec::new();
        if self.eat_punct(close) {
            return Ok(out);
        }
        loop {
            out.push(self.parse_typed_const()?);
            if self.eat_punct(close) {
                return Ok(out);
            }
            self.expect_punct(',')?;
        }
    }

    /// Consumes `inbounds`, `nuw`, `nusw`, `inrange(..)`; returns whether
    /// `inbounds` was present.
    fn skip_gep_flags(&mut self) -> PResult<bool> {
        let mut inbounds = false;
        loop {
            if self.eat_word("inbounds") {
                inbounds = true;
            } else if self.eat_word("nuw") || self.eat_word("nusw") {
            } else if self.eat_word("inrange") {
                self.skip_group()?;
            } else {
                return Ok(inbounds);
            }
        }
    }

    // ---- top level ----

    fn parse_top(&mut self) -> PResult<()> {
        while let Some(tok) = self.peek().cloned() {
            match tok {
                Tok::Word(w) => match w.as_str() {
                    "define" => {
                        self.pos += 1;
                        self.parse_define()?;
                    }
                    "declare" => {
                        self.pos += 1;
                        self.parse_declare()?;
                    }
                    "module" => {
                        let line = self.cur_line();
                        self.pos += 1;
                        self.expect_word("asm")?;
                        let text = self.expect_str()?;
                        let joined = self.last_asm_line.is_some_and(|l| l + 1 == line);
                        match self.module.module_asm.last_mut() {
                            Some(block) if joined => {
                                block.push('\n');
                                block.push_str(&text);
                            }
                            _ => self.module.module_asm.push(text),
                        }
                        self.last_asm_line = Some(line);
                    }
                    "source_filename" => {
                        self.pos += 1;
                        self.expect_punct('=')?;
                        let name = self.expect_str()?;
                        if self.module.name.is_empty() {
                            self.module.name = name;
                        }
                    }
                    "target" | "attributes" | "uselistorder" | "uselistorder_bb" => self.skip_statement()?,
                    _ => return self.err(format!("unexpected '{w}' at top level")),
                },
                Tok::Local(name) => {
                    self.pos += 1;
                    self.expect_punct('=')?;
                    self.expect_word("type")?;
                    let def = if self.eat_word("opaque") { None } else { Some(self.parse_type()?) };
                    self.module.type_table.insert(name, def);
                }
                Tok::Global(name) => {
                    self.pos += 1;
                    self.expect_punct('=')?;
                    self.parse_global(name)?;
                }
                Tok::Meta(_) | Tok::Comdat(_) | Tok::Attr(_) => self.skip_statement()?,
                _ => return self.err("unexpected token at top level"),
            }
        }
        Ok(())
    }

    fn skip_prefix_words(&mut self) -> PResult<Linkage> {
        let mut linkage = Linkage::External;
        loop {
            if self.at_type_start() && !matches!(self.peek(), Some(Tok::Word(w)) if w == "opaque") {
                return Ok(linkage);
            }
            match self.peek().cloned() {
                Some(Tok::Word(w)) => {
                    self.pos += 1;
                    if let Some(l) = Linkage::from_keyword(&w) {
                        linkage = l;
                    } else if w == "align" || w == "cc" {
                        self.expect_uint()?;
                    } else {
                        self.skip_group()?;
                    }
                }
                Some(Tok::Attr(_)) => self.pos += 1,
                _ => return self.err("expected type"),
            }
        }
    }

    fn parse_global(&mut self, symbol: String) -> PResult<()> {
        let mut linkage = Linkage::External;
        let is_constant;
        loop {
            match self.word().map(String::from) {
                Some(w) if w == "global" || w == "constant" => {
                    self.pos += 1;
                    is_constant = w == "constant";
                    break;
                }
                Some(w) if w == "alias" || w == "ifunc" => {
                    self.pos += 1;
                    let value_type = self.parse_type()?;
                    self.expect_punct(',')?;
                    let target = self.parse_typed_const()?;
                    let target = alias_target(&target.value)
                        .map(String::from)
                        .ok_or(())
                        .or_else(|_| self.err("alias target must reference a symbol"))?;
                    self.skip_statement_rest()?;
                    self.module.aliases.push(Alias { symbol, linkage, value_type, target });
                    return Ok(());
                }
                Some(w) => {
                    self.pos += 1;
                    if let Some(l) = Linkage::from_keyword(&w) {
                        linkage = l;
                    } else {
                        self.skip_group()?;
                    }
                }
                None => return self.err("expected 'global' or 'constant'"),
            }
        }
        let value_type = self.parse_type()?;
        let has_init = !self.at_line_end() && !self.is_punct(',');
        let initializer = if has_init {
            let value = self.parse_const(&value_type)?;
            Some(TypedConst { ty: value_type.clone(), value })
        } else {
            None
        };
        self.skip_statement_rest()?;
        let demangled = demangled_of(&symbol);
        self.module.globals.push(GlobalVar { symbol, demangled, linkage, is_constant, value_type, initializer });
        Ok(())
    }

    /// Skips the remaining tokens on the current line.
    fn skip_statement_rest(&mut self) -> PResult<()> {
        let line = self.prev_line();
        let mut depth = 0i32;
        while let Some(t) = self.toks.get(self.pos) {
            if depth <= 0 && t.line != line {
                break;
            }
            match t.tok {
                Tok::Punct('(') | Tok::Punct('[') | Tok::Punct('{') => depth += 1,
                Tok::Punct(')') | Tok::Punct(']') | Tok::Punct('}') => depth -= 1,
                _ => {}
            }
            self.pos += 1;
        }
        Ok(())
    }

    fn parse_header(&mut self) -> PResult<(Linkage, String, Signature, Vec<Option<String>>)> {
        let linkage = self.skip_prefix_words()?;
        let ret = self.parse_type()?;
        let symbol = match self.bump()?.tok {
            Tok::Global(n) => n,
            _ => {
                self.pos -= 1;
                return self.err("expected function name");
            }
        };
        self.expect_punct('(')?;
        let mut params = Vec::new();
        let mut names = Vec::new();
        let mut variadic = false;
        if !self.eat_punct(')') {
            loop {
                if matches!(self.peek(), Some(Tok::Ellipsis)) {
                    self.pos += 1;
                    variadic = true;
                } else {
                    params.push(self.parse_type()?);
                    let mut name = None;
                    let mut depth = 0i32;
                    loop {
                        match self.peek() {
                            Some(Tok::Punct(',' | ')')) if depth == 0 => break,
                            Some(Tok::Punct('(' | '[' | '{')) => depth += 1,
                            Some(Tok::Punct(')' | ']' | '}')) => depth -= 1,
                            Some(Tok::Local(n)) if depth == 0 => name = Some(n.clone()),
                            None => return self.err("unterminated parameter list"),
                            _ => {}
                        }
                        self.pos += 1;
                    }
                    names.push(name);
                }
                if self.eat_punct(')') {
                    break;
                }
                self.expect_punct(',')?;
            }
        }
        Ok((linkage, symbol, Signature { params, ret, variadic }, names))
    }

    fn parse_declare(&mut self) -> PResult<()> {
        let (linkage, symbol, signature, _) = self.parse_header()?;
        self.skip_statement_rest()?;
        let demangled = demangled_of(&symbol);
        self.module.declarations.push(FunctionDecl { symbol, demangled, linkage, signature, address_taken: false });
        Ok(())
    }

    fn parse_define(&mut self) -> PResult<()> {
        let (linkage, symbol, signature, names) = self.parse_header()?;
        while !self.is_punct('{') {
            if self.peek().is_none() {
                return self.err("expected function body");
            }
            self.pos += 1;
        }
        self.pos += 1;

        let mut unnamed = 0u64;
        let params: Vec<String> = names
            .into_iter()
            .map(|n| {
                n.unwrap_or_else(|| {
                    let s = unnamed.to_string();
                    unnamed += 1;
                    s
                })
            })
            .collect();
        for p in &params {
            if p.bytes().all(|b| b.is_ascii_digit()) {
                if let Ok(v) = p.parse::<u64>() {
                    unnamed = unnamed.max(v + 1);
                }
            }
        }

        let mut seen: BTreeMap<String, ()> = BTreeMap::new();
        for p in &params {
            if seen.insert(p.clone(), ()).is_some() {
                let (line, col) = self.cur_pos();
                return Err(IrError::DuplicateValue { line, col, function: symbol.clone(), name: p.clone() });
            }
        }

        let mut blocks: Vec<BasicBlock> = Vec::new();
        let mut positions: Vec<Vec<(u32, u32)>> = Vec::new();
        loop {
            let (line, col) = self.cur_pos();
            match self.peek().cloned() {
                None => return self.err("unterminated function body"),
                Some(Tok::Punct('}')) => {
                    self.pos += 1;
                    break;
                }
                Some(Tok::Label(l)) => {
                    self.pos += 1;
                    if seen.insert(l.clone(), ()).is_some() {
                        return Err(IrError::DuplicateValue { line, col, function: symbol.clone(), name: l });
                    }
                    blocks.push(BasicBlock { label: l, insts: Vec::new() });
                    positions.push(Vec::new());
                }
                Some(_) => {
                    if blocks.is_empty() {
                        let l = unnamed.to_string();
                        seen.insert(l.clone(), ());
                        blocks.push(BasicBlock { label: l, insts: Vec::new() });
                        positions.push(Vec::new());
                    }
                    let inst = self.parse_instruction()?;
                    if let Some(r) = &inst.result {
                        if seen.insert(r.clone(), ()).is_some() {
                            return Err(IrError::DuplicateValue {
                                line,
                                col,
                                function: symbol.clone(),
                                name: r.clone(),
                            });
                        }
                    }
                    if let Some(b) = blocks.last_mut() {
                        b.insts.push(inst);
                    }
                    if let Some(p) = positions.last_mut() {
                        p.push((line, col));
                    }
                }
            }
        }
        if blocks.is_empty() {
            return self.err("function body has no blocks");
        }

        let labels: BTreeSet<&str> = blocks.iter().map(|b| b.label.as_str()).collect();
        for (b, blk) in blocks.iter().enumerate() {
            for (i, inst) in blk.insts.iter().enumerate() {
                let mut targets: Vec<&str> = inst.kind.successors();
                if let InstKind::Phi { incoming, .. } = &inst.kind {
                    targets.extend(incoming.iter().map(|(_, l)| l.as_str()));
                }
                if let Some(t) = targets.into_iter().find(|t| !labels.contains(t)) {
                    let (line, col) = positions[b][i];
                    return Err(IrError::UnknownBlock { line, col, function: symbol.clone(), label: t.into() });
                }
            }
        }

        let demangled = demangled_of(&symbol);
        self.module.functions.push(FunctionDef {
            symbol,
            demangled,
            linkage,
            signature,
            params,
            blocks,
            address_taken: false,
        });
        Ok(())
    }

    // ---- instructions ----

    fn parse_instruction(&mut self) -> PResult<Instruction> {
        let result = match (self.peek(), self.peek_at(1)) {
            (Some(Tok::Local(n)), Some(Tok::Punct('='))) => {
                let n = n.clone();
                self.pos += 2;
                Some(n)
            }
            _ => None,
        };
        let start = self.pos;
        let opcode = match self.word() {
            Some(w) => String::from(w),
            None => return self.err("expected instruction opcode"),
        };
        if self.force_opaque {
            let kind = self.parse_generic_opaque(start, &opcode)?;
            return Ok(Instruction { result, kind });
        }
        self.pos += 1;
        let mut kind = self.parse_known(&opcode, start)?;
        let invariant = self.finish_instruction()?;
        if let InstKind::Load { invariant: inv, .. } = &mut kind {
            *inv = invariant;
        }
        Ok(Instruction { result, kind })
    }

    /// Consumes trailing attachments on the instruction's last line; returns
    /// whether `!invariant.load` was among them.
    fn finish_instruction(&mut self) -> PResult<bool> {
        let line = self.prev_line();
        let mut invariant = false;
        let mut depth = 0i32;
        while let Some(t) = self.toks.get(self.pos) {
            if depth <= 0 && t.line != line {
                break;
            }
            match &t.tok {
                Tok::Meta(m) if m == "invariant.load" => invariant = true,
                Tok::Punct('(' | '[' | '{') => depth += 1,
                Tok::Punct(')' | ']' | '}') => depth -= 1,
                _ => {}
            }
            self.pos += 1;
        }
        Ok(invariant)
    }

    /// Consumes an instruction of unknown shape, keeping its text and every
    /// identifier it mentions.
    fn parse_generic_opaque(&mut self, start: usize, opcode: &str) -> PResult<InstKind> {
        let mut depth = 0i32;
        let mut line = self.cur_line();
        while let Some(t) = self.toks.get(self.pos) {
            if depth <= 0 && t.line != line {
                let cont = matches!(&t.tok, Tok::Word(w) if CONTINUATION.contains(&w.as_str()));
                if !cont {
                    break;
                }
            }
            match t.tok {
                Tok::Punct('(' | '[' | '{') => depth += 1,
                Tok::Punct(')' | ']' | '}') => depth -= 1,
                _ => {}
            }
            line = t.line;
            self.pos += 1;
        }
        let mut operands = Vec::new();
        for t in &self.toks[start..self.pos] {
            match &t.tok {
                Tok::Local(n) => operands.push(Value::Local(n.clone())),
                Tok::Global(n) => operands.push(Value::Const(Const::Symbol(n.clone()))),
                _ => {}
            }
        }
        Ok(InstKind::Opaque {
            opcode: String::from(opcode),
            ty: None,
            operands,
            indices: Vec::new(),
            text: self.span_text(start),
        })
    }

    fn parse_known(&mut self, opcode: &str, start: usize) -> PResult<InstKind> {
        Ok(match opcode {
            "ret" => {
                if self.eat_word("void") {
                    InstKind::Return { value: None }
                } else {
                    InstKind::Return { value: Some(self.parse_operand()?) }
                }
            }
            "br" => {
                if self.is_word("label") {
                    InstKind::Branch { cond: None, targets: alloc::vec![self.expect_label_ref()?] }
                } else {
                    let c = self.parse_operand()?;
                    self.expect_punct(',')?;
                    let a = self.expect_label_ref()?;
                    self.expect_punct(',')?;
                    let b = self.expect_label_ref()?;
                    InstKind::Branch { cond: Some(c.value), targets: alloc::vec![a, b] }
                }
            }
            "switch" => {
                let v = self.parse_operand()?;
                self.expect_punct(',')?;
                let default = self.expect_label_ref()?;
                self.expect_punct('[')?;
                let mut cases = Vec::new();
                while !self.eat_punct(']') {
                    let c = self.parse_typed_const()?;
                    let Const::Int(k) = c.value else {
                        return self.err("switch case must be an integer");
                    };
                    self.expect_punct(',')?;
                    cases.push((k, self.expect_label_ref()?));
                }
                InstKind::Switch { ty: v.ty, value: v.value, default, cases }
            }
            "unreachable" => InstKind::Unreachable,
            "tail" | "musttail" | "notail" => {
                self.expect_word("call")?;
                self.parse_call(false)?
            }
            "call" => self.parse_call(false)?,
            "invoke" => self.parse_call(true)?,
            "load" => {
                self.eat_word("atomic");
                let volatile = self.eat_word("volatile");
                let ty = self.parse_type()?;
                self.expect_punct(',')?;
                let ptr = self.parse_operand()?;
                InstKind::Load { ty, ptr, volatile, invariant: false }
            }
            "store" => {
                self.eat_word("atomic");
                let volatile = self.eat_word("volatile");
                let value = self.parse_operand()?;
                self.expect_punct(',')?;
                let ptr = self.parse_operand()?;
                InstKind::Store { value, ptr, volatile }
            }
            "getelementptr" => {
                let inbounds = self.skip_gep_flags()?;
                let source_ty = self.parse_type()?;
                self.expect_punct(',')?;
                let base = self.parse_operand()?;
                let mut indices = Vec::new();
                while self.is_punct(',')
                    && (self.next_is_type_after_comma()
                        || matches!(self.peek_at(1), Some(Tok::Word(w)) if w == "inrange"))
                {
                    self.pos += 1;
                    if self.eat_word("inrange") {
                        self.skip_group()?;
                    }
                    indices.push(self.parse_operand()?);
                }
                InstKind::AddrCalc { inbounds, source_ty, base, indices }
            }
            "alloca" => {
                self.eat_word("inalloca");
                let ty = self.parse_type()?;
                let mut count = None;
                if self.is_punct(',') && self.next_is_type_after_comma() {
                    self.pos += 1;
                    count = Some(self.parse_operand()?);
                }
                InstKind::LocalAlloc { ty, count }
            }
            "phi" => {
                while self.word().is_some_and(|w| FAST_MATH.contains(&w)) {
                    self.pos += 1;
                }
                let ty = self.parse_type()?;
                let mut incoming = Vec::new();
                loop {
                    self.expect_punct('[')?;
                    let v = self.parse_value(&ty)?;
                    self.expect_punct(',')?;
                    let l = self.expect_local()?;
                    self.expect_punct(']')?;
                    incoming.push((v, l));
                    if !(self.is_punct(',') && matches!(self.peek_at(1), Some(Tok::Punct('[')))) {
                        break;
                    }
                    self.pos += 1;
                }
                InstKind::Phi { ty, incoming }
            }
            "icmp" => {
                self.eat_word("samesign");
                let pred = match self.word().and_then(IntPredicate::from_keyword) {
                    Some(p) => p,
                    None => return self.err("expected icmp predicate"),
                };
                self.pos += 1;
                let ty = self.parse_type()?;
                let lhs = self.parse_value(&ty)?;
                self.expect_punct(',')?;
                let rhs = self.parse_value(&ty)?;
                InstKind::Compare { pred, ty, lhs, rhs }
            }
            "select" => {
                while self.word().is_some_and(|w| FAST_MATH.contains(&w)) {
                    self.pos += 1;
                }
                let c = self.parse_operand()?;
                self.expect_punct(',')?;
                let a = self.parse_operand()?;
                self.expect_punct(',')?;
                let b = self.parse_operand()?;
                self.structured("select", Some(a.ty), alloc::vec![c.value, a.value, b.value], Vec::new(), start)
            }
            "extractvalue" => {
                let agg = self.parse_operand()?;
                let mut idx = Vec::new();
                while self.is_punct(',') && matches!(self.peek_at(1), Some(Tok::Num(_))) {
                    self.pos += 1;
                    idx.push(self.expect_uint()?);
                }
                self.structured("extractvalue", Some(agg.ty), alloc::vec![agg.value], idx, start)
            }
            "insertvalue" => {
                let agg = self.parse_operand()?;
                self.expect_punct(',')?;
                let elem = self.parse_operand()?;
                let mut idx = Vec::new();
                while self.is_punct(',') && matches!(self.peek_at(1), Some(Tok::Num(_))) {
                    self.pos += 1;
                    idx.push(self.expect_uint()?);
                }
                self.structured("insertvalue", Some(agg.ty), alloc::vec![agg.value, elem.value], idx, start)
            }
            "freeze" => {
                let v = self.parse_operand()?;
                self.structured("freeze", Some(v.ty), alloc::vec![v.value], Vec::new(), start)
            }
            _ => {
                if let Some(op) = CastOp::from_keyword(opcode) {
                    while matches!(self.word(), Some("nuw" | "nsw" | "nneg")) {
                        self.pos += 1;
                    }
                    let value = self.parse_operand()?;
                    self.expect_word("to")?;
                    let to = self.parse_type()?;
                    InstKind::Cast { op, value, to }
                } else if let Some(op) = IntOpKind::from_keyword(opcode) {
                    let mut flags = IntFlags::default();
                    loop {
                        match self.word() {
                            Some("nuw") => flags.nuw = true,
                            Some("nsw") => flags.nsw = true,
                            Some("exact") => flags.exact = true,
                            Some("disjoint") => flags.disjoint = true,
                            _ => break,
                        }
                        self.pos += 1;
                    }
                    let ty = self.parse_type()?;
                    let lhs = self.parse_value(&ty)?;
                    self.expect_punct(',')?;
                    let rhs = self.parse_value(&ty)?;
                    InstKind::IntOp { op, flags, ty, lhs, rhs }
                } else {
                    self.pos = start;
                    self.parse_generic_opaque(start, opcode)?
                }
            }
        })
    }

    /// After a ',' — is the next token the start of a typed operand (rather
    /// than `align N` or a metadata attachment)?
    fn next_is_type_after_comma(&self) -> bool {
        match self.peek_at(1) {
            Some(Tok::Word(w)) => is_type_word(w),
            Some(Tok::Punct('[' | '{' | '<')) | Some(Tok::Local(_)) => true,
            _ => false,
        }
    }

    fn structured(
        &self,
        opcode: &str,
        ty: Option<Type>,
        operands: Vec<Value>,
        indices: Vec<u64>,
        start: usize,
    ) -> InstKind {
        InstKind::Opaque { opcode: String::from(opcode), ty, operands, indices, text: self.span_text(start) }
    }

    fn skip_call_prefix(&mut self) -> PResult<()> {
        loop {
            if self.at_type_start() {
                return Ok(());
            }
            match self.peek().cloned() {
                Some(Tok::Word(w)) => {
                    self.pos += 1;
                    if w == "align" || w == "cc" || w == "dereferenceable" && !self.is_punct('(') {
                        if matches!(self.peek(), Some(Tok::Num(_))) {
                            self.pos += 1;
                        }
                    } else {
                        self.skip_group()?;
                    }
                }
                _ => return self.err("expected call return type"),
            }
        }
    }

    fn parse_call(&mut self, invoke: bool) -> PResult<InstKind> {
        self.skip_call_prefix()?;
        let t = self.parse_type()?;
        let (ret_ty, fn_ty) = match &t {
            Type::Function { ret, .. } => ((**ret).clone(), Some(t.clone())),
            _ => (t, None),
        };
        if self.eat_word("asm") {
            let mut side_effect = false;
            while let Some(w) = self.word() {
                match w {
                    "sideeffect" => side_effect = true,
                    "alignstack" | "inteldialect" | "unwind" => {}
                    _ => break,
                }
                self.pos += 1;
            }
            let template = self.expect_str()?;
            self.expect_punct(',')?;
            let constraints = self.expect_str()?;
            let args = self.parse_args()?;
            if invoke {
                return self.err("invoke of inline asm is not supported");
            }
            return Ok(InstKind::InlineAsm { ret_ty, side_effect, template, constraints, args });
        }
        let (line, col) = self.cur_pos();
        let callee = self.parse_value(&Type::ptr())?;
        if let Value::Const(Const::Symbol(s)) = &callee {
            self.call_refs.push((line, col, s.clone()));
        }
        let args = self.parse_args()?;
        if invoke {
            // function attributes / bundles precede `to label`
            while !self.is_word("to") {
                if self.peek().is_none() {
                    return self.err("expected 'to label' in invoke");
                }
                self.pos += 1;
            }
            self.pos += 1;
            let normal = self.expect_label_ref()?;
            self.expect_word("unwind")?;
            let unwind = if self.eat_word("to") {
                self.expect_word("caller")?;
                String::from("caller")
            } else {
                self.expect_label_ref()?
            };
            return Ok(InstKind::Invoke { ret_ty, fn_ty, callee, args, normal, unwind });
        }
        Ok(InstKind::Call { ret_ty, fn_ty, callee, args })
    }

    fn parse_args(&mut self) -> PResult<Vec<Operand>> {
        self.expect_punct('(')?;
        let mut args = Vec::new();
        if self.eat_punct(')') {
            return Ok(args);
        }
        loop {
            let ty = self.parse_type()?;
            // parameter attributes
            loop {
                match self.peek() {
                    Some(Tok::Word(w)) if !is_value_word(w) && !(matches!(ty, Type::Metadata) && is_type_word(w)) => {
                        let w = w.clone();
                        self.pos += 1;
                        if w == "align" || w == "alignstack" {
                            if matches!(self.peek(), Some(Tok::Num(_))) {
                                self.pos += 1;
                            } else {
                                self.skip_group()?;
                            }
                        } else {
                            self.skip_group()?;
                        }
                    }
                    _ => break,
                }
            }
            let value = self.parse_value(&ty)?;
            args.push(Operand { ty, value });
            if self.eat_punct(')') {
                return Ok(args);
            }
            self.expect_punct(',')?;
        }
    }

    // ---- post checks ----

    fn check_refs(&self) -> PResult<()> {
        for (line, col, name) in &self.named_refs {
            if !self.module.type_table.contains_key(name) {
                return Err(IrError::UnknownType { line: *line, col: *col, name: name.clone() });
            }
        }
        let known = self.module.symbols();
        for (line, col, name) in &self.call_refs {
            if !known.contains(name) {
                return Err(IrError::UnknownSymbol { line: *line, col: *col, name: name.clone() });
            }
        }
        Ok(())
    }
}

fn alias_target(c: &Const) -> Option<&str> {
    match c {
        Const::Symbol(s) => Some(s),
        Const::Cast { value, .. } => alias_target(&value.value),
        Const::Gep { base, .. } => alias_target(&base.value),
        _ => None,
    }
}

pub(crate) fn demangled_of(symbol: &str) -> Option<String> {
    let d = demangle(symbol);
    (d != symbol).then_some(d)
}

/// Drops block labels and type names from identifier lists captured by
/// generic opaque instructions.
fn filter_opaque_refs(module: &mut IrModule) {
    let type_names: BTreeSet<String> = module.type_table.keys().cloned().collect();
    for f in &mut module.functions {
        let labels: BTreeSet<String> = f.blocks.iter().map(|b| b.label.clone()).collect();
        let mut values: BTreeSet<String> = f.params.iter().cloned().collect();
        for b in &f.blocks {
            values.extend(b.insts.iter().filter_map(|i| i.result.clone()));
        }
        for b in &mut f.blocks {
            for inst in &mut b.insts {
                if let InstKind::Opaque { ty: None, operands, .. } = &mut inst.kind {
                    operands.retain(|v| match v {
                        Value::Local(n) => !labels.contains(n) && (values.contains(n) || !type_names.contains(n)),
                        _ => true,
                    });
                }
            }
        }
    }
}
