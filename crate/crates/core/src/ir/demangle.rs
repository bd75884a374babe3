//! Rust symbol demangling (legacy `_ZN...E` and v0 `_R...`).
//!
//! Output follows the alternate (hash-free) rendering of the reference
//! demangler: legacy paths drop a trailing `h` + 16 hex digit component,
//! v0 paths drop crate disambiguators. Anything that fails to decode is
//! returned unchanged.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

pub fn demangle(symbol: &str) -> String {
    let (core_sym, suffix) = split_suffix(symbol);
    let body = core_sym.strip_prefix("__").map(|s| alloc::format!("_{s}"));
    let body = body.as_deref().unwrap_or(core_sym);
    let out = if let Some(rest) = body.strip_prefix("_ZN").or_else(|| body.strip_prefix("ZN")) {
        legacy(rest)
    } else if let Some(rest) = body.strip_prefix("_R") {
        V0::new(rest).symbol()
    } else {
        None
    };
    match out {
        Some(mut s) => {
            s.push_str(suffix);
            s
        }
        None => String::from(symbol),
    }
}

/// Splits off `.llvm.NNN`-style suffixes that follow the mangled body.
fn split_suffix(symbol: &str) -> (&str, &str) {
    if let Some(i) = symbol.find(".llvm.") {
        return (&symbol[..i], "");
    }
    (symbol, "")
}

fn is_rust_hash(seg: &str) -> bool {
    seg.len() == 17 && seg.starts_with('h') && seg[1..].bytes().all(|b| b.is_ascii_hexdigit())
}

fn legacy(mut rest: &str) -> Option<String> {
    let mut segs: Vec<&str> = Vec::new();
    loop {
        if let Some(after) = rest.strip_prefix('E') {
            if !after.is_empty() {
                return None;
            }
            break;
        }
        let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 {
            return None;
        }
        let len: usize = rest[..digits].parse().ok()?;
        let seg = rest.get(digits..digits + len)?;
        segs.push(seg);
        rest = &rest[digits + len..];
    }
    if segs.is_empty() {
        return None;
    }
    if segs.len() > 1 && segs.last().is_some_and(|s| is_rust_hash(s)) {
        segs.pop();
    }
    let mut out = String::new();
    for (i, seg) in segs.iter().enumerate() {
        if i > 0 {
            out.push_str("::");
        }
        unescape_legacy(seg, &mut out)?;
    }
    Some(out)
}

fn unescape_legacy(seg: &str, out: &mut String) -> Option<()> {
    let mut s = seg;
    if s.starts_with("_$") {
        s = &seg[1..];
    }
    while !s.is_empty() {
        if let Some(r) = s.strip_prefix('$') {
            let end = r.find('$')?;
            let code = &r[..end];
            let ch = match code {
                "SP" => '@',
                "BP" => '*',
                "RF" => '&',
                "LT" => '<',
                "GT" => '>',
                "LP" => '(',
                "RP" => ')',
                "C" => ',',
                _ => {
                    let hex = code.strip_prefix('u')?;
                    char::from_u32(u32::from_str_radix(hex, 16).ok()?)?
                }
            };
            out.push(ch);
            s = &r[end + 1..];
        } else if let Some(r) = s.strip_prefix("..") {
            out.push_str("::");
            s = r;
        } else {
            let n = s.find(['$', '.']).unwrap_or(s.len());
            let n = if n == 0 { 1 } else { n };
            out.push_str(&s[..n]);
            s = &s[n..];
        }
    }
    Some(())
}

const MAX_DEPTH: u32 = 200;

struct V0<'a> {
    s: &'a [u8],
    pos: usize,
    depth: u32,
    out: String,
}

#[derive(Clone, Copy, PartialEq)]
enum Ctx {
    Value,
    Type,
}

impl<'a> V0<'a> {
    fn new(s: &'a str) -> Self {
        V0 { s: s.as_bytes(), pos: 0, depth: 0, out: String::new() }
    }

    fn symbol(mut self) -> Option<String> {
        if self.peek()?.is_ascii_digit() {
            self.decimal()?;
        }
        self.path(Ctx::Value)?;
        // instantiating crate and vendor suffix are not rendered
        Some(self.out)
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        Some(b)
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn decimal(&mut self) -> Option<u64> {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        core::str::from_utf8(&self.s[start..self.pos]).ok()?.parse().ok()
    }

    fn base62(&mut self) -> Option<u64> {
        if self.eat(b'_') {
            return Some(0);
        }
        let mut v: u64 = 0;
        loop {
            let b = self.next()?;
            if b == b'_' {
                return v.checked_add(1);
            }
            let d = match b {
                b'0'..=b'9' => b - b'0',
                b'a'..=b'z' => b - b'a' + 10,
                b'A'..=b'Z' => b - b'A' + 36,
                _ => return None,
            };
            v = v.checked_mul(62)?.checked_add(u64::from(d))?;
        }
    }

    fn disambiguator(&mut self) -> Option<u64> {
        if self.eat(b's') {
            self.base62()?.checked_add(1)
        } else {
            Some(0)
        }
    }

    fn ident(&mut self) -> Option<(String, u64)> {
        let dis = self.disambiguator()?;
        let punycode = self.eat(b'u');
        let len = self.decimal()? as usize;
        self.eat(b'_');
        let bytes = self.s.get(self.pos..self.pos + len)?;
        self.pos += len;
        if punycode {
            return None;
        }
        Some((String::from(core::str::from_utf8(bytes).ok()?), dis))
    }

    fn backref<T>(&mut self, f: impl FnOnce(&mut Self) -> Option<T>) -> Option<T> {
        let target = self.base62()? as usize;
        if target >= self.pos {
            return None;
        }
        let saved = self.pos;
        self.pos = target;
        let r = f(self);
        self.pos = saved;
        r
    }

    fn enter(&mut self) -> Option<()> {
        self.depth += 1;
        (self.depth <= MAX_DEPTH).then_some(())
    }

    fn path(&mut self, ctx: Ctx) -> Option<()> {
        self.enter()?;
        let tag = self.next()?;
        match tag {
            b'C' => {
                let (name, _) = self.ident()?;
                self.out.push_str(&name);
            }
            b'M' => {
                self.disambiguator()?;
                self.skip_path()?;
                self.out.push('<');
                self.ty()?;
                self.out.push('>');
            }
            b'X' => {
                self.disambiguator()?;
                self.skip_path()?;
                self.out.push('<');
                self.ty()?;
                self.out.push_str(" as ");
                self.path(Ctx::Type)?;
                self.out.push('>');
            }
            b'Y' => {
                self.out.push('<');
                self.ty()?;
                self.out.push_str(" as ");
                self.path(Ctx::Type)?;
                self.out.push('>');
            }
            b'N' => {
                let ns = self.next()?;
                self.path(ctx)?;
                let (name, dis) = self.ident()?;
                if ns.is_ascii_uppercase() {
                    self.out.push_str("::{");
                    match ns {
                        b'C' => self.out.push_str("closure"),
                        b'S' => self.out.push_str("shim"),
                        other => self.out.push(other as char),
                    }
                    if !name.is_empty() {
                        self.out.push(':');
                        self.out.push_str(&name);
                    }
                    let _ = write!(self.out, "#{dis}}}");
                } else if !name.is_empty() {
                    self.out.push_str("::");
                    self.out.push_str(&name);
                }
            }
            b'I' => {
                self.path(ctx)?;
                if ctx == Ctx::Value {
                    self.out.push_str("::");
                }
                self.out.push('<');
                let mut first = true;
                while !self.eat(b'E') {
                    if !first {
                        self.out.push_str(", ");
                    }
                    first = false;
                    self.generic_arg()?;
                }
                self.out.push('>');
            }
            b'B' => self.backref(|p| p.path(ctx))?,
            _ => return None,
        }
        self.depth -= 1;
        Some(())
    }

    /// Parses a path without rendering it (impl paths).
    fn skip_path(&mut self) -> Option<()> {
        let saved = core::mem::take(&mut self.out);
        let r = self.path(Ctx::Type);
        self.out = saved;
        r
    }

    fn generic_arg(&mut self) -> Option<()> {
        if self.eat(b'L') {
            let lt = self.base62()?;
            self.lifetime(lt);
            Some(())
        } else if self.eat(b'K') {
            self.konst()
        } else {
            self.ty()
        }
    }

    fn lifetime(&mut self, lt: u64) {
        if lt == 0 {
            self.out.push_str("'_");
        } else {
            let _ = write!(self.out, "'_{lt}");
        }
    }

    fn konst(&mut self) -> Option<()> {
        if self.eat(b'p') {
            self.out.push('_');
            return Some(());
        }
        if self.eat(b'B') {
            return self.backref(|p| p.konst());
        }
        let t = self.next()?;
        let neg = self.eat(b'n');
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_hexdigit()) {
            self.pos += 1;
        }
        let hex = core::str::from_utf8(&self.s[start..self.pos]).ok()?;
        if !self.eat(b'_') {
            return None;
        }
        let v = if hex.is_empty() { 0 } else { u128::from_str_radix(hex, 16).ok()? };
        match t {
            b'b' => self.out.push_str(if v == 0 { "false" } else { "true" }),
            b'c' => {
                let c = char::from_u32(u32::try_from(v).ok()?)?;
                let _ = write!(self.out, "{c:?}");
            }
            b'a' | b'h' | b'i' | b'j' | b'l' | b'm' | b'n' | b'o' | b's' | b't' | b'x' | b'y' => {
                if neg {
                    self.out.push('-');
                }
                let _ = write!(self.out, "{v}");
            }
            _ => return None,
        }
        Some(())
    }

    fn basic(b: u8) -> Option<&'static str> {
        Some(match b {
            b'a' => "i8",
            b'b' => "bool",
            b'c' => "char",
            b'd' => "f64",
            b'e' => "str",
            b'f' => "f32",
            b'h' => "u8",
            b'i' => "isize",
            b'j' => "usize",
            b'l' => "i32",
            b'm' => "u32",
            b'n' => "i128",
            b'o' => "u128",
            b's' => "i16",
            b't' => "u16",
            b'u' => "()",
            b'v' => "...",
            b'x' => "i64",
            b'y' => "u64",
            b'z' => "!",
            b'p' => "_",
            _ => return None,
        })
    }

    fn ty(&mut self) -> Option<()> {
        self.enter()?;
        let tag = self.peek()?;
        if let Some(name) = Self::basic(tag) {
            self.pos += 1;
            self.out.push_str(name);
            self.depth -= 1;
            return Some(());
        }
        self.pos += 1;
        match tag {
            b'R' | b'Q' => {
                self.out.push('&');
                if self.eat(b'L') {
                    let lt = self.base62()?;
                    if lt != 0 {
                        self.lifetime(lt);
                        self.out.push(' ');
                    }
                }
                if tag == b'Q' {
                    self.out.push_str("mut ");
                }
                self.ty()?;
            }
            b'P' => {
                self.out.push_str("*const ");
                self.ty()?;
            }
            b'O' => {
                self.out.push_str("*mut ");
                self.ty()?;
            }
            b'A' => {
                self.out.push('[');
                self.ty()?;
                self.out.push_str("; ");
                self.konst()?;
                self.out.push(']');
            }
            b'S' => {
                self.out.push('[');
                self.ty()?;
                self.out.push(']');
            }
            b'T' => {
                self.out.push('(');
                let mut n = 0;
                while !self.eat(b'E') {
                    if n > 0 {
                        self.out.push_str(", ");
                    }
                    self.ty()?;
                    n += 1;
                }
                if n == 1 {
                    self.out.push(',');
                }
                self.out.push(')');
            }
            b'F' => {
                if self.eat(b'G') {
                    self.base62()?;
                }
                if self.eat(b'U') {
                    self.out.push_str("unsafe ");
                }
                if self.eat(b'K') {
                    if self.eat(b'C') {
                        self.out.push_str("extern \"C\" ");
                    } else {
                        let (abi, _) = self.ident()?;
                        let _ = write!(self.out, "extern \"{}\" ", abi.replace('_', "-"));
                    }
                }
                self.out.push_str("fn(");
                let mut n = 0;
                while !self.eat(b'E') {
                    if n > 0 {
                        self.out.push_str(", ");
                    }
                    self.ty()?;
                    n += 1;
                }
                self.out.push(')');
                if self.peek() == Some(b'u') {
                    self.pos += 1;
                } else {
                    self.out.push_str(" -> ");
                    self.ty()?;
                }
            }
            b'D' => {
                if self.eat(b'G') {
                    self.base62()?;
                }
                self.out.push_str("dyn ");
                let mut n = 0;
                while !self.eat(b'E') {
                    if n > 0 {
                        self.out.push_str(" + ");
                    }
                    self.dyn_trait()?;
                    n += 1;
                }
                if !self.eat(b'L') {
                    return None;
                }
                let lt = self.base62()?;
                if lt != 0 {
                    self.out.push_str(" + ");
                    self.lifetime(lt);
                }
            }
            b'B' => self.backref(|p| p.ty())?,
            _ => {
                self.pos -= 1;
                self.path(Ctx::Type)?;
            }
        }
        self.depth -= 1;
        Some(())
    }

    fn dyn_trait(&mut self) -> Option<()> {
        // A trait path whose generic list may be extended by `p` bindings.
        let start_len = self.out.len();
        self.path(Ctx::Type)?;
        let mut open = false;
        while self.eat(b'p') {
            if !open {
                if self.out.ends_with('>') && self.out.len() > start_len {
                    self.out.pop();
                    self.out.push_str(", ");
                } else {
                    self.out.push('<');
                }
                open = true;
            } else {
                self.out.push_str(", ");
            }
            let (name, _) = self.ident()?;
            self.out.push_str(&name);
            self.out.push_str(" = ");
            self.ty()?;
        }
        if open {
            self.out.push('>');
        }
        Some(())
    }
}
