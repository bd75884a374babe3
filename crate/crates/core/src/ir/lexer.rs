use alloc::string::String;
use alloc::vec::Vec;

use super::Ref;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    /// `%name`, `%"quoted"`, `%12`
    Local(String),
    /// `@name`, `@"quoted"`, `@12`
    Global(String),
    /// `name:` at the start of a block
    Label(String),
    /// bare word: keyword, type name, attribute
    Word(String),
    /// integer or floating literal, verbatim
    Num(String),
    /// `"..."` with escapes decoded
    Str(Vec<u8>),
    /// `c"..."`
    CStr(Vec<u8>),
    /// `!name`, `!12`; a bare `!` (before `{` or `"`) carries an empty name
    Meta(String),
    /// `#12`
    Attr(String),
    /// `$comdat`
    Comdat(String),
    Punct(char),
    Ellipsis,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug)]
pub(crate) struct LexError {
    pub line: u32,
    pub col: u32,
    pub msg: &'static str,
}

fn is_ident_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'-' | b'$' | b'.' | b'_')
}

pub(crate) fn lex(src: &str) -> Result<Vec<Token>, LexError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut line_start = 0usize;
    while i < bytes.len() {
        let b = bytes[i];
        let col = (i - line_start + 1) as u32;
        let err = |msg| LexError { line, col, msg };
        match b {
            b'\n' => {
                line += 1;
                i += 1;
                line_start = i;
                continue;
            }
            b' ' | b'\t' | b'\r' => {
                i += 1;
                continue;
            }
            b';' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            _ => {}
        }
        let start = i;
        let tok = match b {
            b'%' | b'@' | b'!' | b'#' | b'$' => {
                i += 1;
                let name = if i < bytes.len() && bytes[i] == b'"' && b != b'!' {
                    let (s, next) = read_string(bytes, i).ok_or_else(|| err("unterminated string"))?;
                    i = next;
                    String::from_utf8_lossy(&s).into_owned()
                } else {
                    let s = i;
                    while i < bytes.len() && is_ident_char(bytes[i]) {
                        i += 1;
                    }
                    String::from(&src[s..i])
                };
                if name.is_empty() && b != b'!' {
                    return Err(err("empty identifier"));
                }
                match b {
                    b'%' => Tok::Local(name),
                    b'@' => Tok::Global(name),
                    b'!' => Tok::Meta(name),
                    b'#' => Tok::Attr(name),
                    _ => Tok::Comdat(name),
                }
            }
            b'"' => {
                let (s, next) = read_string(bytes, i).ok_or_else(|| err("unterminated string"))?;
                i = next;
                if i < bytes.len() && bytes[i] == b':' {
                    i += 1;
                    Tok::Label(String::from_utf8_lossy(&s).into_owned())
                } else {
                    Tok::Str(s)
                }
            }
            b'c' if bytes.get(i + 1) == Some(&b'"') => {
                let (s, next) = read_string(bytes, i + 1).ok_or_else(|| err("unterminated string"))?;
                i = next;
                Tok::CStr(s)
            }
            b'.' if bytes[i..].starts_with(b"...") => {
                i += 3;
                Tok::Ellipsis
            }
            b'-' | b'+' | b'0'..=b'9' => {
                i += 1;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || matches!(bytes[i], b'.' | b'_')) {
                    // exponent signs: 1.0e-5
                    i += 1;
                    if matches!(bytes[i - 1], b'e' | b'E')
                        && i < bytes.len()
                        && matches!(bytes[i], b'+' | b'-')
                        && !src[start..i].starts_with("0x")
                    {
                        i += 1;
                    }
                }
                let text = &src[start..i];
                if i < bytes.len() && bytes[i] == b':' && text.bytes().all(|c| c.is_ascii_digit()) {
                    i += 1;
                    Tok::Label(String::from(text))
                } else if text.bytes().all(|c| is_ident_char(c))
                    && text.bytes().any(|c| c.is_ascii_alphabetic())
                    && i < bytes.len()
                    && bytes[i] == b':'
                {
                    i += 1;
                    Tok::Label(String::from(text))
                } else {
                    Tok::Num(String::from(text))
                }
            }
            c if c.is_ascii_alphabetic() || c == b'_' || c == b'.' || c == b'$' => {
                while i < bytes.len() && is_ident_char(bytes[i]) {
                    i += 1;
                }
                let text = &src[start..i];
                if i < bytes.len() && bytes[i] == b':' {
                    i += 1;
                    Tok::Label(String::from(text))
                } else {
                    Tok::Word(String::from(text))
                }
            }
            b'=' | b',' | b'(' | b')' | b'[' | b']' | b'{' | b'}' | b'<' | b'>' | b'*' | b'|' | b':' => {
                i += 1;
                Tok::Punct(b as char)
            }
            _ => return Err(err("unexpected character")),
        };
        out.push(Token { tok, line, col, start, end: i });
    }
    Ok(out)
}

/// Reads a quoted string starting at the opening quote; returns the decoded
/// bytes and the index after the closing quote.
fn read_string(bytes: &[u8], open: usize) -> Option<(Vec<u8>, usize)> {
    let mut i = open + 1;
    let mut out = Vec::new();
    while i < bytes.len() {
        match bytes[i] {
            b'"' => return Some((out, i + 1)),
            b'\\' => {
                if bytes.get(i + 1) == Some(&b'\\') {
                    out.push(b'\\');
                    i += 2;
                } else {
                    let hi = hex_val(*bytes.get(i + 1)?);
                    let lo = hex_val(*bytes.get(i + 2)?);
                    match (hi, lo) {
                        (Some(h), Some(l)) => {
                            out.push(h * 16 + l);
                            i += 3;
                        }
                        _ => {
                            out.push(b'\\');
                            i += 1;
                        }
                    }
                }
            }
            c => {
                out.push(c);
                i += 1;
            }
        }
    }
    None
}

fn hex_val(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'a'..=b'f' => Some(b - b'a' + 10),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

/// Calls `f` for every `%` / `@` identifier in raw IR text, skipping string
/// literals and comments.
pub(crate) fn scan_refs(text: &str, f: &mut dyn FnMut(Ref<'_>)) {
    let Ok(tokens) = lex(text) else {
        return;
    };
    for t in &tokens {
        match &t.tok {
            Tok::Local(n) => f(Ref::Local(n)),
            Tok::Global(n) => f(Ref::Global(n)),
            _ => {}
        }
    }
}

/// Rewrites `%` / `@` identifiers in raw text; `map(is_global, name)` returns
/// a replacement name.
pub(crate) fn rewrite_refs(text: &str, map: &mut dyn FnMut(bool, &str) -> Option<String>) -> String {
    let Ok(tokens) = lex(text) else {
        return String::from(text);
    };
    let mut out = String::with_capacity(text.len());
    let mut at = 0;
    for t in &tokens {
        let (global, name) = match &t.tok {
            Tok::Local(n) => (false, n),
            Tok::Global(n) => (true, n),
            _ => continue,
        };
        if let Some(new) = map(global, name) {
            out.push_str(&text[at..t.start]);
            out.push(if global { '@' } else { '%' });
            out.push_str(&super::printer::quote_ident(&new));
            at = t.end;
        }
    }
    out.push_str(&text[at..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_labels_and_ids() {
        let toks = lex("bb1:\n  %x = add i32 %\"a b\", -7 ; c\n12:").unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(kinds[0], Tok::Label("bb1".into()));
        assert_eq!(kinds[1], Tok::Local("x".into()));
        assert_eq!(kinds[5], Tok::Local("a b".into()));
        assert_eq!(kinds[7], Tok::Num("-7".into()));
        assert_eq!(kinds[8], Tok::Label("12".into()));
        assert_eq!(toks[1].line, 2);
    }

    #[test]
    fn string_escapes() {
        let toks = lex(r#"c"a\00\\b""#).unwrap();
        assert_eq!(toks[0].tok, Tok::CStr(b"a\0\\b".to_vec()));
    }

    #[test]
    fn refs_skip_strings() {
        let mut seen = Vec::new();
        scan_refs(r#"call void asm "mov %rax", "r"(ptr @g, i32 %v)"#, &mut |r| seen.push(alloc::format!("{r:?}")));
        assert_eq!(seen.len(), 2);
    }
}
