//! Random integer expression trees, a reference interpreter on Rust's native
//! fixed-width integers (`checked_*` / `wrapping_*`), and lowering of a tree
//! to straight-line IR returning its value.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const WIDTHS: [u32; 4] = [8, 16, 32, 64];
const OPS: [&str; 13] =
    ["add", "sub", "mul", "udiv", "sdiv", "urem", "srem", "shl", "lshr", "ashr", "and", "or", "xor"];
const PREDS: [&str; 10] = ["eq", "ne", "ugt", "uge", "ult", "ule", "sgt", "sge", "slt", "sle"];

#[derive(Debug, Clone)]
pub enum Expr {
    Lit(u32, u64),
    Bin { op: &'static str, flags: Vec<&'static str>, a: Box<Expr>, b: Box<Expr> },
    Cast { op: &'static str, to: u32, a: Box<Expr> },
    Select { pred: &'static str, l: Box<Expr>, r: Box<Expr>, t: Box<Expr>, f: Box<Expr> },
}

impl Expr {
    pub fn width(&self) -> u32 {
        match self {
            Expr::Lit(w, _) => *w,
            Expr::Bin { a, .. } => a.width(),
            Expr::Cast { to, .. } => *to,
            Expr::Select { t, .. } => t.width(),
        }
    }
}

fn lit(rng: &mut ChaCha8Rng, w: u32) -> Expr {
    let v: u64 = match rng.random_range(0..4) {
        0 => rng.random_range(0..8),
        1 => u64::MAX >> (64 - w), // all ones
        2 => 1u64 << (w - 1),      // signed min
        _ => rng.random(),
    };
    Expr::Lit(w, v & (u64::MAX >> (64 - w)))
}

pub fn gen(rng: &mut ChaCha8Rng, w: u32, depth: u32) -> Expr {
    if depth == 0 || rng.random_ratio(1, 4) {
        return lit(rng, w);
    }
    match rng.random_range(0..10) {
        0..=5 => {
            let op = OPS[rng.random_range(0..OPS.len())];
            let allowed: &[&str] = match op {
                "add" | "sub" | "mul" | "shl" => &["nuw", "nsw"],
                "udiv" | "sdiv" | "lshr" | "ashr" => &["exact"],
                "or" => &["disjoint"],
                _ => &[],
            };
            let flags = allowed.iter().copied().filter(|_| rng.random_ratio(1, 3)).collect();
            let a = Box::new(gen(rng, w, depth - 1));
            // small shift amounts keep shifts interesting
            let b = if matches!(op, "shl" | "lshr" | "ashr") && rng.random_ratio(3, 4) {
                Box::new(Expr::Lit(w, rng.random_range(0..w as u64 + 2)))
            } else {
                Box::new(gen(rng, w, depth - 1))
            };
            Expr::Bin { op, flags, a, b }
        }
        6 | 7 => {
            let from = WIDTHS[rng.random_range(0..4)];
            let op = if from > w {
                "trunc"
            } else if from < w {
                ["zext", "sext"][rng.random_range(0..2)]
            } else {
                return gen(rng, w, depth - 1);
            };
            Expr::Cast { op, to: w, a: Box::new(gen(rng, from, depth - 1)) }
        }
        _ => {
            let cw = WIDTHS[rng.random_range(0..4)];
            Expr::Select {
                pred: PREDS[rng.random_range(0..PREDS.len())],
                l: Box::new(gen(rng, cw, depth - 1)),
                r: Box::new(gen(rng, cw, depth - 1)),
                t: Box::new(gen(rng, w, depth - 1)),
                f: Box::new(gen(rng, w, depth - 1)),
            }
        }
    }
}

/// Native arithmetic on one width; `None` is poison or undefined behaviour.
trait Native: Sized + Copy {
    fn bin(op: &str, flags: &[&str], a: u64, b: u64) -> Option<u64>;
    fn compare(pred: &str, a: u64, b: u64) -> bool;
    fn sext64(a: u64) -> i64;
}

macro_rules! native {
    ($u:ty, $s:ty) => {
        impl Native for $u {
            fn bin(op: &str, flags: &[&str], a: u64, b: u64) -> Option<u64> {
                let (a, b) = (a as $u, b as $u);
                let (sa, sb) = (a as $s, b as $s);
                let has = |f: &str| flags.contains(&f);
                let bits = <$u>::BITS;
                let r: $u = match op {
                    "add" | "sub" | "mul" => {
                        let (u, s) = match op {
                            "add" => (a.checked_add(b), sa.checked_add(sb)),
                            "sub" => (a.checked_sub(b), sa.checked_sub(sb)),
                            _ => (a.checked_mul(b), sa.checked_mul(sb)),
                        };
                        if (has("nuw") && u.is_none()) || (has("nsw") && s.is_none()) {
                            return None;
                        }
                        match op {
                            "add" => a.wrapping_add(b),
                            "sub" => a.wrapping_sub(b),
                            _ => a.wrapping_mul(b),
                        }
                    }
                    "udiv" => {
                        let q = a.checked_div(b)?;
                        if has("exact") && q.wrapping_mul(b) != a {
                            return None;
                        }
                        q
                    }
                    "sdiv" => {
                        let q = sa.checked_div(sb)?;
                        if has("exact") && q.wrapping_mul(sb) != sa {
                            return None;
                        }
                        q as $u
                    }
                    "urem" => a.checked_rem(b)?,
                    "srem" => sa.checked_rem(sb)? as $u,
                    "shl" => {
                        if b >= bits as $u {
                            return None;
                        }
                        let r = a << b;
                        if has("nuw") && r >> b != a {
                            return None;
                        }
                        if has("nsw") && (r as $s) >> b != sa {
                            return None;
                        }
                        r
                    }
                    "lshr" | "ashr" => {
                        if b >= bits as $u {
                            return None;
                        }
                        let r = if op == "lshr" { a >> b } else { (sa >> b) as $u };
                        let back = if op == "lshr" { r << b } else { ((r as $s) << b) as $u };
                        if has("exact") && back != a {
                            return None;
                        }
                        r
                    }
                    "and" => a & b,
                    "or" => {
                        if has("disjoint") && a & b != 0 {
                            return None;
                        }
                        a | b
                    }
                    "xor" => a ^ b,
                    _ => unreachable!(),
                };
                Some(r as u64)
            }

            fn compare(pred: &str, a: u64, b: u64) -> bool {
                let (a, b) = (a as $u, b as $u);
                let (sa, sb) = (a as $s, b as $s);
                match pred {
                    "eq" => a == b,
                    "ne" => a != b,
                    "ugt" => a > b,
                    "uge" => a >= b,
                    "ult" => a < b,
                    "ule" => a <= b,
                    "sgt" => sa > sb,
                    "sge" => sa >= sb,
                    "slt" => sa < sb,
                    _ => sa <= sb,
                }
            }

            fn sext64(a: u64) -> i64 {
                a as $u as $s as i64
            }
        }
    };
}

native!(u8, i8);
native!(u16, i16);
native!(u32, i32);
native!(u64, i64);

fn dispatch_bin(w: u32, op: &str, flags: &[&str], a: u64, b: u64) -> Option<u64> {
    match w {
        8 => u8::bin(op, flags, a, b),
        16 => u16::bin(op, flags, a, b),
        32 => u32::bin(op, flags, a, b),
        _ => u64::bin(op, flags, a, b),
    }
}

fn dispatch_cmp(w: u32, pred: &str, a: u64, b: u64) -> bool {
    match w {
        8 => u8::compare(pred, a, b),
        16 => u16::compare(pred, a, b),
        32 => u32::compare(pred, a, b),
        _ => u64::compare(pred, a, b),
    }
}

fn sext_from(w: u32, a: u64) -> i64 {
    match w {
        8 => u8::sext64(a),
        16 => u16::sext64(a),
        32 => u32::sext64(a),
        _ => u64::sext64(a),
    }
}

pub fn interp(e: &Expr) -> Option<u64> {
    match e {
        Expr::Lit(_, v) => Some(*v),
        Expr::Bin { op, flags, a, b } => dispatch_bin(a.width(), op, flags, interp(a)?, interp(b)?),
        Expr::Cast { op, to, a } => {
            let v = interp(a)?;
            let m = u64::MAX >> (64 - to);
            Some(match *op {
                "sext" => sext_from(a.width(), v) as u64 & m,
                _ => v & m,
            })
        }
        Expr::Select { pred, l, r, t, f } => {
            let c = dispatch_cmp(l.width(), pred, interp(l)?, interp(r)?);
            interp(if c { t } else { f })
        }
    }
}

struct Lower {
    lines: Vec<String>,
    next: usize,
}

impl Lower {
    fn operand(&mut self, e: &Expr) -> String {
        match e {
            Expr::Lit(w, v) => sext_from(*w, *v).to_string(),
            _ => self.emit(e),
        }
    }

    fn fresh(&mut self) -> String {
        self.next += 1;
        format!("%v{}", self.next)
    }

    fn emit(&mut self, e: &Expr) -> String {
        let w = e.width();
        let rhs = match e {
            Expr::Lit(w, v) => format!("add i{w} {}, 0", sext_from(*w, *v)),
            Expr::Bin { op, flags, a, b } => {
                let (a, b) = (self.operand(a), self.operand(b));
                let fl: String = flags.iter().map(|f| format!("{f} ")).collect();
                format!("{op} {fl}i{w} {a}, {b}")
            }
            Expr::Cast { op, to, a } => {
                let from = a.width();
                let a = self.operand(a);
                format!("{op} i{from} {a} to i{to}")
            }
            Expr::Select { pred, l, r, t, f } => {
                let cw = l.width();
                let (l, r) = (self.operand(l), self.operand(r));
                let c = self.fresh();
                self.lines.push(format!("  {c} = icmp {pred} i{cw} {l}, {r}"));
                let (t, f) = (self.operand(t), self.operand(f));
                format!("select i1 {c}, i{w} {t}, i{w} {f}")
            }
        };
        let name = self.fresh();
        self.lines.push(format!("  {name} = {rhs}"));
        name
    }
}

pub fn lower(e: &Expr) -> (String, String) {
    let mut l = Lower { lines: Vec::new(), next: 0 };
    let root = l.emit(e);
    let w = e.width();
    let text = format!("define i{w} @f() {{\nstart:\n{}\n  ret i{w} {root}\n}}\n", l.lines.join("\n"));
    (text, root)
}

/// A tree of the given width and depth bound, together with its IR text and
/// the name of the value holding the root.
pub fn random_case(rng: &mut ChaCha8Rng) -> (Expr, String, String) {
    let w = WIDTHS[rng.random_range(0..4)];
    let depth = rng.random_range(1..=8);
    let e = gen(rng, w, depth);
    let (text, root) = lower(&e);
    (e, text, root)
}
