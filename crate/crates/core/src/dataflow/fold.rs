//! Integer folding with LLVM wrap/poison semantics over widths up to 128.

use crate::ir::{CastOp, IntFlags, IntOpKind, IntPredicate};

/// A folded integer: the low `bits` of `raw` are significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IntValue {
    pub bits: u32,
    pub raw: u128,
}

impl IntValue {
    pub fn new(bits: u32, v: i128) -> Self {
        IntValue { bits, raw: to_raw(v, bits) }
    }

    pub fn unsigned(self) -> u128 {
        self.raw
    }

    pub fn signed(self) -> i128 {
        sext(self.raw, self.bits)
    }

    /// The representation used in value origins: signed, except `i1` which is 0/1.
    pub fn canonical(self) -> i128 {
        canonical(self.raw, self.bits)
    }
}

pub fn mask(bits: u32) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    }
}

pub fn to_raw(v: i128, bits: u32) -> u128 {
    (v as u128) & mask(bits)
}

pub fn sext(raw: u128, bits: u32) -> i128 {
    if bits == 0 || bits >= 128 {
        return raw as i128;
    }
    let sh = 128 - bits;
    ((raw << sh) as i128) >> sh
}

pub fn canonical(raw: u128, bits: u32) -> i128 {
    if bits == 1 {
        (raw & 1) as i128
    } else {
        sext(raw & mask(bits), bits)
    }
}

fn signed_fits(v: i128, bits: u32) -> bool {
    if bits >= 128 {
        return true;
    }
    let min = -(1i128 << (bits - 1));
    let max = (1i128 << (bits - 1)) - 1;
    (min..=max).contains(&v)
}

/// Folds a binary integer operation; `None` means the result is poison or
/// the operation is undefined (division by zero, signed overflow of `sdiv`).
pub fn fold_binop(op: IntOpKind, flags: IntFlags, bits: u32, a: u128, b: u128) -> Option<u128> {
    let m = mask(bits);
    let (a, b) = (a & m, b & m);
    let (sa, sb) = (sext(a, bits), sext(b, bits));
    let r = match op {
        IntOpKind::Add => {
            if flags.nuw && a.checked_add(b).is_none_or(|s| s > m) {
                return None;
            }
            if flags.nsw && sa.checked_add(sb).is_none_or(|s| !signed_fits(s, bits)) {
                return None;
            }
            a.wrapping_add(b)
        }
        IntOpKind::Sub => {
            if flags.nuw && a < b {
                return None;
            }
            if flags.nsw && sa.checked_sub(sb).is_none_or(|s| !signed_fits(s, bits)) {
                return None;
            }
            a.wrapping_sub(b)
        }
        IntOpKind::Mul => {
            if flags.nuw && a.checked_mul(b).is_none_or(|p| p > m) {
                return None;
            }
            if flags.nsw && sa.checked_mul(sb).is_none_or(|p| !signed_fits(p, bits)) {
                return None;
            }
            a.wrapping_mul(b)
        }
        IntOpKind::UDiv => {
            if b == 0 || (flags.exact && a % b != 0) {
                return None;
            }
            a / b
        }
        IntOpKind::SDiv => {
            if sb == 0 || (sb == -1 && !signed_fits(sa.checked_neg()?, bits)) {
                return None;
            }
            if flags.exact && sa % sb != 0 {
                return None;
            }
            (sa / sb) as u128
        }
        IntOpKind::URem => {
            if b == 0 {
                return None;
            }
            a % b
        }
        IntOpKind::SRem => {
            if sb == 0 || (sb == -1 && !signed_fits(sa.checked_neg()?, bits)) {
                return None;
            }
            (sa % sb) as u128
        }
        IntOpKind::Shl => {
            if b >= bits as u128 {
                return None;
            }
            let r = (a << b) & m;
            if flags.nuw && r >> b != a {
                return None;
            }
            if flags.nsw && sext(r, bits) >> b != sa {
                return None;
            }
            r
        }
        IntOpKind::LShr | IntOpKind::AShr => {
            if b >= bits as u128 {
                return None;
            }
            if flags.exact && a & mask(b as u32) != 0 {
                return None;
            }
            if op == IntOpKind::LShr {
                a >> b
            } else {
                (sa >> b) as u128
            }
        }
        IntOpKind::And => a & b,
        IntOpKind::Or => {
            if flags.disjoint && a & b != 0 {
                return None;
            }
            a | b
        }
        IntOpKind::Xor => a ^ b,
    };
    Some(r & m)
}

/// Folds an integer-to-integer cast. Pointer casts are treated as identity on
/// the integer representation.
pub fn fold_cast(op: CastOp, from_bits: u32, to_bits: u32, v: u128) -> Option<u128> {
    let v = v & mask(from_bits);
    match op {
        CastOp::Trunc | CastOp::ZExt | CastOp::BitCast | CastOp::PtrToInt | CastOp::IntToPtr => Some(v & mask(to_bits)),
        CastOp::SExt => Some((sext(v, from_bits) as u128) & mask(to_bits)),
        _ => None,
    }
}

pub fn fold_compare(pred: IntPredicate, bits: u32, a: u128, b: u128) -> bool {
    let m = mask(bits);
    let (a, b) = (a & m, b & m);
    let (sa, sb) = (sext(a, bits), sext(b, bits));
    match pred {
        IntPredicate::Eq => a == b,
        IntPredicate::Ne => a != b,
        IntPredicate::Ugt => a > b,
        IntPredicate::Uge => a >= b,
        IntPredicate::Ult => a < b,
        IntPredicate::Ule => a <= b,
        IntPredicate::Sgt => sa > sb,
        IntPredicate::Sge => sa >= sb,
        IntPredicate::Slt => sa < sb,
        IntPredicate::Sle => sa <= sb,
    }
}
