//! `const_eval` against the reference interpreter of `oracle::const_tree`.

mod oracle;

use oracle::const_tree::{interp, random_case};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use surfmap_core::dataflow::const_eval;
use surfmap_core::ir::{parse_module, ModuleView, Type, Value};

#[test]
fn matches_native_interpreter_on_random_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c0de);
    let (mut poison, mut defined) = (0, 0);
    for case in 0..1000 {
        let (e, text, root) = random_case(&mut rng);
        let m = parse_module(&text).unwrap_or_else(|err| panic!("case {case}: {err}\n{text}"));
        let view = ModuleView::new(&m);
        let got = const_eval(&view, "f", &Value::local(root.trim_start_matches('%')), &Type::Int(e.width()));
        let want = interp(&e);
        assert_eq!(got.map(|v| v.unsigned() as u64), want, "case {case}\n{text}");
        if want.is_some() {
            defined += 1;
        } else {
            poison += 1;
        }
    }
    // both outcomes are exercised
    assert!(defined > 300 && poison > 50, "defined {defined}, poison {poison}");
}

#[test]
fn examples() {
    let text = "define i32 @g(i32 %p) {\nstart:\n  %a = shl i32 1, 4\n  %b = or disjoint i32 %a, 3\n  %c = trunc i32 %b to i8\n  %d = sext i8 -1 to i32\n  %e = add i32 %p, 1\n  %s = udiv i32 7, 0\n  ret i32 %b\n}\n";
    let m = parse_module(text).unwrap();
    let view = ModuleView::new(&m);
    let ev = |n: &str, w: u32| const_eval(&view, "g", &Value::local(n), &Type::Int(w)).map(|v| v.signed());
    assert_eq!(ev("b", 32), Some(19));
    assert_eq!(ev("c", 8), Some(19));
    assert_eq!(ev("d", 32), Some(-1));
    assert_eq!(ev("e", 32), None);
    assert_eq!(ev("s", 32), None);
}
