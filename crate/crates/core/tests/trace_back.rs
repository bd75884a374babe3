use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use surfmap_core::dataflow::{trace_back, ValueOrigin, DEFAULT_BUDGET};
use surfmap_core::ir::{parse_module, ModuleView, Value};
use surfmap_core::vtable::VTableRegistry;

const EXAMPLE: &str = r#"
@G = internal global i64 5
@H = internal constant { ptr, i32 } { ptr @target, i32 9 }

declare ptr @malloc(i64)
declare i64 @ext()

define void @target() {
start:
  ret void
}

define i64 @seven() {
start:
  ret i64 7
}

define i64 @f(i64 %p, i1 %c, ptr %q) {
start:
  %slot = alloca i64, align 8
  store i64 %p, ptr %slot, align 8
  %a = load i64, ptr %slot, align 8
  %b = call i64 @seven()
  %sel = select i1 %c, i64 %a, i64 %b
  %g = load i64, ptr @G, align 8
  %h = getelementptr inbounds { ptr, i32 }, ptr @H, i32 0, i32 1
  %hv = load i32, ptr %h, align 4
  %fp = load ptr, ptr @H, align 8
  %heap = call ptr @malloc(i64 16)
  store ptr @seven, ptr %heap, align 8
  %hf = load ptr, ptr %heap, align 8
  %x = call i64 @ext()
  %fromq = load i64, ptr %q, align 8
  %sum = add i64 %p, 1
  br label %loop

loop:
  %i = phi i64 [ 0, %start ], [ %i.next, %loop ]
  %i.next = add i64 %i, 1
  %done = icmp eq i64 %i.next, 10
  br i1 %done, label %exit, label %loop

exit:
  ret i64 %sel
}
"#;

fn origins(name: &str) -> BTreeSet<ValueOrigin> {
    let m = parse_module(EXAMPLE).unwrap();
    let view = ModuleView::new(&m);
    let reg = VTableRegistry::build(&m);
    trace_back(&view, &reg, "f", &Value::local(name), DEFAULT_BUDGET)
}

fn set(items: impl IntoIterator<Item = ValueOrigin>) -> BTreeSet<ValueOrigin> {
    items.into_iter().collect()
}

#[test]
fn examples() {
    let param = |i| ValueOrigin::Parameter("f".into(), i);
    assert_eq!(origins("a"), set([param(0)]));
    assert_eq!(origins("sel"), set([param(0), ValueOrigin::Constant(7)]));
    // a mutable global whose address never escapes: initialiser only
    assert_eq!(origins("g"), set([ValueOrigin::Constant(5)]));
    assert_eq!(origins("hv"), set([ValueOrigin::Constant(9)]));
    assert_eq!(origins("fp"), set([ValueOrigin::FunctionAddress("target".into())]));
    assert_eq!(origins("hf"), set([ValueOrigin::FunctionAddress("seven".into())]));
    assert!(origins("x").iter().any(ValueOrigin::is_unknown));
    assert_eq!(origins("fromq"), set([ValueOrigin::LoadFromUnknown]));
    assert!(origins("sum").contains(&param(0)));
    assert!(origins("i").contains(&ValueOrigin::Constant(0)));
}

#[test]
fn exhausted_budget_is_unknown() {
    let m = parse_module(EXAMPLE).unwrap();
    let view = ModuleView::new(&m);
    let reg = VTableRegistry::build(&m);
    let o = trace_back(&view, &reg, "f", &Value::local("sel"), 1);
    assert!(o.contains(&ValueOrigin::Unknown), "{o:?}");
}

/// A random function: a chain of blocks, each defining values from earlier
/// ones through arithmetic, selects, stack slots, phis and calls.
fn random_module(rng: &mut ChaCha8Rng) -> (String, Vec<String>) {
    let mut out = String::from("declare i64 @opaque(i64)\n\n");
    out += "define i64 @leaf(i64 %x) {\nstart:\n  %r = add i64 %x, 3\n  ret i64 %r\n}\n\n";
    out += "define i64 @konst() {\nstart:\n  ret i64 42\n}\n\n";
    out += "define i64 @f(i64 %p0, i64 %p1, i1 %c) {\nstart:\n";
    let mut vals: Vec<String> = vec!["%p0".into(), "%p1".into()];
    let mut n = 0;
    let fresh = |n: &mut usize| {
        *n += 1;
        format!("%v{n}")
    };
    let blocks = rng.random_range(1..4);
    for bi in 0..blocks {
        let label = if bi == 0 { "start".to_string() } else { format!("b{bi}") };
        if bi > 0 {
            out += &format!("{label}:\n");
            // self-loop phi through the previous block's values
            let v = fresh(&mut n);
            let a = vals[rng.random_range(0..vals.len())].clone();
            let prev = if bi == 1 { "start".into() } else { format!("b{}", bi - 1) };
            out += &format!("  {v} = phi i64 [ {a}, %{prev} ], [ {v}.n, %{label} ]\n");
            out += &format!("  {v}.n = add i64 {v}, 1\n");
            vals.push(v);
        }
        for _ in 0..rng.random_range(2..8) {
            let pick = |rng: &mut ChaCha8Rng, vals: &Vec<String>| -> String {
                if rng.random_ratio(1, 4) {
                    rng.random_range(-5i64..50).to_string()
                } else {
                    vals[rng.random_range(0..vals.len())].clone()
                }
            };
            let v = fresh(&mut n);
            let (a, b) = (pick(rng, &vals), pick(rng, &vals));
            match rng.random_range(0..6) {
                0 => out += &format!("  {v} = add i64 {a}, {b}\n"),
                1 => out += &format!("  {v} = select i1 %c, i64 {a}, i64 {b}\n"),
                2 => {
                    out += &format!("  {v}.s = alloca i64, align 8\n  store i64 {a}, ptr {v}.s, align 8\n");
                    out += &format!("  {v} = load i64, ptr {v}.s, align 8\n");
                }
                3 => out += &format!("  {v} = call i64 @leaf(i64 {a})\n"),
                4 => out += &format!("  {v} = call i64 @konst()\n"),
                _ => out += &format!("  {v} = call i64 @opaque(i64 {a})\n"),
            }
            vals.push(v);
        }
        if bi + 1 < blocks {
            let last = vals.last().unwrap();
            out += &format!("  {last}.c = icmp eq i64 {last}, 0\n");
            out += &format!("  br i1 {last}.c, label %b{}, label %{label}\n", bi + 1);
        }
    }
    out += &format!("  ret i64 {}\n}}\n", vals.last().unwrap());
    let names = vals.iter().map(|v| v.trim_start_matches('%').to_string()).collect();
    (out, names)
}

#[test]
fn monotone_in_budget() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    for case in 0..100 {
        let (text, names) = random_module(&mut rng);
        let m = parse_module(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        let view = ModuleView::new(&m);
        let reg = VTableRegistry::build(&m);
        for name in &names {
            let v = Value::local(name);
            let runs: Vec<BTreeSet<ValueOrigin>> =
                [1, 2, 4, 8, 16, 64, 512].iter().map(|&b| trace_back(&view, &reg, "f", &v, b)).collect();
            for (i, lo) in runs.iter().enumerate() {
                for hi in &runs[i..] {
                    if hi.contains(&ValueOrigin::Unknown) {
                        continue;
                    }
                    let concrete: BTreeSet<_> = lo.iter().filter(|o| !o.is_unknown()).cloned().collect();
                    assert!(concrete.is_subset(hi), "case {case} %{name}: {lo:?} vs {hi:?}\n{text}");
                    checked += !concrete.is_empty() as usize;
                }
            }
        }
    }
    assert!(checked > 1000, "only {checked} non-trivial comparisons");
}
