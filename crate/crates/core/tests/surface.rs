use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::Instant;

mod oracle;

use oracle::call_graphs::{RandomGraph, SINKS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surfmap_core::callgraph::{resolve_fixed_point, CallGraph};
use surfmap_core::dataflow::{Dataflow, Slice};
use surfmap_core::ir::{parse_module, IrModule, ModuleView};
use surfmap_core::strategy::ResourceAxis;
use surfmap_core::surface::*;
use surfmap_core::vtable::VTableRegistry;
use surfmap_core::ConfigError;

const SYSCALLS: &str = include_str!("../../../data/syscalls_x86_64.tsv");
const STATX_FLAGS: &str = include_str!("../../../data/statx_flags.tsv");

fn spec(apis: &[&str]) -> SinkSpec {
    SinkSpec {
        apis: apis.iter().map(|a| (a.to_string(), ResourceAxis::DiskBandwidth)).collect(),
        syscall_wrappers: vec!["syscall".into()],
        inline_syscalls: vec![AsmSyscallPattern {
            instruction: "syscall".into(),
            number_register: "rax".into(),
            arg_registers: ["rdi", "rsi", "rdx", "r10", "r8", "r9"].map(String::from).to_vec(),
        }],
        sensitive_args: vec![SensitiveArg { sink: "statx".into(), arg: 2, table: "statx_flags".into() }],
        path_args: vec![PathArg { sink: "statx".into(), arg: 1 }],
    }
}

fn entry(name: &str, syms: &[&str]) -> EntryPoint {
    EntryPoint {
        interface_name: name.into(),
        symbols: syms.iter().map(|s| s.to_string()).collect(),
        source: EntrySource::ExportList,
    }
}

struct Analysis {
    m: IrModule,
}

impl Analysis {
    fn new(text: &str) -> Self {
        Analysis { m: parse_module(text).unwrap() }
    }

    fn run<T>(&self, f: impl FnOnce(&Dataflow<'_, '_>, &CallGraph) -> T) -> T {
        let view = ModuleView::new(&self.m);
        let reg = VTableRegistry::build(&self.m);
        let g = resolve_fixed_point(&self.m, &reg);
        let df = Dataflow::new(&view, &reg, &g);
        f(&df, &g)
    }

    fn findings(&self, e: &EntryPoint, spec: &SinkSpec, diags: &mut Vec<String>) -> Vec<SinkFinding> {
        let syscalls = SyscallTable::from_tsv(SYSCALLS).unwrap();
        let flags =
            BTreeMap::from([("statx_flags".to_string(), FlagTable::from_tsv("statx_flags", STATX_FLAGS).unwrap())]);
        self.run(|df, g| analyze_entry(df, g, e, SurfaceInputs { spec, syscalls: &syscalls, flags: &flags }, diags))
    }
}

// ---------------------------------------------------------------- entry points

const HOST: &str = r#"
define i32 @_ZN4host4wasi9path_open17h0123456789abcdefE(i32 %fd) {
start:
  ret i32 %fd
}
define i32 @_ZN4host4wasi9path_open28_$u7b$$u7b$closure$u7d$$u7d$17h1111111111111111E(i32 %fd) {
start:
  ret i32 %fd
}
define i32 @_ZN4host5wasix9sock_send17h2222222222222222E(i32 %fd) {
start:
  ret i32 %fd
}
define i32 @_ZN4host7wasiful4util17h3333333333333333E(i32 %fd) {
start:
  ret i32 %fd
}
define i32 @fd_sync_impl(i32 %fd) {
start:
  ret i32 %fd
}
"#;

fn entry_config(patterns: &[&str], exports: &[(&str, &[&str])]) -> EntryConfig {
    EntryConfig {
        patterns: patterns.iter().map(|p| p.to_string()).collect(),
        exports: exports.iter().map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect())).collect(),
    }
}

#[test]
fn pattern_selects_interface_and_its_closures() {
    let m = parse_module(HOST).unwrap();
    let (entries, diags) = find_entry_points(&m, Some(&entry_config(&["wasi"], &[]))).unwrap();
    assert!(diags.is_empty());
    assert_eq!(entries.len(), 1, "{entries:?}");
    assert_eq!(entries[0].interface_name, "path_open");
    assert_eq!(entries[0].source, EntrySource::ConfigPattern);
    // Whole segments only: `wasiful` is not `wasi`.
    assert_eq!(entries[0].symbols.len(), 2);
    assert!(entries[0].symbols.iter().all(|s| s.contains("path_open")));
}

#[test]
fn wildcard_and_exports_combine_sorted() {
    let m = parse_module(HOST).unwrap();
    let cfg = entry_config(&["host::*"], &[("fd_sync", &["fd_sync_impl"])]);
    let (entries, _) = find_entry_points(&m, Some(&cfg)).unwrap();
    let names: Vec<&str> = entries.iter().map(|e| e.interface_name.as_str()).collect();
    assert_eq!(names, ["fd_sync", "path_open", "sock_send", "util"]);
    assert_eq!(entries[0].source, EntrySource::ExportList);
    assert_eq!(entries[0].symbols, ["fd_sync_impl"]);
}

#[test]
fn unmatched_patterns_give_diagnostics() {
    let m = parse_module(HOST).unwrap();
    let cfg = entry_config(&["preview_2"], &[("nope", &["missing"])]);
    let (entries, diags) = find_entry_points(&m, Some(&cfg)).unwrap();
    assert!(entries.is_empty());
    assert_eq!(diags.len(), 2, "{diags:?}");
    assert!(diags.iter().any(|d| d.contains("matched nothing")));
}

#[test]
fn missing_or_empty_section_is_a_config_error() {
    let m = parse_module(HOST).unwrap();
    assert_eq!(find_entry_points(&m, None), Err(ConfigError("entry_points".into())));
    assert_eq!(find_entry_points(&m, Some(&EntryConfig::default())), Err(ConfigError("entry_points".into())));
}

#[test]
fn path_segments_respect_generics() {
    assert_eq!(path_segments("<a::B as c::D>::f::{{closure}}"), ["<a::B as c::D>", "f", "{{closure}}"]);
    assert_eq!(path_segments("a::<impl x::Y<fn() -> u8>>::g"), ["a", "<impl x::Y<fn() -> u8>>", "g"]);
    assert_eq!(match_entry_pattern("a", "a::<impl x::Y<fn() -> u8>>::g"), Some("g".into()));
    assert_eq!(match_entry_pattern("a::g", "a::g"), None);
}

// ------------------------------------------------------------- sinks, recovery

const SYSCALL_MODULE: &str = r#"
@.path = private unnamed_addr constant [10 x i8] c"/tmp/data\00", align 1

declare i64 @syscall(i64, ...)
declare i32 @statx(i32, ptr, i32, i32, ptr)
declare i32 @fsync(i32)

define i64 @open_literal(ptr %p) {
start:
  %r = call i64 (i64, ...) @syscall(i64 257, i32 -100, ptr %p, i32 0)
  ret i64 %r
}

define i64 @open_variable(i64 %nr, ptr %p) {
start:
  %r = call i64 (i64, ...) @syscall(i64 %nr, i32 -100, ptr %p, i32 0)
  ret i64 %r
}

define internal i64 @raw3(i64 %nr, i64 %a, i64 %b, i64 %c) {
start:
  %r = call i64 asm sideeffect "syscall", "={rax},{rax},{rdi},{rsi},{rdx},~{rcx},~{r11},~{memory}"(i64 %nr, i64 %a, i64 %b, i64 %c)
  ret i64 %r
}

define i64 @unlink_asm(i64 %dirfd, i64 %path) {
start:
  %r = call i64 @raw3(i64 263, i64 %dirfd, i64 %path, i64 0)
  ret i64 %r
}

define internal i32 @stat_with(ptr %buf, i32 %flags) {
start:
  %r = call i32 @statx(i32 -100, ptr @.path, i32 %flags, i32 2047, ptr %buf)
  ret i32 %r
}

define i32 @stat_sync(ptr %buf) {
start:
  %r = call i32 @stat_with(ptr %buf, i32 0)
  ret i32 %r
}

define i32 @stat_two_bits(ptr %buf) {
start:
  %f = or i32 256, 4096
  %r = call i32 @stat_with(ptr %buf, i32 %f)
  ret i32 %r
}

define i32 @stat_caller_flags(ptr %buf, i32 %flags) {
start:
  %r = call i32 @stat_with(ptr %buf, i32 %flags)
  ret i32 %r
}

define i32 @sync_only(i32 %fd) {
start:
  %r = call i32 @fsync(i32 %fd)
  ret i32 %r
}
"#;

fn recover_number(func: &str) -> (Option<(u64, String)>, Vec<String>) {
    let a = Analysis::new(SYSCALL_MODULE);
    let table = SyscallTable::from_tsv(SYSCALLS).unwrap();
    let spec = spec(&[]);
    a.run(|df, g| {
        let sites = sink_sites(df.view, g, &spec, func);
        assert_eq!(sites.len(), 1);
        assert_eq!(sites[0].kind, SinkKind::RawSyscall);
        let slice =
            Slice { entry: func.into(), call_chain: vec![sites[0].location.clone()], sink: sites[0].location.clone() };
        let mut diags = Vec::new();
        (recover_syscall_number(df, &sites[0], &slice, &table, &mut diags), diags)
    })
}

#[test]
fn wrapper_number_literal() {
    let table = SyscallTable::from_tsv(SYSCALLS).unwrap();
    assert_eq!(table.name(257), Some("openat"));
    let (got, diags) = recover_number("open_literal");
    assert_eq!(got, Some((257, "openat".into())));
    assert!(diags.is_empty());
}

#[test]
fn wrapper_number_variable() {
    let (got, diags) = recover_number("open_variable");
    assert_eq!(got, None);
    assert_eq!(diags.len(), 1);
    assert!(diags[0].starts_with("unresolved syscall number"));
}

#[test]
fn inline_asm_number_through_helper() {
    let a = Analysis::new(SYSCALL_MODULE);
    let mut diags = Vec::new();
    let f = a.findings(&entry("path_unlink_file", &["unlink_asm"]), &spec(&[]), &mut diags);
    assert_eq!(f.len(), 1);
    assert_eq!(
        (f[0].sink_name.as_str(), f[0].sink_kind, f[0].syscall_number),
        ("unlinkat", SinkKind::RawSyscall, Some(263))
    );
    assert_eq!(f[0].shortest_slice.call_chain.len(), 2);
    // dirfd and path flow from the entry's parameters into asm operands 1 and 2
    // (operand 0 carries the number).
    let tainted: BTreeSet<(usize, usize)> = f[0].taint.iter().map(|t| (t.source.1, t.sink.1)).collect();
    assert_eq!(tainted, BTreeSet::from([(0, 1), (1, 2)]));
    assert!(diags.is_empty());
}

fn statx_recovered(func: &str) -> Vec<RecoveredArg> {
    let a = Analysis::new(SYSCALL_MODULE);
    let f = a.findings(&entry("path_filestat_get", &[func]), &spec(&["statx"]), &mut Vec::new());
    assert_eq!(f.len(), 1);
    assert_eq!(f[0].paths, [(1, "/tmp/data".to_string())]);
    f[0].recovered.clone()
}

#[test]
fn statx_sync_as_stat() {
    let table = FlagTable::from_tsv("statx_flags", STATX_FLAGS).unwrap();
    let zero = table.entries.iter().find(|(n, _)| n == "AT_STATX_SYNC_AS_STAT").unwrap().1;
    let r = statx_recovered("stat_sync");
    assert_eq!(r.len(), 1);
    assert_eq!((r[0].arg, r[0].value), (2, Some(i128::from(zero))));
    assert_eq!(r[0].names, ["AT_STATX_SYNC_AS_STAT"]);
}

#[test]
fn statx_two_bit_union() {
    let r = statx_recovered("stat_two_bits");
    assert_eq!(r[0].value, Some(0x1100));
    assert_eq!(r[0].names, ["AT_SYMLINK_NOFOLLOW", "AT_EMPTY_PATH"]);
}

#[test]
fn statx_flags_from_caller_are_tainted() {
    let r = statx_recovered("stat_caller_flags");
    assert_eq!(r.len(), 1);
    assert_eq!((r[0].value, r[0].names.len()), (None, 0));
    assert_eq!(r[0].tainted_by, [1]);
}

#[test]
fn flag_decomposition() {
    let t = FlagTable::from_tsv("t", "A\t0x0\nB\t0x1\nC\t0x2\nBC\t0x3\nD\t0x10\n").unwrap();
    assert_eq!(t.decompose(0), ["A"]);
    assert_eq!(t.decompose(3), ["BC"]);
    assert_eq!(t.decompose(0x13), ["BC", "D"]);
    assert_eq!(t.decompose(0x111), ["B", "D", "0x100"]);
    let no_zero = FlagTable::from_tsv("t", "B\t1\n").unwrap();
    assert!(no_zero.decompose(0).is_empty());
    assert!(FlagTable::from_tsv("t", "B 1\n").is_err());
}

#[test]
fn entry_calling_sink_directly() {
    let a = Analysis::new(SYSCALL_MODULE);
    let f = a.findings(&entry("fd_sync", &["sync_only"]), &spec(&["fsync"]), &mut Vec::new());
    assert_eq!(f.len(), 1);
    assert_eq!(f[0].sink_kind, SinkKind::ExternalApi);
    assert_eq!(f[0].shortest_slice.call_chain.len(), 1);
    assert_eq!(f[0].path_count, 1);
}

// ------------------------------------------------------------------ reports

#[test]
fn empty_report() {
    let r = build_report("Empty", &[], Vec::new(), Vec::new());
    assert!(r.findings.is_empty() && r.summary.is_empty());
    assert_eq!(r.summary_row(), "Empty | ");
}

#[test]
fn report_summary_is_union_of_findings() {
    let a = Analysis::new(SYSCALL_MODULE);
    let spec = spec(&["statx", "fsync"]);
    let entries = [
        entry("path_filestat_get", &["stat_sync", "stat_two_bits"]),
        entry("fd_sync", &["sync_only"]),
        entry("idle", &["open_variable"]),
    ];
    let build = || {
        let mut all = Vec::new();
        for e in &entries {
            all.extend(a.findings(e, &spec, &mut Vec::new()));
        }
        build_report("Mini", &entries, all, Vec::new())
    };
    let r = build();
    assert_eq!(r, build());
    for (iface, names) in &r.summary {
        let from_findings: BTreeSet<String> =
            r.findings.get(iface).into_iter().flatten().map(|f| f.sink_name.clone()).collect();
        assert_eq!(*names, from_findings);
    }
    assert_eq!(r.summary_row(), "Mini | fsync statx syscall");
    assert!(r.summary["idle"].contains("syscall"));
    // Two entry symbols reach the same statx site; one finding.
    assert_eq!(r.findings["path_filestat_get"].len(), 1);
}

// ---------------------------------------------------------- reachability

#[test]
fn path_counts() {
    let text = r#"
declare void @sink()
define void @e() {
start:
  call void @a()
  call void @a()
  call void @b()
  ret void
}
define void @a() {
start:
  call void @s()
  call void @e()
  ret void
}
define void @b() {
start:
  call void @s()
  ret void
}
define void @s() {
start:
  call void @sink()
  call void @s()
  ret void
}
"#;
    let a = Analysis::new(text);
    let spec = spec(&["sink"]);
    let reached = a.run(|df, g| traverse_reachable_sinks(df.view, g, &entry("e", &["e"]), &spec));
    assert_eq!(reached.len(), 1);
    // e-a (two sites) -a-s, e-b-s; the recursion into s and back into e adds no simple path.
    assert_eq!(reached[0].path_count, 3);
    assert_eq!(reached[0].slice.call_chain.len(), 3);
}

#[test]
fn recursive_entry_terminates_and_reports_once() {
    let text = r#"
declare void @sink()
define void @r(i32 %n) {
start:
  %c = icmp eq i32 %n, 0
  br i1 %c, label %done, label %again
again:
  %m = sub i32 %n, 1
  call void @q(i32 %m)
  ret void
done:
  ret void
}
define void @q(i32 %n) {
start:
  call void @sink()
  call void @r(i32 %n)
  ret void
}
"#;
    let a = Analysis::new(text);
    let f = a.findings(&entry("rec", &["r", "q"]), &spec(&["sink"]), &mut Vec::new());
    assert_eq!(f.len(), 1);
    assert_eq!(f[0].shortest_slice.entry, "q");
    assert_eq!(f[0].shortest_slice.call_chain.len(), 1);
}

#[test]
fn reachability_matches_transitive_closure() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xca11_9a9f);
    let spec = spec(&SINKS);
    let mut nonempty = 0;
    for case in 0..200 {
        let rg = RandomGraph::generate(&mut rng);
        let reach = rg.closure();
        let a = Analysis::new(&rg.to_ir());
        let entry_fns: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(0..rg.n)).collect();
        let syms: Vec<String> = entry_fns.iter().map(|f| format!("f{f}")).collect();
        let e = EntryPoint {
            interface_name: "iface".into(),
            symbols: syms.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect(),
            source: EntrySource::ExportList,
        };

        let want: BTreeSet<(String, String)> = rg
            .sinks
            .iter()
            .filter(|(f, _)| entry_fns.iter().any(|&s| reach[s][*f]))
            .map(|(f, k)| (format!("f{f}"), format!("sink{k}")))
            .collect();

        let reached = a.run(|df, g| {
            assert!(g.stats.iterations <= g.stats.indirect_sites() + 1);
            let reached = traverse_reachable_sinks(df.view, g, &e, &spec);
            for r in &reached {
                let sl = &r.slice;
                assert!(e.symbols.contains(&sl.entry));
                assert_eq!(sl.call_chain.last(), Some(&sl.sink));
                let mut at = sl.entry.as_str();
                for (k, loc) in sl.call_chain.iter().enumerate() {
                    assert_eq!(loc.function, at, "case {case}: chain breaks at {k}");
                    if k + 1 < sl.call_chain.len() {
                        let next = &sl.call_chain[k + 1].function;
                        assert!(g.site_at(loc).unwrap().targets.contains(next), "case {case}");
                        at = next;
                    }
                }
                assert!(r.path_count >= 1 && r.path_count <= PATH_COUNT_CAP);
                // Shortest: one call per edge on a shortest path, plus the sink call.
                let sink_fn: usize = r.site.location.function[1..].parse().unwrap();
                let best = entry_fns.iter().filter_map(|&s| rg.distances(s)[sink_fn]).min().unwrap();
                assert_eq!(sl.call_chain.len(), best + 1, "case {case}");
            }
            reached
        });
        let sites: BTreeSet<_> = reached.iter().map(|r| &r.site.location).collect();
        assert_eq!(sites.len(), reached.len(), "case {case}: a sink site reported twice");
        let got: BTreeSet<(String, String)> =
            reached.iter().map(|r| (r.site.location.function.clone(), r.site.callee.clone())).collect();
        assert_eq!(got, want, "case {case}");
        nonempty += usize::from(!want.is_empty());
    }
    assert!(nonempty > 100, "{nonempty}");
    assert!(t0.elapsed().as_secs_f64() < 30.0, "{:?}", t0.elapsed());
}

#[test]
fn path_count_is_capped() {
    // 12 layers of two functions, each calling both functions of the next layer: 2^12 paths.
    let mut s = String::from(
        "declare void @sink()\ndefine void @e() {\nstart:\n  call void @l0a()\n  call void @l0b()\n  ret void\n}\n",
    );
    for l in 0..12 {
        for side in ["a", "b"] {
            let body = if l == 11 {
                "  call void @sink()\n".to_string()
            } else {
                format!("  call void @l{n}a()\n  call void @l{n}b()\n", n = l + 1)
            };
            writeln!(s, "define void @l{l}{side}() {{\nstart:\n{body}  ret void\n}}").unwrap();
        }
    }
    let a = Analysis::new(&s);
    let spec = spec(&["sink"]);
    let reached = a.run(|df, g| traverse_reachable_sinks(df.view, g, &entry("e", &["e"]), &spec));
    assert_eq!(reached.len(), 2);
    assert!(reached.iter().all(|r| r.path_count == PATH_COUNT_CAP));
}
