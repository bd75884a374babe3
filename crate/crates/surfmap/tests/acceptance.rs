//! Acceptance criteria, one line each. Runs without the libtest harness so
//! every line is printed whatever the outcome; exits non-zero if any fails.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use oracle::call_graphs::{RandomGraph, SINKS};
use oracle::const_tree::{interp, random_case};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surfmap::config::RunConfig;
use surfmap::inputs::StaticInputs;
use surfmap::pipeline::{analyze, RunOptions};
use surfmap::render;
use surfmap_core::callgraph::{mlta_resolve, resolve_fixed_point, signature_candidates, CallGraph, Classification};
use surfmap_core::dataflow::const_eval;
use surfmap_core::ir::{parse_module, IrModule, ModuleView, Type, Value};
use surfmap_core::strategy::ResourceAxis;
use surfmap_core::surface::SurfaceReport;
use surfmap_core::vtable::VTableRegistry;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn read(rel: &str) -> String {
    std::fs::read_to_string(root().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

fn resolve(text: &str) -> (IrModule, CallGraph) {
    let m = parse_module(text).unwrap();
    let reg = VTableRegistry::build(&m);
    let g = resolve_fixed_point(&m, &reg);
    (m, g)
}

/// (caller, ordinal among its indirect sites) -> targets observed at run time.
type Truth = BTreeMap<(String, usize), BTreeSet<String>>;

fn truth(rel: &str) -> Truth {
    let mut out = Truth::new();
    for line in read(rel).lines().filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split('\t').collect();
        out.entry((f[0].to_string(), f[1].parse().unwrap())).or_default().insert(f[2].to_string());
    }
    out
}

/// Indirect sites keyed like [`Truth`].
fn indirect_by_ordinal(g: &CallGraph) -> BTreeMap<(String, usize), (Classification, BTreeSet<String>)> {
    let mut by_caller: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for s in g.sites.iter().filter(|s| s.classification.is_indirect()) {
        by_caller.entry(&s.location.function).or_default().push(s);
    }
    let mut out = BTreeMap::new();
    for (caller, mut v) in by_caller {
        v.sort_by_key(|s| s.site_index);
        for (i, s) in v.into_iter().enumerate() {
            out.insert((caller.to_string(), i), (s.classification, s.targets.clone()));
        }
    }
    out
}

fn corpus() -> Vec<PathBuf> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, out);
            } else if p.extension().is_some_and(|x| x == "ll") {
                out.push(p);
            }
        }
    }
    let mut out = Vec::new();
    walk(&root().join("fixtures"), &mut out);
    out.sort();
    out
}

/// Every pipeline configuration of the fixture corpus.
fn corpus_configs() -> Vec<RunConfig> {
    let mut out: Vec<RunConfig> = ["wasmtime", "wasmer", "wasi_common"]
        .iter()
        .map(|n| RunConfig::load(&root().join(format!("data/{n}.toml"))).unwrap())
        .collect();
    let fixtures = root().join("fixtures");
    let extra = [
        ("handlers", "mlta/handlers.ll", "main = [\"main\"]"),
        ("dyn_dir v0", "real/dyn_dir_v0.ll", "path_open = [\"l1::path_open\"]"),
        ("dyn_dir legacy", "real/dyn_dir_legacy.ll", "path_open = [\"l1::path_open\"]"),
    ];
    for (label, ll, exports) in extra {
        let text = format!("runtime_label = \"{label}\"\ninputs = [\"{ll}\"]\n[entry_points.exports]\n{exports}\n");
        out.push(RunConfig::from_toml(&text, &fixtures).unwrap());
    }
    out
}

fn run_config(c: &RunConfig, seed: Option<u64>) -> SurfaceReport {
    let inputs = StaticInputs::load(c).unwrap();
    analyze(c, &inputs, &RunOptions { order_seed: seed }).unwrap().report
}

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn secs(d: Duration) -> String {
    format!("{:.3}s", d.as_secs_f64())
}

// 1. wasi-common path_open: vtable dispatch and async poll, exactly, fast.
fn c1_dispatch_and_poll() -> Result<String, String> {
    let text = read("fixtures/wasi_common_open.ll");
    let t0 = Instant::now();
    let (_, g) = resolve(&text);
    let took = t0.elapsed();
    let want = truth("fixtures/wasi_common_open.truth.tsv");
    let got = indirect_by_ordinal(&g);
    ensure!(got.len() == want.len(), "{} indirect sites, {} observed", got.len(), want.len());
    let (mut dispatch, mut poll) = (0, 0);
    for (k, targets) in &want {
        let Some((class, resolved)) = got.get(k) else { return Err(format!("no site {}#{}", k.0, k.1)) };
        ensure!(resolved == targets, "{}#{}: {resolved:?} != {targets:?}", k.0, k.1);
        match class {
            Classification::VTableDispatch => dispatch += 1,
            Classification::AsyncPoll => poll += 1,
            c => return Err(format!("{}#{} classified {c:?}", k.0, k.1)),
        }
    }
    ensure!(dispatch == 1 && poll == 2, "dispatch {dispatch}, poll {poll}");
    let open_file_poll = want.values().any(|t| t.iter().any(|n| n.contains("open_file28_$u7b$$u7b$closure")));
    ensure!(open_file_poll, "no poll site reaching the open_file closure");
    ensure!(g.stats.iterations <= 2, "iterations {}", g.stats.iterations);
    ensure!(took < Duration::from_secs(1), "took {}", secs(took));
    Ok(format!("1 dispatch + 2 poll sites exact, {} iterations, {}", g.stats.iterations, secs(took)))
}

fn row(name: &str, want: &[&str]) -> Result<String, String> {
    let c = RunConfig::load(&root().join(format!("data/{name}.toml"))).unwrap();
    let t0 = Instant::now();
    let r = run_config(&c, None);
    let took = t0.elapsed();
    let got: BTreeSet<&str> = r.sink_names();
    let want: BTreeSet<&str> = want.iter().copied().collect();
    ensure!(got == want, "missing {:?}, extra {:?}", &want - &got, &got - &want);
    ensure!(took < Duration::from_secs(5), "took {}", secs(took));
    Ok(format!("{:?} in {}", r.summary_row(), secs(took)))
}

// 2. Both runtime rows, exactly.
fn c2a_wasmtime() -> Result<String, String> {
    row(
        "wasmtime",
        &["openat", "unlinkat", "fsync", "fdatasync", "readv", "writev", "preadv", "pwrite64", "pthread_create"],
    )
}

fn c2b_wasmer() -> Result<String, String> {
    row("wasmer", &["open64", "unlink", "read", "write", "sendto", "send", "statx", "pthread_create"])
}

// 3. The statx sync flag is recovered from the constant argument.
fn c3_statx() -> Result<String, String> {
    let c = RunConfig::load(&root().join("data/wasmer.toml")).unwrap();
    let r = run_config(&c, None);
    let table = read("data/statx_flags.tsv");
    let want: i128 = table
        .lines()
        .find_map(|l| l.strip_prefix("AT_STATX_SYNC_AS_STAT\t"))
        .and_then(|v| i128::from_str_radix(v.trim().trim_start_matches("0x"), 16).ok())
        .ok_or("AT_STATX_SYNC_AS_STAT missing from the flag table")?;
    let hit = r
        .findings
        .iter()
        .flat_map(|(i, fs)| fs.iter().map(move |f| (i, f)))
        .filter(|(_, f)| f.sink_name == "statx")
        .find_map(|(i, f)| f.recovered.iter().find(|a| a.arg == 2 && a.value == Some(want)).map(|a| (i, a)));
    let Some((iface, arg)) = hit else { return Err("no statx finding with a constant sync-as-stat flag".into()) };
    ensure!(arg.names.iter().any(|n| n == "AT_STATX_SYNC_AS_STAT"), "names {:?}", arg.names);
    Ok(format!("{iface}: statx arg 2 = {want} -> {:?}", arg.names))
}

// 4. Sink reachability against transitive closure on random graphs.
fn c4_reachability() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut inputs = StaticInputs::defaults().unwrap();
    inputs.spec.apis = SINKS.iter().map(|s| (s.to_string(), ResourceAxis::CpuCycles)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_97ed);
    let t0 = Instant::now();
    let mut nonempty = 0;
    for case in 0..200 {
        let rg = RandomGraph::generate(&mut rng);
        let entry_fns: BTreeSet<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(0..rg.n)).collect();
        let ll = dir.path().join(format!("g{case}.ll"));
        std::fs::write(&ll, rg.to_ir()).unwrap();
        let syms: Vec<String> = entry_fns.iter().map(|f| format!("\"f{f}\"")).collect();
        let text = format!("inputs = [\"g{case}.ll\"]\n[entry_points.exports]\niface = [{}]\n", syms.join(", "));
        let c = RunConfig::from_toml(&text, dir.path()).unwrap();
        let r = analyze(&c, &inputs, &RunOptions::default()).map_err(|e| format!("case {case}: {e}"))?.report;

        let reach = rg.closure();
        let want: BTreeSet<(String, String)> = rg
            .sinks
            .iter()
            .filter(|(f, _)| entry_fns.iter().any(|&s| reach[s][*f]))
            .map(|(f, k)| (format!("f{f}"), SINKS[*k].to_string()))
            .collect();
        let findings = r.findings.get("iface").map(Vec::as_slice).unwrap_or_default();
        let got: BTreeSet<(String, String)> =
            findings.iter().map(|f| (f.shortest_slice.sink.function.clone(), f.sink_name.clone())).collect();
        ensure!(got == want, "case {case}: missing {:?}, extra {:?}", &want - &got, &got - &want);
        for f in findings {
            let sink_fn: usize = f.shortest_slice.sink.function[1..].parse().unwrap();
            let best = entry_fns.iter().filter_map(|&s| rg.distances(s)[sink_fn]).min().unwrap();
            ensure!(f.shortest_slice.call_chain.len() == best + 1, "case {case}: slice not shortest");
        }
        nonempty += usize::from(!want.is_empty());
    }
    let took = t0.elapsed();
    ensure!(nonempty > 100, "only {nonempty} graphs reach a sink");
    ensure!(took < Duration::from_secs(30), "took {}", secs(took));
    Ok(format!("200 graphs agree ({nonempty} with reachable sinks), {}", secs(took)))
}

// 5. Constant folding against a native-integer interpreter.
fn c5_const_eval() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_c0de);
    let mut defined = 0;
    for case in 0..1000 {
        let (e, text, root) = random_case(&mut rng);
        let m = parse_module(&text).map_err(|err| format!("case {case}: {err}"))?;
        let view = ModuleView::new(&m);
        let got = const_eval(&view, "f", &Value::local(root.trim_start_matches('%')), &Type::Int(e.width()));
        let want = interp(&e);
        ensure!(got.map(|v| v.unsigned() as u64) == want, "case {case}: got {got:?}, want {want:?}");
        defined += usize::from(want.is_some());
    }
    Ok(format!("1000 trees agree ({defined} defined, {} poison)", 1000 - defined))
}

// 6. Soundness against run-time truth, and refinement within the signature baseline.
fn c6_soundness() -> Result<String, String> {
    let mut observed = 0;
    for (ll, tsv) in [
        ("fixtures/wasi_common_open.ll", "fixtures/wasi_common_open.truth.tsv"),
        ("fixtures/mlta/handlers.ll", "fixtures/mlta/handlers.truth.tsv"),
    ] {
        let (_, g) = resolve(&read(ll));
        let got = indirect_by_ordinal(&g);
        for (k, want) in truth(tsv) {
            let Some((_, resolved)) = got.get(&k) else { return Err(format!("{ll}: no site {}#{}", k.0, k.1)) };
            ensure!(want.is_subset(resolved), "{ll}: {}#{}: {want:?} not in {resolved:?}", k.0, k.1);
            observed += want.len();
        }
    }
    let mut generic = 0;
    for ll in corpus() {
        let (m, g) = resolve(&std::fs::read_to_string(&ll).unwrap());
        let view = ModuleView::new(&m);
        for s in g.sites.iter().filter(|s| s.classification == Classification::GenericIndirect) {
            let r = view.resolve_location(&s.location).unwrap();
            ensure!(
                mlta_resolve(&view, r).is_subset(&signature_candidates(&view, r)),
                "{}: {}",
                ll.display(),
                s.location
            );
            generic += 1;
        }
    }
    Ok(format!("{observed} observed targets covered; {generic} generic sites within signature baseline"))
}

// 7. Byte-identical output under shuffled worklists.
fn c7_determinism() -> Result<String, String> {
    let configs = corpus_configs();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0de7);
    for c in &configs {
        let base = render::json(&run_config(c, None));
        let table = render::table(&render::parse_json(&base).unwrap());
        for _ in 0..5 {
            let seed = rng.random();
            let r = run_config(c, Some(seed));
            ensure!(render::json(&r) == base, "{}: seed {seed} changes the JSON", c.runtime_label);
            ensure!(render::table(&r) == table, "{}: seed {seed} changes the table", c.runtime_label);
        }
    }
    Ok(format!("{} configurations x 5 shuffled runs identical", configs.len()))
}

// 8. Fixed-point iterations bounded by indirect sites + 1.
fn c8_iterations() -> Result<String, String> {
    let files = corpus();
    let mut worst = String::new();
    for ll in &files {
        let (_, g) = resolve(&std::fs::read_to_string(ll).unwrap());
        let (it, ind) = (g.stats.iterations, g.stats.indirect_sites());
        ensure!(it <= ind + 1, "{}: {it} iterations, {ind} indirect sites", ll.display());
        worst = format!(
            "{worst}{}{}={it}/{ind}",
            if worst.is_empty() { "" } else { " " },
            ll.file_stem().unwrap().to_string_lossy()
        );
    }
    Ok(format!("{} modules (iterations/indirect: {worst})", files.len()))
}

// 9. The whole corpus through the pipeline within a minute.
fn c9_wall_time() -> Result<String, String> {
    let configs = corpus_configs();
    let t0 = Instant::now();
    for c in &configs {
        run_config(c, None);
    }
    let took = t0.elapsed();
    ensure!(took < Duration::from_secs(60), "took {}", secs(took));
    Ok(format!("{} configurations in {}", configs.len(), secs(took)))
}

fn main() -> ExitCode {
    let checks: [(&str, &str, Check); 10] = [
        ("1", "wasi-common dispatch/poll resolution", c1_dispatch_and_poll),
        ("2a", "wasmtime row", c2a_wasmtime),
        ("2b", "wasmer row", c2b_wasmer),
        ("3", "statx sync flag recovery", c3_statx),
        ("4", "reachability vs transitive closure", c4_reachability),
        ("5", "const_eval vs native interpreter", c5_const_eval),
        ("6", "refinement soundness", c6_soundness),
        ("7", "deterministic output", c7_determinism),
        ("8", "iteration bound", c8_iterations),
        ("9", "corpus wall time", c9_wall_time),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, check) in checks {
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match result {
            Ok(detail) => println!("PASS criterion {id:<2} {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {id:<2} {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
