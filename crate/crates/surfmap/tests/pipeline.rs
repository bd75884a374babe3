use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use surfmap::config::RunConfig;
use surfmap::inputs::StaticInputs;
use surfmap::pipeline::{analyze, ErrorKind, RunOptions, Stage};
use surfmap::render;
use surfmap::run_pipeline;
use surfmap_core::dataflow::Slice;
use surfmap_core::ir::Location;
use surfmap_core::strategy::{classify_finding, ResourceAxis, StrategyClass};
use surfmap_core::surface::{EntryPoint, EntrySource, SinkFinding, SinkKind};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn config(name: &str) -> RunConfig {
    RunConfig::load(&data(name)).unwrap()
}

fn report(name: &str) -> surfmap_core::surface::SurfaceReport {
    run_pipeline(&config(name), &RunOptions::default()).unwrap()
}

fn set(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_string()).collect()
}

#[test]
fn wasmtime_row() {
    let t0 = Instant::now();
    let r = report("wasmtime.toml");
    assert!(t0.elapsed().as_secs_f64() < 5.0);
    let got: BTreeSet<String> = r.sink_names().into_iter().map(String::from).collect();
    let want =
        set(&["openat", "unlinkat", "fsync", "fdatasync", "readv", "writev", "preadv", "pwrite64", "pthread_create"]);
    assert_eq!(got, want);
    assert_eq!(
        r.summary_row(),
        "Wasmtime | fdatasync fsync openat preadv pthread_create pwrite64 readv unlinkat writev"
    );
}

#[test]
fn wasmer_row() {
    let t0 = Instant::now();
    let r = report("wasmer.toml");
    assert!(t0.elapsed().as_secs_f64() < 5.0);
    let got: BTreeSet<String> = r.sink_names().into_iter().map(String::from).collect();
    assert_eq!(got, set(&["open64", "unlink", "read", "write", "sendto", "send", "statx", "pthread_create"]));
}

#[test]
fn wasmer_statx_flag_is_recovered() {
    let r = report("wasmer.toml");
    let statx: Vec<&SinkFinding> = r.findings.values().flatten().filter(|f| f.sink_name == "statx").collect();
    assert!(!statx.is_empty());
    let constant = statx
        .iter()
        .flat_map(|f| &f.recovered)
        .find(|a| a.arg == 2 && a.value.is_some())
        .expect("a constant statx flags argument");
    assert_eq!(constant.value, Some(0));
    assert_eq!(constant.names, vec!["AT_STATX_SYNC_AS_STAT".to_string()]);

    let ann = r
        .strategy_annotations
        .iter()
        .filter(|a| a.sink_name == "statx")
        .flat_map(|a| &a.annotations)
        .any(|a| a.rationale.starts_with("statx-sync:"));
    assert!(ann);
}

#[test]
fn wasmer_tty_path_is_recovered() {
    let r = report("wasmer.toml");
    let tty = &r.findings["tty_set"];
    let open = tty.iter().find(|f| f.sink_name == "open64").unwrap();
    assert_eq!(open.paths, vec![(0, "/dev/tty".to_string())]);
    let ann = r.strategy_annotations.iter().find(|a| a.interface == "tty_set" && a.sink_name == "open64").unwrap();
    assert!(ann.annotations.iter().any(|a| a.resource_axis == ResourceAxis::CpuCycles));
}

#[test]
fn wasi_common_path_open_reaches_openat() {
    let r = report("wasi_common.toml");
    let names: Vec<&str> = r.findings["path_open"].iter().map(|f| f.sink_name.as_str()).collect();
    assert_eq!(names, ["openat"]);
    let stats = r.resolution.as_ref().unwrap();
    assert!(stats.iterations <= 2);
    assert_eq!(stats.unresolved_count, 0);
}

#[test]
fn shipped_rules_cover_the_shipped_sinkspec() {
    let inputs = StaticInputs::defaults().unwrap();
    for api in inputs.spec.apis.keys() {
        assert!(inputs.rules.covers(api), "no rule for {api}");
    }
    let ids = inputs.rules.ids();
    for name in ["wasmtime.toml", "wasmer.toml", "wasi_common.toml"] {
        let r = report(name);
        for a in r.strategy_annotations.iter().flat_map(|a| &a.annotations) {
            let id = a.rationale.split(':').next().unwrap();
            assert!(ids.contains(id), "{name}: {}", a.rationale);
        }
        assert!(!r.diagnostics.iter().any(|d| d.starts_with("no strategy rule")), "{name}: {:?}", r.diagnostics);
    }
}

fn bare_finding(sink: &str) -> SinkFinding {
    let loc = Location { function: "f".into(), block: "start".into(), index: 0 };
    SinkFinding {
        entry: EntryPoint { interface_name: "i".into(), symbols: vec!["f".into()], source: EntrySource::ConfigPattern },
        sink_name: sink.into(),
        sink_kind: SinkKind::ExternalApi,
        shortest_slice: Slice { entry: "f".into(), call_chain: vec![loc.clone()], sink: loc },
        path_count: 1,
        taint: vec![],
        recovered: vec![],
        paths: vec![],
        syscall_number: None,
    }
}

#[test]
fn shipped_rules_examples() {
    let rules = StaticInputs::defaults().unwrap().rules;
    let pairs = |sink: &str| -> BTreeSet<(StrategyClass, ResourceAxis)> {
        classify_finding(&bare_finding(sink), &rules).iter().map(|a| (a.strategy_class, a.resource_axis)).collect()
    };
    assert!(pairs("fsync").contains(&(StrategyClass::WorkloadInjection, ResourceAxis::DiskBandwidth)));
    let send = pairs("sendto");
    assert!(send.contains(&(StrategyClass::DirectConsumption, ResourceAxis::NetworkBandwidth)));
    assert!(send.contains(&(StrategyClass::WorkloadInjection, ResourceAxis::KernelProcessingLoad)));
    assert!(pairs("pthread_create").contains(&(StrategyClass::WorkloadInjection, ResourceAxis::ThreadPressure)));
    // The statx rule needs the flag.
    assert!(pairs("statx").iter().all(|p| p.0 != StrategyClass::WorkloadInjection));
}

#[test]
fn worklist_order_does_not_change_output() {
    for name in ["wasmtime.toml", "wasmer.toml", "wasi_common.toml"] {
        let c = config(name);
        let inputs = StaticInputs::load(&c).unwrap();
        let base = render::json(&analyze(&c, &inputs, &RunOptions::default()).unwrap().report);
        for seed in 1..=5u64 {
            let r = analyze(&c, &inputs, &RunOptions { order_seed: Some(seed) }).unwrap();
            assert_eq!(render::json(&r.report), base, "{name} seed {seed}");
        }
    }
}

#[test]
fn json_round_trips() {
    let r = report("wasmer.toml");
    let text = render::json(&r);
    assert_eq!(render::parse_json(&text).unwrap(), r);
    assert!(text.ends_with('\n'));
}

#[test]
fn table_starts_with_summary() {
    let r = report("wasmtime.toml");
    let t = render::table(&r);
    let mut lines = t.lines();
    assert_eq!(lines.next(), Some("Runtime | Syscalls/APIs"));
    assert_eq!(lines.next(), Some(r.summary_row().as_str()));
}

#[test]
fn missing_sinkspec_is_a_config_error() {
    let mut c = config("wasmtime.toml");
    c.sinkspec = Some("no/such/sinkspec.toml".into());
    let e = run_pipeline(&c, &RunOptions::default()).unwrap_err();
    assert_eq!(e.kind, ErrorKind::Config);
    assert_eq!(e.stage, Stage::Config);
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().starts_with("config:"), "{e}");
}

#[test]
fn no_entry_configuration_is_a_config_error() {
    let mut c = config("wasmtime.toml");
    c.entry_points = None;
    let e = run_pipeline(&c, &RunOptions::default()).unwrap_err();
    assert_eq!((e.stage, e.exit_code()), (Stage::EntryDiscovery, 2));
}

#[test]
fn malformed_ir_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.ll"), "define void @f( {\n").unwrap();
    let c = RunConfig::from_toml("inputs = [\"bad.ll\"]\n[entry_points]\npatterns = [\"x\"]\n", dir.path()).unwrap();
    let e = run_pipeline(&c, &RunOptions::default()).unwrap_err();
    assert_eq!((e.stage, e.exit_code()), (Stage::Parse, 3));
}

#[test]
fn unknown_config_keys_are_rejected() {
    assert!(RunConfig::from_toml("inputs = []\nbogus = 1\n", Path::new(".")).is_err());
}
