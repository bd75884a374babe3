use surfmap_core::callgraph::resolve_fixed_point;
use surfmap_core::dataflow::{taint_propagate, Dataflow, FlowKind, TaintFact};
use surfmap_core::ir::{parse_module, Location, ModuleView};
use surfmap_core::vtable::VTableRegistry;

const MODULE: &str = r#"
%Req = type { i32, i64 }

declare i32 @fsync(i32)
declare i64 @write(i32, ptr, i64)

define i32 @direct_entry(i32 %fd) {
start:
  %r = call i32 @helper(i32 %fd)
  ret i32 %r
}

define internal i32 @helper(i32 %x) {
start:
  %r = call i32 @fsync(i32 %x)
  ret i32 %r
}

define i64 @record_entry(i32 %fd, ptr %buf, i64 %len) {
start:
  %req = alloca %Req, align 8
  %f0 = getelementptr inbounds %Req, ptr %req, i32 0, i32 0
  store i32 %fd, ptr %f0, align 4
  %f1 = getelementptr inbounds %Req, ptr %req, i32 0, i32 1
  %double = shl i64 %len, 1
  store i64 %double, ptr %f1, align 8
  %r = call i64 @issue(ptr %req, ptr %buf)
  ret i64 %r
}

define internal i64 @issue(ptr %req, ptr %buf) {
start:
  %f0 = getelementptr inbounds %Req, ptr %req, i32 0, i32 0
  %fd = load i32, ptr %f0, align 4
  %f1 = getelementptr inbounds %Req, ptr %req, i32 0, i32 1
  %len = load i64, ptr %f1, align 8
  %r = call i64 @write(i32 %fd, ptr %buf, i64 %len)
  ret i64 %r
}

define i32 @literal_entry(i32 %fd) {
start:
  %r = call i32 @fsync(i32 1)
  ret i32 %r
}

define i32 @sink_entry(i32 %fd) {
start:
  %r = call i32 @fsync(i32 %fd)
  ret i32 %r
}
"#;

fn facts(entry: &str, sink_fn: &str, sink_index: u32) -> Vec<TaintFact> {
    let m = parse_module(MODULE).unwrap();
    let view = ModuleView::new(&m);
    let reg = VTableRegistry::build(&m);
    let graph = resolve_fixed_point(&m, &reg);
    let df = Dataflow::new(&view, &reg, &graph);
    let sink = Location { function: sink_fn.into(), block: "start".into(), index: sink_index };
    taint_propagate(&df, entry, &[sink], &graph)
}

#[test]
fn direct_through_a_helper() {
    let f = facts("direct_entry", "helper", 0);
    assert_eq!(f.len(), 1, "{f:?}");
    assert_eq!(f[0].source, ("direct_entry".into(), 0));
    assert_eq!(f[0].sink.1, 0);
    assert_eq!(f[0].flow_kind, FlowKind::Direct);
    assert_eq!(f[0].witness.call_chain.len(), 2);
}

#[test]
fn sink_in_entry_has_chain_of_one() {
    let f = facts("sink_entry", "sink_entry", 0);
    assert_eq!(f.len(), 1);
    assert_eq!(f[0].flow_kind, FlowKind::Direct);
    assert_eq!(f[0].witness.call_chain.len(), 1);
}

#[test]
fn record_fields_are_indirect() {
    let f = facts("record_entry", "issue", 4);
    let got: Vec<_> = f.iter().map(|t| (t.source.1, t.sink.1, t.flow_kind)).collect();
    assert_eq!(got, vec![(0, 0, FlowKind::Indirect), (1, 1, FlowKind::Direct), (2, 2, FlowKind::Indirect)]);
}

#[test]
fn literal_arguments_carry_no_taint() {
    assert!(facts("literal_entry", "literal_entry", 0).is_empty());
}
