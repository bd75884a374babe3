//! Interface entry points, reachable OS-boundary sinks, and the
//! per-interface attack-surface report.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::callgraph::{CallGraph, ResolutionStats};
use crate::dataflow::{taint_slice, trace_along, Dataflow, Slice, TaintFact, ValueOrigin};
use crate::error::ConfigError;
use crate::ir::{Const, InstKind, IrModule, Location, ModuleView, TypedConst};
use crate::strategy::{ResourceAxis, StrategyAnnotation};

/// Cap on distinct simple paths counted per (entry, sink site).
pub const PATH_COUNT_CAP: usize = 1000;
/// DFS steps spent counting paths for one sink before settling for the
/// count found so far.
const PATH_COUNT_STEPS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntrySource {
    ConfigPattern,
    ExportList,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntryPoint {
    pub interface_name: String,
    /// Sorted.
    pub symbols: Vec<String>,
    pub source: EntrySource,
}

/// The `entry_points` configuration section.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryConfig {
    /// `::`-separated path fragments matched against whole segments of
    /// demangled names; `*` matches any one segment. The interface name is
    /// the first plain identifier after the match.
    #[serde(default)]
    pub patterns: Vec<String>,
    /// Interface name to implementing symbols (mangled or demangled).
    #[serde(default)]
    pub exports: BTreeMap<String, Vec<String>>,
}

/// Splits a demangled path at top-level `::`.
pub fn path_segments(path: &str) -> Vec<&str> {
    let b = path.as_bytes();
    let mut out = Vec::new();
    let (mut depth, mut start, mut i) = (0i32, 0, 0);
    while i < b.len() {
        match b[i] {
            b'<' | b'(' | b'[' => depth += 1,
            b'>' if i > 0 && b[i - 1] == b'-' => {}
            b'>' | b')' | b']' => depth -= 1,
            b':' if depth == 0 && b.get(i + 1) == Some(&b':') => {
                out.push(&path[start..i]);
                i += 2;
                start = i;
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    out.push(&path[start..]);
    out
}

fn is_identifier(s: &str) -> bool {
    let mut cs = s.chars();
    cs.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Interface name `pattern` extracts from `path`, if it matches.
pub fn match_entry_pattern(pattern: &str, path: &str) -> Option<String> {
    let pat: Vec<&str> = pattern.split("::").filter(|s| !s.is_empty()).collect();
    let segs = path_segments(path);
    if pat.is_empty() || pat.len() > segs.len() {
        return None;
    }
    (0..=segs.len() - pat.len())
        .find(|&i| pat.iter().zip(&segs[i..]).all(|(p, s)| *p == "*" || p == s))
        .and_then(|i| segs[i + pat.len()..].iter().find(|s| !s.starts_with('<')).copied())
        .filter(|s| is_identifier(s))
        .map(String::from)
}

/// Entry points by pattern and export list, sorted by interface name.
///
/// `None` (no configuration section) and a section with neither patterns nor
/// exports are configuration errors. Patterns or exports that select nothing
/// produce diagnostics.
pub fn find_entry_points(
    module: &IrModule,
    config: Option<&EntryConfig>,
) -> Result<(Vec<EntryPoint>, Vec<String>), ConfigError> {
    let config = config.ok_or_else(|| ConfigError("entry_points".into()))?;
    if config.patterns.is_empty() && config.exports.is_empty() {
        return Err(ConfigError("entry_points".into()));
    }
    let mut diags = Vec::new();
    let mut found: BTreeMap<String, (BTreeSet<String>, EntrySource)> = BTreeMap::new();
    for (iface, wanted) in &config.exports {
        let mut syms = BTreeSet::new();
        for w in wanted {
            syms.extend(
                module.functions.iter().filter(|f| f.symbol == *w || f.display_name() == w).map(|f| f.symbol.clone()),
            );
        }
        if syms.is_empty() {
            diags.push(format!("export {iface}: none of its symbols is defined"));
            continue;
        }
        found.insert(iface.clone(), (syms, EntrySource::ExportList));
    }
    for p in &config.patterns {
        let mut hit = false;
        for f in &module.functions {
            if let Some(name) = match_entry_pattern(p, f.display_name()) {
                hit = true;
                found
                    .entry(name)
                    .or_insert_with(|| (BTreeSet::new(), EntrySource::ConfigPattern))
                    .0
                    .insert(f.symbol.clone());
            }
        }
        if !hit {
            diags.push(format!("entry pattern {p:?} matched nothing"));
        }
    }
    let entries = found
        .into_iter()
        .map(|(interface_name, (syms, source))| EntryPoint {
            interface_name,
            symbols: syms.into_iter().collect(),
            source,
        })
        .collect();
    Ok((entries, diags))
}

/// Inline-asm syscall recognizer: an instruction mnemonic in the template
/// plus the registers carrying the number and the arguments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsmSyscallPattern {
    pub instruction: String,
    pub number_register: String,
    pub arg_registers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitiveArg {
    pub sink: String,
    pub arg: usize,
    pub table: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathArg {
    pub sink: String,
    pub arg: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinkSpec {
    /// External API name to the resource it touches.
    #[serde(default)]
    pub apis: BTreeMap<String, ResourceAxis>,
    /// Functions taking a syscall number in argument 0 (e.g. `syscall`).
    #[serde(default)]
    pub syscall_wrappers: Vec<String>,
    #[serde(default)]
    pub inline_syscalls: Vec<AsmSyscallPattern>,
    #[serde(default)]
    pub sensitive_args: Vec<SensitiveArg>,
    /// Arguments holding a path worth recovering when constant.
    #[serde(default)]
    pub path_args: Vec<PathArg>,
}

impl SinkSpec {
    /// Every flag table a sensitive argument refers to must be loaded.
    pub fn validate(&self, tables: &BTreeMap<String, FlagTable>) -> Result<(), ConfigError> {
        match self.sensitive_args.iter().find(|s| !tables.contains_key(&s.table)) {
            Some(s) => Err(ConfigError(format!("sinkspec: flag table {} for {} is not loaded", s.table, s.sink))),
            None => Ok(()),
        }
    }
}

fn parse_number(s: &str) -> Option<u64> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(h, 16).ok(),
        None => s.parse().ok(),
    }
}

/// Rows of a two-column tab-separated file, skipping blanks and `#` comments.
fn tsv_rows<'a>(what: &'a str, text: &'a str) -> impl Iterator<Item = Result<(&'a str, &'a str), ConfigError>> + 'a {
    text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#')).map(move |(i, l)| {
        let mut cols = l.split('\t');
        match (cols.next(), cols.next(), cols.next()) {
            (Some(a), Some(b), None) => Ok((a.trim(), b.trim())),
            _ => Err(ConfigError(format!("{what}: line {}: expected two tab-separated columns", i + 1))),
        }
    })
}

/// `number<TAB>name` per line.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyscallTable {
    pub names: BTreeMap<u64, String>,
}

impl SyscallTable {
    pub fn from_tsv(text: &str) -> Result<Self, ConfigError> {
        let mut names = BTreeMap::new();
        for row in tsv_rows("syscall table", text) {
            let (n, name) = row?;
            let n = parse_number(n).ok_or_else(|| ConfigError(format!("syscall table: bad number {n:?}")))?;
            names.insert(n, String::from(name));
        }
        Ok(SyscallTable { names })
    }

    pub fn name(&self, n: u64) -> Option<&str> {
        self.names.get(&n).map(String::as_str)
    }
}

/// `name<TAB>value` per line, value in hex (`0x..`) or decimal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagTable {
    pub name: String,
    pub entries: Vec<(String, u64)>,
}

impl FlagTable {
    pub fn from_tsv(name: &str, text: &str) -> Result<Self, ConfigError> {
        let mut entries = Vec::new();
        for row in tsv_rows(name, text) {
            let (flag, v) = row?;
            let v = parse_number(v).ok_or_else(|| ConfigError(format!("{name}: bad value {v:?}")))?;
            entries.push((String::from(flag), v));
        }
        Ok(FlagTable { name: String::from(name), entries })
    }

    /// Names for `value`: every exact match if any (so zero maps to the
    /// zero-valued name), otherwise a bit decomposition, widest flags first,
    /// with leftover bits as a hex literal. Sorted by flag value.
    pub fn decompose(&self, value: u64) -> Vec<String> {
        let exact: Vec<String> = self.entries.iter().filter(|(_, v)| *v == value).map(|(n, _)| n.clone()).collect();
        if !exact.is_empty() || value == 0 {
            return exact;
        }
        let mut cands: Vec<&(String, u64)> = self.entries.iter().filter(|(_, v)| *v != 0 && v & !value == 0).collect();
        cands.sort_by(|a, b| b.1.count_ones().cmp(&a.1.count_ones()).then(b.1.cmp(&a.1)).then(a.0.cmp(&b.0)));
        let mut rest = value;
        let mut picked: Vec<&(String, u64)> = Vec::new();
        for c in cands {
            if c.1 & rest == c.1 {
                rest &= !c.1;
                picked.push(c);
            }
        }
        picked.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
        let mut out: Vec<String> = picked.into_iter().map(|(n, _)| n.clone()).collect();
        if rest != 0 {
            out.push(format!("{rest:#x}"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SinkKind {
    ExternalApi,
    RawSyscall,
}

/// A recovered argument value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecoveredArg {
    /// Argument index of the API or syscall (not counting a wrapper's number).
    pub arg: usize,
    /// `None` when the argument does not fold to a constant.
    pub value: Option<i128>,
    pub names: Vec<String>,
    /// For non-constant values: entry parameters that influence the argument.
    pub tainted_by: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SinkFinding {
    pub entry: EntryPoint,
    pub sink_name: String,
    pub sink_kind: SinkKind,
    pub shortest_slice: Slice,
    /// Distinct simple paths, capped at [`PATH_COUNT_CAP`].
    pub path_count: usize,
    pub taint: Vec<TaintFact>,
    pub recovered: Vec<RecoveredArg>,
    /// Constant path arguments: (argument index, text).
    pub paths: Vec<(usize, String)>,
    pub syscall_number: Option<u64>,
}

/// One OS-boundary call at a site: which sink and how its operands map.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SinkSite {
    pub location: Location,
    pub kind: SinkKind,
    /// API name for external calls, wrapper or mnemonic for raw syscalls.
    pub callee: String,
    /// Operand holding the syscall number (raw syscalls only).
    pub number_operand: Option<usize>,
    /// Operand index of each API/syscall argument.
    pub arg_operands: Vec<usize>,
}

impl SinkSite {
    fn operand(&self, arg: usize) -> Option<usize> {
        match self.kind {
            SinkKind::ExternalApi => Some(arg),
            SinkKind::RawSyscall => self.arg_operands.get(arg).copied(),
        }
    }
}

fn normalize_register(r: &str) -> String {
    let r = r.trim_matches(|c| c == '{' || c == '}').to_ascii_lowercase();
    const LEGACY: [&str; 8] = ["ax", "bx", "cx", "dx", "si", "di", "bp", "sp"];
    if r.len() == 3 && (r.starts_with('r') || r.starts_with('e')) && LEGACY.contains(&&r[1..]) {
        return String::from(&r[1..]);
    }
    r
}

/// Register bound to each asm argument, in argument order.
fn asm_arg_registers(constraints: &str) -> Vec<String> {
    constraints
        .split(',')
        .map(str::trim)
        .filter(|c| !c.starts_with('~') && (!c.starts_with('=') || c.starts_with("=*")))
        .map(|c| normalize_register(c.trim_start_matches(['=', '*', '&'])))
        .collect()
}

fn asm_matches(template: &str, mnemonic: &str) -> bool {
    template.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).any(|w| w.eq_ignore_ascii_case(mnemonic))
}

/// Sink calls inside `function`.
pub fn sink_sites(view: &ModuleView<'_>, graph: &CallGraph, spec: &SinkSpec, function: &str) -> Vec<SinkSite> {
    let Some(fi) = view.function_index(function) else { return Vec::new() };
    let f = &view.module.functions[fi];
    let mut out = Vec::new();
    for (b, i, inst) in f.instructions() {
        let at = (fi, b, i);
        match &inst.kind {
            InstKind::InlineAsm { template, constraints, .. } => {
                let regs = asm_arg_registers(constraints);
                for p in spec.inline_syscalls.iter().filter(|p| asm_matches(template, &p.instruction)) {
                    let pos = |r: &str| regs.iter().position(|x| *x == normalize_register(r));
                    let Some(num) = pos(&p.number_register) else { continue };
                    let args = p.arg_registers.iter().map_while(|r| pos(r)).collect();
                    out.push(SinkSite {
                        location: view.location(at),
                        kind: SinkKind::RawSyscall,
                        callee: p.instruction.clone(),
                        number_operand: Some(num),
                        arg_operands: args,
                    });
                }
            }
            k if k.is_call() => {
                let targets: Vec<String> = match k.direct_callee() {
                    Some(s) => vec![String::from(view.resolve_alias(s))],
                    None => graph.site(at).map(|s| s.targets.iter().cloned().collect()).unwrap_or_default(),
                };
                let nargs = k.call_parts().map_or(0, |(_, a, _)| a.len());
                for t in targets.into_iter().filter(|t| view.function(t).is_none()) {
                    if spec.apis.contains_key(&t) {
                        out.push(SinkSite {
                            location: view.location(at),
                            kind: SinkKind::ExternalApi,
                            callee: t,
                            number_operand: None,
                            arg_operands: (0..nargs).collect(),
                        });
                    } else if spec.syscall_wrappers.contains(&t) {
                        out.push(SinkSite {
                            location: view.location(at),
                            kind: SinkKind::RawSyscall,
                            callee: t,
                            number_operand: Some(0),
                            arg_operands: (1..nargs.max(1)).collect(),
                        });
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// A sink site reachable from an entry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ReachedSink {
    pub site: SinkSite,
    pub slice: Slice,
    pub path_count: usize,
}

fn callees<'g>(graph: &'g CallGraph, f: &'g str) -> impl Iterator<Item = &'g str> + 'g {
    graph.out_sites(f).flat_map(|s| s.targets.iter().map(String::as_str))
}

/// Functions reachable from `sources` (inclusive).
pub fn reachable_functions<'g>(graph: &'g CallGraph, sources: &'g [String]) -> BTreeSet<&'g str> {
    let mut seen: BTreeSet<&str> = sources.iter().map(String::as_str).collect();
    let mut queue: VecDeque<&str> = seen.iter().copied().collect();
    while let Some(f) = queue.pop_front() {
        for t in callees(graph, f) {
            if seen.insert(t) {
                queue.push_back(t);
            }
        }
    }
    seen
}

/// Distinct simple call paths (sequences of call-site edges visiting no
/// function twice) from a fixed set of sources into a target, capped.
///
/// Counting is exponential in general; each target gets at most
/// [`PATH_COUNT_STEPS`] edge visits, after which the count found so far is
/// reported.
struct PathCounter<'g> {
    index: BTreeMap<&'g str, usize>,
    /// One entry per (call site, target) edge.
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
    sources: Vec<usize>,
}

impl<'g> PathCounter<'g> {
    fn new(graph: &'g CallGraph, sources: &'g [String]) -> Self {
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        let id = |f: &'g str, index: &mut BTreeMap<&'g str, usize>| {
            let n = index.len();
            *index.entry(f).or_insert(n)
        };
        let mut edges = Vec::new();
        for s in &graph.sites {
            let a = id(&s.location.function, &mut index);
            for t in &s.targets {
                edges.push((a, id(t, &mut index)));
            }
        }
        let sources = sources.iter().map(|s| id(s, &mut index)).collect();
        let mut succ = vec![Vec::new(); index.len()];
        let mut pred = vec![Vec::new(); index.len()];
        for (a, b) in edges {
            succ[a].push(b);
            pred[b].push(a);
        }
        PathCounter { index, succ, pred, sources }
    }

    fn count(&self, target: &str) -> usize {
        let Some(&target) = self.index.get(target) else { return 1 };
        // Functions that can reach the target, to prune dead branches.
        let mut useful = vec![false; self.succ.len()];
        useful[target] = true;
        let mut queue = VecDeque::from([target]);
        while let Some(f) = queue.pop_front() {
            for &p in &self.pred[f] {
                if !useful[p] {
                    useful[p] = true;
                    queue.push_back(p);
                }
            }
        }
        let mut on_path = vec![false; self.succ.len()];
        let (mut count, mut steps) = (0, 0);
        for &s in &self.sources {
            if !useful[s] {
                continue;
            }
            // Iterative DFS: (function, next successor position).
            let mut stack = vec![(s, 0usize)];
            on_path[s] = true;
            while let Some((f, pos)) = stack.last_mut() {
                let f = *f;
                if f == target || *pos == self.succ[f].len() || count >= PATH_COUNT_CAP || steps >= PATH_COUNT_STEPS {
                    if f == target {
                        count += 1;
                    }
                    on_path[f] = false;
                    stack.pop();
                    continue;
                }
                let t = self.succ[f][*pos];
                *pos += 1;
                steps += 1;
                if useful[t] && !on_path[t] {
                    on_path[t] = true;
                    stack.push((t, 0));
                }
            }
        }
        count.clamp(1, PATH_COUNT_CAP)
    }
}

/// Shortest entry-to-sink slice, preferring the lexically first entry symbol
/// on ties.
fn shortest_slice(graph: &CallGraph, entry: &EntryPoint, sink: &Location) -> Option<Slice> {
    let mut best: Option<(String, Vec<Location>)> = None;
    for sym in &entry.symbols {
        if let Some(chain) = graph.shortest_chain(sym, &sink.function) {
            if best.as_ref().is_none_or(|(_, b)| chain.len() < b.len()) {
                best = Some((sym.clone(), chain));
            }
        }
    }
    best.map(|(entry, mut call_chain)| {
        call_chain.push(sink.clone());
        Slice { entry, call_chain, sink: sink.clone() }
    })
}

/// Breadth-first reachability from the entry's symbols to every sink site,
/// with the shortest slice and a capped simple-path count per site.
///
/// Sites behind unresolved indirect calls are not reached.
pub fn traverse_reachable_sinks(
    view: &ModuleView<'_>,
    graph: &CallGraph,
    entry: &EntryPoint,
    spec: &SinkSpec,
) -> Vec<ReachedSink> {
    let mut out = Vec::new();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let counter = PathCounter::new(graph, &entry.symbols);
    for f in reachable_functions(graph, &entry.symbols) {
        for site in sink_sites(view, graph, spec, f) {
            let Some(slice) = shortest_slice(graph, entry, &site.location) else { continue };
            let path_count = *counts.entry(f).or_insert_with(|| counter.count(f));
            out.push(ReachedSink { site, slice, path_count });
        }
    }
    out.sort();
    out
}

/// Constant values of sink argument `operand` along `slice`; `None` unless
/// every origin is a constant.
fn constants_along(df: &Dataflow<'_, '_>, slice: &Slice, operand: usize) -> Option<BTreeSet<i128>> {
    trace_along(df, slice, operand, false)?.constants().filter(|c| !c.is_empty())
}

/// Syscall number and name of a raw-syscall sink, when the number folds to a
/// single constant present in the table. Failures are reported in `diags`.
pub fn recover_syscall_number(
    df: &Dataflow<'_, '_>,
    site: &SinkSite,
    slice: &Slice,
    table: &SyscallTable,
    diags: &mut Vec<String>,
) -> Option<(u64, String)> {
    let op = site.number_operand?;
    let n = match constants_along(df, slice, op) {
        Some(c) if c.len() == 1 => c.into_iter().next().and_then(|v| u64::try_from(v).ok()),
        _ => None,
    };
    let Some(n) = n else {
        diags.push(format!("unresolved syscall number at {}", site.location));
        return None;
    };
    match table.name(n) {
        Some(name) => Some((n, String::from(name))),
        None => {
            diags.push(format!("syscall number {n} at {} is not in the syscall table", site.location));
            None
        }
    }
}

/// Values of the sensitive arguments of `finding`'s sink, decomposed against
/// their flag tables. Non-constant arguments are listed without a value and
/// with the entry parameters that taint them.
pub fn recover_sensitive_flags(
    df: &Dataflow<'_, '_>,
    site: &SinkSite,
    finding: &SinkFinding,
    spec: &SinkSpec,
    tables: &BTreeMap<String, FlagTable>,
) -> Vec<RecoveredArg> {
    let mut out = BTreeSet::new();
    for s in spec.sensitive_args.iter().filter(|s| s.sink == finding.sink_name) {
        let (Some(op), Some(table)) = (site.operand(s.arg), tables.get(&s.table)) else { continue };
        match constants_along(df, &finding.shortest_slice, op) {
            Some(vals) => {
                for v in vals {
                    let names = u64::try_from(v).map(|u| table.decompose(u)).unwrap_or_default();
                    out.insert(RecoveredArg { arg: s.arg, value: Some(v), names, tainted_by: Vec::new() });
                }
            }
            None => {
                let tainted_by = finding.taint.iter().filter(|t| t.sink.1 == op).map(|t| t.source.1).collect();
                out.insert(RecoveredArg { arg: s.arg, value: None, names: Vec::new(), tainted_by });
            }
        }
    }
    out.into_iter().collect()
}

/// Bytes of a constant initializer, when it is made only of integers, byte
/// strings and zeroes.
fn flatten_bytes(view: &ModuleView<'_>, tc: &TypedConst, out: &mut Vec<u8>) -> Option<()> {
    match &tc.value {
        Const::Bytes(b) => out.extend_from_slice(b),
        Const::Int(v) if view.size_of(&tc.ty) == 1 => out.push(*v as u8),
        Const::Zero => out.extend(core::iter::repeat_n(0, usize::try_from(view.size_of(&tc.ty)).ok()?)),
        Const::Aggregate(items) => {
            for it in items {
                flatten_bytes(view, it, out)?;
            }
        }
        _ => return None,
    }
    Some(())
}

/// Constant text at a global address, up to NUL or the end of the object.
fn string_at(view: &ModuleView<'_>, global: &str, off: i64) -> Option<String> {
    let g = view.global(global)?;
    if !g.is_constant {
        return None;
    }
    let mut bytes = Vec::new();
    flatten_bytes(view, g.initializer.as_ref()?, &mut bytes)?;
    let tail = bytes.get(usize::try_from(off).ok()?..)?;
    let end = tail.iter().position(|&c| c == 0).unwrap_or(tail.len());
    core::str::from_utf8(&tail[..end]).ok().map(String::from)
}

fn recover_paths(
    df: &Dataflow<'_, '_>,
    site: &SinkSite,
    sink_name: &str,
    slice: &Slice,
    spec: &SinkSpec,
) -> Vec<(usize, String)> {
    let mut out = BTreeSet::new();
    for p in spec.path_args.iter().filter(|p| p.sink == sink_name) {
        let Some(op) = site.operand(p.arg) else { continue };
        let Some(o) = trace_along(df, slice, op, false) else { continue };
        for origin in o.map.keys() {
            if let ValueOrigin::GlobalAddress(g, Some(off)) = origin {
                if let Some(s) = string_at(df.view, g, *off) {
                    out.insert((p.arg, s));
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Static inputs of the surface analysis.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceInputs<'a> {
    pub spec: &'a SinkSpec,
    pub syscalls: &'a SyscallTable,
    pub flags: &'a BTreeMap<String, FlagTable>,
}

/// All findings for one entry point, sorted.
pub fn analyze_entry(
    df: &Dataflow<'_, '_>,
    graph: &CallGraph,
    entry: &EntryPoint,
    inputs: SurfaceInputs<'_>,
    diags: &mut Vec<String>,
) -> Vec<SinkFinding> {
    let mut out = Vec::new();
    for r in traverse_reachable_sinks(df.view, graph, entry, inputs.spec) {
        let (sink_name, syscall_number) = match r.site.kind {
            SinkKind::ExternalApi => (r.site.callee.clone(), None),
            SinkKind::RawSyscall => match recover_syscall_number(df, &r.site, &r.slice, inputs.syscalls, diags) {
                Some((n, name)) => (name, Some(n)),
                None => (r.site.callee.clone(), None),
            },
        };
        let mut f = SinkFinding {
            entry: entry.clone(),
            paths: recover_paths(df, &r.site, &sink_name, &r.slice, inputs.spec),
            sink_name,
            sink_kind: r.site.kind,
            taint: taint_slice(df, &r.slice),
            shortest_slice: r.slice,
            path_count: r.path_count,
            recovered: Vec::new(),
            syscall_number,
        };
        f.recovered = recover_sensitive_flags(df, &r.site, &f, inputs.spec, inputs.flags);
        out.push(f);
    }
    out.sort_by(|a, b| (&a.sink_name, &a.shortest_slice.sink).cmp(&(&b.sink_name, &b.shortest_slice.sink)));
    out.dedup();
    out
}

/// Annotations for one finding, keyed by its interface, sink site and name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FindingAnnotations {
    pub interface: String,
    pub sink: Location,
    pub sink_name: String,
    pub annotations: Vec<StrategyAnnotation>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceReport {
    pub runtime_label: String,
    pub entries: Vec<EntryPoint>,
    pub findings: BTreeMap<String, Vec<SinkFinding>>,
    pub summary: BTreeMap<String, BTreeSet<String>>,
    pub strategy_annotations: Vec<FindingAnnotations>,
    #[serde(default)]
    pub resolution: Option<ResolutionStats>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl SurfaceReport {
    /// Union of every entry's sinks.
    pub fn sink_names(&self) -> BTreeSet<&str> {
        self.summary.values().flatten().map(String::as_str).collect()
    }

    /// `label | sink sink ...`, sinks sorted.
    pub fn summary_row(&self) -> String {
        let names: Vec<&str> = self.sink_names().into_iter().collect();
        format!("{} | {}", self.runtime_label, names.join(" "))
    }
}

/// Assembles the report; the summary lists every entry, including those
/// without findings.
pub fn build_report(
    runtime_label: &str,
    entries: &[EntryPoint],
    findings: Vec<SinkFinding>,
    annotations: Vec<FindingAnnotations>,
) -> SurfaceReport {
    let mut by_entry: BTreeMap<String, Vec<SinkFinding>> = BTreeMap::new();
    let mut summary: BTreeMap<String, BTreeSet<String>> =
        entries.iter().map(|e| (e.interface_name.clone(), BTreeSet::new())).collect();
    for f in findings {
        summary.entry(f.entry.interface_name.clone()).or_default().insert(f.sink_name.clone());
        by_entry.entry(f.entry.interface_name.clone()).or_default().push(f);
    }
    for v in by_entry.values_mut() {
        v.sort();
        v.dedup();
    }
    let mut annotations = annotations;
    annotations.sort();
    let mut entries = entries.to_vec();
    entries.sort();
    SurfaceReport {
        runtime_label: runtime_label.to_string(),
        entries,
        findings: by_entry,
        summary,
        strategy_annotations: annotations,
        resolution: None,
        diagnostics: Vec::new(),
    }
}
