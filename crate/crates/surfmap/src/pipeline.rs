//! The analysis pipeline: parse → link → asm integration → vtable scan →
//! fixed-point resolution → entry discovery → sink traversal → taint and
//! constant recovery → classification → artifacts.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use surfmap_core::callgraph::{indirect_site_count, resolve_view, CallGraph, ResolveOptions};
use surfmap_core::dataflow::Dataflow;
use surfmap_core::extraction::{detect_asm_definitions, integrate_lifted_ir};
use surfmap_core::ir::{link_modules, parse_module, IrModule, ModuleView};
use surfmap_core::strategy::classify_finding;
use surfmap_core::surface::{
    analyze_entry, build_report, find_entry_points, FindingAnnotations, SurfaceInputs, SurfaceReport,
};
use surfmap_core::vtable::VTableRegistry;
use surfmap_core::{ConfigError, ExtractError};

use crate::config::RunConfig;
use crate::inputs::StaticInputs;
use crate::render;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Extract,
    Parse,
    Link,
    AsmIntegration,
    VTableScan,
    Resolution,
    EntryDiscovery,
    SinkTraversal,
    Classification,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Extract => "extract",
            Stage::Parse => "parse",
            Stage::Link => "link",
            Stage::AsmIntegration => "asm-integration",
            Stage::VTableScan => "vtable-scan",
            Stage::Resolution => "resolution",
            Stage::EntryDiscovery => "entry-discovery",
            Stage::SinkTraversal => "sink-traversal",
            Stage::Classification => "classification",
            Stage::Output => "output",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    ParseLink,
    Analysis,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{stage}: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: ErrorKind,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, kind: ErrorKind, message: impl fmt::Display) -> Self {
        PipelineError { stage, kind, message: message.to_string() }
    }

    pub fn config(stage: Stage, e: ConfigError) -> Self {
        Self::new(stage, ErrorKind::Config, e)
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Config => 2,
            ErrorKind::ParseLink => 3,
            ErrorKind::Analysis => 4,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Shuffles the indirect-site worklist; results must not depend on it.
    pub order_seed: Option<u64>,
}

pub struct Analysis {
    pub report: SurfaceReport,
    pub graph: CallGraph,
}

fn read_module(path: &Path) -> Result<IrModule, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::new(Stage::Parse, ErrorKind::ParseLink, format!("{}: {e}", path.display())))?;
    parse_module(&text)
        .map_err(|e| PipelineError::new(Stage::Parse, ErrorKind::ParseLink, format!("{}:{e}", path.display())))
}

/// Parses, links and integrates lifted assembly.
pub fn load_program(config: &RunConfig, diags: &mut Vec<String>) -> Result<IrModule, PipelineError> {
    let modules = config.inputs.iter().map(|p| read_module(&config.resolve(p))).collect::<Result<Vec<_>, _>>()?;
    let mut m = link_modules(&modules).map_err(|e| PipelineError::new(Stage::Link, ErrorKind::ParseLink, e))?;
    let (blocks, asm_diags) = detect_asm_definitions(&m);
    diags.extend(asm_diags);
    for p in &config.lifted {
        let lifted = read_module(&config.resolve(p))?;
        m = integrate_lifted_ir(&m, &lifted).map_err(|e| {
            let kind = match e {
                ExtractError::Config(_) => ErrorKind::Config,
                _ => ErrorKind::ParseLink,
            };
            PipelineError::new(Stage::AsmIntegration, kind, e)
        })?;
    }
    for b in &blocks {
        for s in b.declared_symbols.iter().filter(|s| m.function(s).is_none()) {
            diags.push(format!("symbol {s} is defined only in assembly and has no lifted IR"));
        }
    }
    Ok(m)
}

/// Runs every analysis stage in memory.
pub fn analyze(config: &RunConfig, inputs: &StaticInputs, opts: &RunOptions) -> Result<Analysis, PipelineError> {
    config.validate().map_err(|e| PipelineError::config(Stage::Config, e))?;
    let mut diags = Vec::new();
    let m = load_program(config, &mut diags)?;

    let view = ModuleView::new(&m);
    let registry = VTableRegistry::build(&m);
    log::info!("vtable-scan: {} dispatch tables", registry.records.len());
    diags.extend(registry.diagnostics.iter().cloned());

    let mut ro = ResolveOptions::default();
    if let Some(seed) = opts.order_seed {
        let mut order: Vec<usize> = (0..indirect_site_count(&view)).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        ro.order = Some(order);
    }
    let graph = resolve_view(&view, &registry, &ro);
    log::info!("resolution: {}", serde_json::to_string(&graph.stats).unwrap_or_default());
    diags.extend(graph.diagnostics.iter().cloned());

    let (entries, entry_diags) = find_entry_points(&m, config.entry_points.as_ref())
        .map_err(|e| PipelineError::config(Stage::EntryDiscovery, e))?;
    diags.extend(entry_diags);
    log::info!("entry-discovery: {} interfaces", entries.len());

    let df = Dataflow::new(&view, &registry, &graph);
    let si = SurfaceInputs { spec: &inputs.spec, syscalls: &inputs.syscalls, flags: &inputs.flags };
    let mut findings = Vec::new();
    for e in &entries {
        findings.extend(analyze_entry(&df, &graph, e, si, &mut diags));
    }
    log::info!("sink-traversal: {} findings", findings.len());

    let mut annotations = Vec::new();
    for f in &findings {
        if !inputs.rules.covers(&f.sink_name) {
            diags.push(format!("no strategy rule for sink {}", f.sink_name));
        }
        annotations.push(FindingAnnotations {
            interface: f.entry.interface_name.clone(),
            sink: f.shortest_slice.sink.clone(),
            sink_name: f.sink_name.clone(),
            annotations: classify_finding(f, &inputs.rules),
        });
    }

    let mut report = build_report(&config.runtime_label, &entries, findings, annotations);
    report.resolution = Some(graph.stats.clone());
    diags.sort();
    diags.dedup();
    report.diagnostics = diags;
    Ok(Analysis { report, graph })
}

pub const MARKER: &str = "FAILED";
pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const GRAPH_FILE: &str = "callgraph.tsv";

/// Artifact writer for one output directory. A failure marker is present
/// from [`Artifacts::begin`] until [`Artifacts::finish`]; failures overwrite
/// it with the error.
pub struct Artifacts {
    dir: PathBuf,
}

fn io_error(e: impl fmt::Display) -> PipelineError {
    PipelineError::new(Stage::Output, ErrorKind::Analysis, e)
}

impl Artifacts {
    pub fn begin(dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir)
            .map_err(|e| PipelineError::new(Stage::Config, ErrorKind::Config, format!("out {}: {e}", dir.display())))?;
        let a = Artifacts { dir: dir.to_path_buf() };
        a.write(MARKER, "run in progress or interrupted\n")?;
        Ok(a)
    }

    /// Writes `name` through a temporary file so readers never see half of it.
    pub fn write(&self, name: &str, contents: &str) -> Result<(), PipelineError> {
        let tmp = self.dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, contents).map_err(io_error)?;
        fs::rename(&tmp, self.dir.join(name)).map_err(io_error)
    }

    pub fn fail(&self, e: &PipelineError) {
        if let Err(w) = self.write(MARKER, &format!("{e}\n")) {
            log::error!("could not record failure: {w}");
        }
    }

    pub fn finish(self) -> Result<(), PipelineError> {
        match fs::remove_file(self.dir.join(MARKER)) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(io_error(e)),
        }
    }
}

/// Full run: analysis plus artifacts in `config.out` (when set). Returns the
/// report for printing.
pub fn run_pipeline(config: &RunConfig, opts: &RunOptions) -> Result<SurfaceReport, PipelineError> {
    let out = match &config.out {
        Some(d) => Some(Artifacts::begin(&config.resolve(d))?),
        None => None,
    };
    let result = StaticInputs::load(config)
        .map_err(|e| PipelineError::config(Stage::Config, e))
        .and_then(|inputs| analyze(config, &inputs, opts))
        .and_then(|a| {
            if let Some(o) = &out {
                o.write(REPORT_FILE, &render::json(&a.report))?;
                o.write(SUMMARY_FILE, &render::table(&a.report))?;
                o.write(GRAPH_FILE, &a.graph.export_tsv())?;
            }
            Ok(a.report)
        });
    match (result, out) {
        (Ok(r), Some(o)) => o.finish().map(|()| r),
        (Ok(r), None) => Ok(r),
        (Err(e), Some(o)) => {
            o.fail(&e);
            Err(e)
        }
        (Err(e), None) => Err(e),
    }
}
