use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use surfmap::config::{OutputFormat, Overrides, RunConfig};
use surfmap::pipeline::{Artifacts, ErrorKind, PipelineError, RunOptions, Stage, REPORT_FILE, SUMMARY_FILE};
use surfmap::{extract, render, run_pipeline};

/// Maps WASI/WASIX interfaces of a runtime to the syscalls and external APIs
/// they can reach.
#[derive(Parser)]
#[command(name = "surfmap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build unoptimised IR with the configured toolchain.
    Extract {
        #[arg(long)]
        config: PathBuf,
        /// Print the plan without running it.
        #[arg(long)]
        dry_run: bool,
        #[arg(long)]
        verbose: bool,
    },
    /// Run the full analysis over IR files.
    Analyze(AnalyzeArgs),
    /// Re-render a saved report.
    Report {
        /// A report.json written by `analyze`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: OutputFormat,
        #[arg(long)]
        verbose: bool,
    },
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Textual IR files (replace the configured inputs).
    #[arg(long, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Entry-point patterns (replace the configured ones).
    #[arg(long, num_args = 1..)]
    entry_pattern: Vec<String>,
    #[arg(long)]
    sinkspec: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Runtime name used in the summary row.
    #[arg(long)]
    label: Option<String>,
    /// Shuffle the resolver's worklist with this seed.
    #[arg(long)]
    order_seed: Option<u64>,
    #[arg(long)]
    verbose: bool,
}

fn init_logging(verbose: bool) {
    let level = if verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
}

fn print(s: &str) {
    let _ = std::io::stdout().lock().write_all(s.as_bytes());
}

fn analyze(a: AnalyzeArgs) -> Result<(), PipelineError> {
    let cfg_err = |e| PipelineError::config(Stage::Config, e);
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p).map_err(cfg_err)?,
        None => RunConfig { runtime_label: "runtime".into(), ..Default::default() },
    };
    cfg.apply(Overrides {
        inputs: a.input,
        entry_patterns: a.entry_pattern,
        sinkspec: a.sinkspec,
        out: a.out,
        format: a.format,
        label: a.label,
    })
    .map_err(cfg_err)?;
    let report = run_pipeline(&cfg, &RunOptions { order_seed: a.order_seed })?;
    print(&match cfg.format {
        OutputFormat::Json => render::json(&report),
        OutputFormat::Table => render::table(&report),
    });
    Ok(())
}

fn report(input: PathBuf, out: Option<PathBuf>, format: OutputFormat) -> Result<(), PipelineError> {
    let text = std::fs::read_to_string(&input)
        .map_err(|e| PipelineError::new(Stage::Config, ErrorKind::Config, format!("{}: {e}", input.display())))?;
    let r = render::parse_json(&text)
        .map_err(|e| PipelineError::new(Stage::Parse, ErrorKind::ParseLink, format!("{}: {e}", input.display())))?;
    if let Some(dir) = out {
        let a = Artifacts::begin(&dir)?;
        let written = a.write(REPORT_FILE, &render::json(&r)).and_then(|()| a.write(SUMMARY_FILE, &render::table(&r)));
        match written {
            Ok(()) => a.finish()?,
            Err(e) => {
                a.fail(&e);
                return Err(e);
            }
        }
    }
    print(&match format {
        OutputFormat::Json => render::json(&r),
        OutputFormat::Table => render::table(&r),
    });
    Ok(())
}

fn extract_cmd(config: PathBuf, dry_run: bool) -> Result<(), PipelineError> {
    let cfg = RunConfig::load(&config).map_err(|e| PipelineError::config(Stage::Config, e))?;
    let tc = cfg
        .toolchain
        .as_ref()
        .ok_or_else(|| PipelineError::config(Stage::Config, surfmap_core::ConfigError("toolchain".into())))?;
    let plan = extract::plan(tc, &cfg.base_dir)?;
    if dry_run {
        for s in &plan.steps {
            print(&format!("(cd {} && {} {})\n", s.working_dir, s.program, s.args.join(" ")));
        }
        return Ok(());
    }
    for p in extract::execute(&plan)? {
        print(&format!("{}\n", p.display()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Extract { config, dry_run, verbose } => {
            init_logging(verbose);
            extract_cmd(config, dry_run)
        }
        Command::Analyze(a) => {
            init_logging(a.verbose);
            analyze(a)
        }
        Command::Report { input, out, format, verbose } => {
            init_logging(verbose);
            report(input, out, format)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("surfmap: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
