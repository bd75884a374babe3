//! Executes an extraction plan: runs each front-end command in order.

use std::path::{Path, PathBuf};
use std::process::Command;

use surfmap_core::extraction::{plan_build, BuildPlan, ToolchainConfig};

use crate::pipeline::{ErrorKind, PipelineError, Stage};

/// Plans with every directory made absolute against `base`, so outputs land
/// in the same place whatever each step's working directory.
pub fn plan(toolchain: &ToolchainConfig, base: &Path) -> Result<BuildPlan, PipelineError> {
    let abs = |p: &str| base.join(p).to_string_lossy().into_owned();
    let mut tc = toolchain.clone();
    tc.output_dir = abs(&tc.output_dir);
    for fe in &mut tc.frontends {
        fe.working_dir = abs(&fe.working_dir);
    }
    plan_build(&tc).map_err(|e| PipelineError::config(Stage::Config, e))
}

/// Runs the steps, stopping at the first failure. Returns the IR files.
pub fn execute(plan: &BuildPlan) -> Result<Vec<PathBuf>, PipelineError> {
    if let Some(dir) = plan.produced_ir_paths.first().and_then(|p| Path::new(p).parent()) {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::new(Stage::Extract, ErrorKind::ParseLink, e))?;
    }
    for step in &plan.steps {
        log::info!("extract: {} {}", step.program, step.args.join(" "));
        let status =
            Command::new(&step.program).args(&step.args).current_dir(&step.working_dir).status().map_err(|e| {
                PipelineError::new(Stage::Extract, ErrorKind::ParseLink, format!("{}: {e}", step.program))
            })?;
        if !status.success() {
            return Err(PipelineError::new(
                Stage::Extract,
                ErrorKind::ParseLink,
                format!("{} exited with {status}", step.program),
            ));
        }
    }
    Ok(plan.produced_ir_paths.iter().map(PathBuf::from).collect())
}
