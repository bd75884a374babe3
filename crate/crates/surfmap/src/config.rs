//! Run configuration: a TOML file, command-line overrides, and path
//! resolution relative to the configuration file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use surfmap_core::extraction::ToolchainConfig;
use surfmap_core::surface::EntryConfig;
use surfmap_core::ConfigError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Table,
}

/// Everything one pipeline run needs. Relative paths are resolved against
/// [`RunConfig::base_dir`]. Optional tables fall back to the built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_label")]
    pub runtime_label: String,
    /// Textual IR files, linked in order.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    /// IR lifted from module-level assembly, integrated after linking.
    #[serde(default)]
    pub lifted: Vec<PathBuf>,
    #[serde(default)]
    pub sinkspec: Option<PathBuf>,
    #[serde(default)]
    pub rules: Option<PathBuf>,
    #[serde(default)]
    pub syscall_table: Option<PathBuf>,
    /// Flag-table name to file.
    #[serde(default)]
    pub flag_tables: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub entry_points: Option<EntryConfig>,
    /// Artifact directory; without it nothing is written.
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    /// Used by `extract`.
    #[serde(default)]
    pub toolchain: Option<ToolchainConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_label() -> String {
    "runtime".into()
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub inputs: Vec<PathBuf>,
    pub entry_patterns: Vec<String>,
    pub sinkspec: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub label: Option<String>,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut c: RunConfig = toml::from_str(text).map_err(|e| ConfigError(format!("run config: {}", e.message())))?;
        c.base_dir = base_dir.to_path_buf();
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError(format!("run config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    /// Command-line paths are relative to the working directory, so they are
    /// made absolute before joining.
    pub fn apply(&mut self, o: Overrides) -> Result<(), ConfigError> {
        let cwd = std::env::current_dir().map_err(|e| ConfigError(format!("working directory: {e}")))?;
        if !o.inputs.is_empty() {
            self.inputs = o.inputs.into_iter().map(|p| cwd.join(p)).collect();
        }
        if !o.entry_patterns.is_empty() {
            self.entry_points.get_or_insert_with(EntryConfig::default).patterns = o.entry_patterns;
        }
        if let Some(s) = o.sinkspec {
            self.sinkspec = Some(cwd.join(s));
        }
        if let Some(out) = o.out {
            self.out = Some(cwd.join(out));
        }
        if let Some(f) = o.format {
            self.format = f;
        }
        if let Some(l) = o.label {
            self.runtime_label = l;
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    /// At least one input, and every referenced file present.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.inputs.is_empty() {
            return Err(ConfigError("inputs: no IR input given".into()));
        }
        let named = [("sinkspec", &self.sinkspec), ("rules", &self.rules), ("syscall_table", &self.syscall_table)];
        let files = self
            .inputs
            .iter()
            .map(|p| ("inputs", p))
            .chain(self.lifted.iter().map(|p| ("lifted", p)))
            .chain(named.into_iter().filter_map(|(k, p)| p.as_ref().map(|p| (k, p))))
            .chain(self.flag_tables.values().map(|p| ("flag_tables", p)));
        for (what, p) in files {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(ConfigError(format!("{what}: {} does not exist", full.display())));
            }
        }
        Ok(())
    }
}
