//! Sink specification, rule table and lookup tables, from files or the
//! built-in defaults shipped in `data/`.

use std::collections::BTreeMap;
use std::path::Path;

use surfmap_core::strategy::RuleTable;
use surfmap_core::surface::{FlagTable, SinkSpec, SyscallTable};
use surfmap_core::ConfigError;

use crate::config::RunConfig;

pub const DEFAULT_SINKSPEC: &str = include_str!("../../../data/sinkspec.toml");
pub const DEFAULT_RULES: &str = include_str!("../../../data/rules.toml");
pub const DEFAULT_SYSCALLS: &str = include_str!("../../../data/syscalls_x86_64.tsv");
pub const DEFAULT_FLAG_TABLES: [(&str, &str); 2] = [
    ("open_flags", include_str!("../../../data/open_flags.tsv")),
    ("statx_flags", include_str!("../../../data/statx_flags.tsv")),
];

#[derive(Debug, Clone)]
pub struct StaticInputs {
    pub spec: SinkSpec,
    pub rules: RuleTable,
    pub syscalls: SyscallTable,
    pub flags: BTreeMap<String, FlagTable>,
}

fn read(what: &str, p: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(p).map_err(|e| ConfigError(format!("{what}: {}: {e}", p.display())))
}

pub fn parse_sinkspec(text: &str) -> Result<SinkSpec, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError(format!("sinkspec: {}", e.message())))
}

pub fn parse_rules(text: &str) -> Result<RuleTable, ConfigError> {
    let t: RuleTable = toml::from_str(text).map_err(|e| ConfigError(format!("rules: {}", e.message())))?;
    t.validate()?;
    Ok(t)
}

impl StaticInputs {
    pub fn defaults() -> Result<Self, ConfigError> {
        let flags = DEFAULT_FLAG_TABLES
            .iter()
            .map(|(n, t)| Ok((n.to_string(), FlagTable::from_tsv(n, t)?)))
            .collect::<Result<_, ConfigError>>()?;
        let s = StaticInputs {
            spec: parse_sinkspec(DEFAULT_SINKSPEC)?,
            rules: parse_rules(DEFAULT_RULES)?,
            syscalls: SyscallTable::from_tsv(DEFAULT_SYSCALLS)?,
            flags,
        };
        s.spec.validate(&s.flags)?;
        Ok(s)
    }

    /// Configured files replace the corresponding defaults; configured flag
    /// tables are added to (or replace) the default ones.
    pub fn load(config: &RunConfig) -> Result<Self, ConfigError> {
        let mut s = Self::defaults()?;
        if let Some(p) = &config.sinkspec {
            s.spec = parse_sinkspec(&read("sinkspec", &config.resolve(p))?)?;
        }
        if let Some(p) = &config.rules {
            s.rules = parse_rules(&read("rules", &config.resolve(p))?)?;
        }
        if let Some(p) = &config.syscall_table {
            s.syscalls = SyscallTable::from_tsv(&read("syscall_table", &config.resolve(p))?)?;
        }
        for (name, p) in &config.flag_tables {
            let t = FlagTable::from_tsv(name, &read("flag_tables", &config.resolve(p))?)?;
            s.flags.insert(name.clone(), t);
        }
        s.spec.validate(&s.flags)?;
        Ok(s)
    }
}
