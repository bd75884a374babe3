//! Attack-strategy annotation of findings from a name-keyed rule table.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::surface::SinkFinding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StrategyClass {
    /// Consumes the resource on the instance's own account.
    DirectConsumption,
    /// Makes other parts of the system do work the instance is not charged for.
    WorkloadInjection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ResourceAxis {
    CpuCycles,
    DiskBandwidth,
    DiskSpaceInode,
    KernelObjectExhaustion,
    EntropyPool,
    NetworkBandwidth,
    KernelProcessingLoad,
    ThreadPressure,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StrategyAnnotation {
    pub strategy_class: StrategyClass,
    pub resource_axis: ResourceAxis,
    /// `<rule id>: <rule rationale>`
    pub rationale: String,
}

/// Extra constraints a finding must satisfy for a rule to apply.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleCondition {
    /// A recovered symbolic flag name that must be present.
    #[serde(default)]
    pub flag: Option<String>,
    /// A recovered path argument must start with this.
    #[serde(default)]
    pub path_prefix: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub id: String,
    pub sinks: Vec<String>,
    pub strategy_class: StrategyClass,
    pub resource_axis: ResourceAxis,
    pub rationale: String,
    #[serde(default)]
    pub when: Option<RuleCondition>,
}

impl Rule {
    fn applies(&self, f: &SinkFinding) -> bool {
        if !self.sinks.iter().any(|s| *s == f.sink_name) {
            return false;
        }
        let Some(c) = &self.when else { return true };
        let flag_ok = c.flag.as_ref().is_none_or(|want| f.recovered.iter().any(|r| r.names.iter().any(|n| n == want)));
        let path_ok = c.path_prefix.as_ref().is_none_or(|p| f.paths.iter().any(|(_, s)| s.starts_with(p.as_str())));
        flag_ok && path_ok
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleTable {
    #[serde(rename = "rule", default)]
    pub rules: Vec<Rule>,
}

impl RuleTable {
    /// Rejects empty or duplicate ids and rules without sinks.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut ids = BTreeSet::new();
        for r in &self.rules {
            if r.id.is_empty() || !ids.insert(r.id.as_str()) {
                return Err(ConfigError(format!("rules: empty or duplicate id {:?}", r.id)));
            }
            if r.sinks.is_empty() {
                return Err(ConfigError(format!("rules: {} names no sinks", r.id)));
            }
        }
        Ok(())
    }

    /// Whether any rule mentions `sink`, conditions aside.
    pub fn covers(&self, sink: &str) -> bool {
        self.rules.iter().any(|r| r.sinks.iter().any(|s| s == sink))
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.rules.iter().map(|r| r.id.as_str()).collect()
    }
}

/// Annotations of every rule that applies to `finding`, sorted and
/// deduplicated. Findings for sinks no rule mentions get none; see
/// [`RuleTable::covers`].
pub fn classify_finding(finding: &SinkFinding, rules: &RuleTable) -> Vec<StrategyAnnotation> {
    let out: BTreeSet<StrategyAnnotation> = rules
        .rules
        .iter()
        .filter(|r| r.applies(finding))
        .map(|r| StrategyAnnotation {
            strategy_class: r.strategy_class,
            resource_axis: r.resource_axis,
            rationale: format!("{}: {}", r.id, r.rationale),
        })
        .collect();
    out.into_iter().collect()
}
