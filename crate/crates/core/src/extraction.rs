//! Build planning for whole-program IR, and handling of symbols defined in
//! module-level assembly.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ExtractError};
use crate::ir::{link_modules, IrModule, Linkage, Signature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontendKind {
    Rustc,
    Clang,
}

impl FrontendKind {
    /// Flags making the front end write textual IR.
    pub fn default_emit_flags(self) -> Vec<String> {
        let v: &[&str] = match self {
            FrontendKind::Rustc => &["--emit=llvm-ir", "-C", "embed-bitcode=yes", "-C", "codegen-units=1"],
            FrontendKind::Clang => &["-S", "-emit-llvm", "-fno-discard-value-names"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }

    pub fn default_no_opt_flags(self) -> Vec<String> {
        let v: &[&str] = match self {
            FrontendKind::Rustc => &["-C", "opt-level=0"],
            FrontendKind::Clang => &["-O0"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }
}

/// One compiler front end and the sources it builds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontendConfig {
    pub kind: FrontendKind,
    /// Compiler executable.
    #[serde(default)]
    pub compiler: Option<String>,
    /// Defaults to [`FrontendKind::default_emit_flags`].
    #[serde(default)]
    pub emit_flags: Option<Vec<String>>,
    /// Defaults to [`FrontendKind::default_no_opt_flags`].
    #[serde(default)]
    pub no_opt_flags: Option<Vec<String>>,
    #[serde(default)]
    pub extra_flags: Vec<String>,
    pub sources: Vec<String>,
    #[serde(default = "dot")]
    pub working_dir: String,
}

fn dot() -> String {
    String::from(".")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolchainConfig {
    #[serde(default)]
    pub frontends: Vec<FrontendConfig>,
    /// Directory receiving the IR files.
    #[serde(default = "dot")]
    pub output_dir: String,
    /// Optional IR linker (e.g. `llvm-link`) merging every output into one module.
    #[serde(default)]
    pub linker: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStep {
    pub program: String,
    pub args: Vec<String>,
    pub working_dir: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildPlan {
    pub steps: Vec<BuildStep>,
    pub produced_ir_paths: Vec<String>,
}

fn file_stem(path: &str) -> &str {
    let name = path.rsplit('/').next().unwrap_or(path);
    name.rsplit_once('.').map_or(name, |(s, _)| s)
}

fn join(dir: &str, file: &str) -> String {
    if dir.is_empty() || dir == "." {
        String::from(file)
    } else {
        format!("{}/{file}", dir.trim_end_matches('/'))
    }
}

/// The command sequence producing unoptimised IR for every configured
/// source, in configuration order. Nothing is executed.
pub fn plan_build(config: &ToolchainConfig) -> Result<BuildPlan, ConfigError> {
    if config.frontends.is_empty() {
        return Err(ConfigError("toolchain".into()));
    }
    let mut plan = BuildPlan::default();
    let mut seen = BTreeSet::new();
    for fe in &config.frontends {
        let compiler =
            fe.compiler.as_deref().filter(|c| !c.is_empty()).ok_or_else(|| ConfigError("toolchain".into()))?;
        let emit = fe.emit_flags.clone().unwrap_or_else(|| fe.kind.default_emit_flags());
        let no_opt = fe.no_opt_flags.clone().unwrap_or_else(|| fe.kind.default_no_opt_flags());
        for src in &fe.sources {
            let out = join(&config.output_dir, &format!("{}.ll", file_stem(src)));
            if !seen.insert(out.clone()) {
                return Err(ConfigError(format!("toolchain: two sources produce {out}")));
            }
            let mut args: Vec<String> = emit.iter().chain(&no_opt).chain(&fe.extra_flags).cloned().collect();
            args.extend([src.clone(), String::from("-o"), out.clone()]);
            plan.steps.push(BuildStep { program: compiler.to_string(), args, working_dir: fe.working_dir.clone() });
            plan.produced_ir_paths.push(out);
        }
    }
    if let Some(linker) = &config.linker {
        let out = join(&config.output_dir, "whole-program.ll");
        if !seen.insert(out.clone()) {
            return Err(ConfigError(format!("toolchain: two steps produce {out}")));
        }
        let mut args = vec![String::from("-S")];
        args.extend(plan.produced_ir_paths.iter().cloned());
        args.extend([String::from("-o"), out.clone()]);
        plan.steps.push(BuildStep { program: linker.clone(), args, working_dir: String::from(".") });
        plan.produced_ir_paths.push(out);
    }
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsmBlock {
    pub source_text: String,
    /// In order of first appearance.
    pub declared_symbols: Vec<String>,
    /// (module name, block index)
    pub origin: (String, usize),
}

fn strip_comments(text: &str) -> String {
    let mut out = String::new();
    let mut rest = text;
    while let Some(i) = rest.find("/*") {
        out.push_str(&rest[..i]);
        rest = rest[i + 2..].split_once("*/").map_or("", |(_, r)| r);
    }
    out.push_str(rest);
    out.lines()
        .map(|l| {
            let cut = [l.find('#'), l.find("//")].into_iter().flatten().min().unwrap_or(l.len());
            &l[..cut]
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn symbol_token(s: &str) -> Option<&str> {
    let s = s.trim();
    let s = s.strip_prefix('"').and_then(|q| q.strip_suffix('"')).unwrap_or(s);
    let ok = !s.is_empty()
        && !s.starts_with(".L")
        && !s.starts_with(|c: char| c.is_ascii_digit())
        && s.chars().all(|c| c.is_ascii_alphanumeric() || "_.$".contains(c));
    ok.then_some(s)
}

/// Symbols a block of assembly defines: labels plus `.globl`/`.global`
/// names. Local (`.L`) and numeric labels are ignored.
pub fn asm_symbols(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut add = |s: &str| {
        if !out.iter().any(|o| o == s) {
            out.push(String::from(s));
        }
    };
    for stmt in strip_comments(text).split(['\n', ';']) {
        let mut stmt = stmt.trim();
        // one or more `label:` prefixes
        while let Some((head, tail)) = stmt.split_once(':') {
            match symbol_token(head) {
                Some(l) if !head.contains(char::is_whitespace) => {
                    add(l);
                    stmt = tail.trim();
                }
                _ => break,
            }
        }
        if let Some((".globl" | ".global", names)) = stmt.split_once(char::is_whitespace) {
            for n in names.split(',').filter_map(symbol_token) {
                add(n);
            }
        }
    }
    out
}

/// One block per module-level assembly block, with the symbols it defines.
/// Blocks defining nothing recognisable come with a diagnostic.
pub fn detect_asm_definitions(module: &IrModule) -> (Vec<AsmBlock>, Vec<String>) {
    let mut diags = Vec::new();
    let blocks = module
        .module_asm
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let declared_symbols = asm_symbols(text);
            if declared_symbols.is_empty() {
                diags.push(format!("{}: asm block {i} defines no recognisable symbol", module.name));
            }
            AsmBlock { source_text: text.clone(), declared_symbols, origin: (module.name.clone(), i) }
        })
        .collect();
    (blocks, diags)
}

fn compatible(a: &Signature, b: &Signature) -> bool {
    a.params.len() == b.params.len()
        && a.variadic == b.variadic
        && a.params.iter().zip(&b.params).all(|(x, y)| x.kind_class() == y.kind_class())
}

fn is_strong(l: Linkage) -> bool {
    !matches!(
        l,
        Linkage::Weak | Linkage::WeakOdr | Linkage::LinkOnce | Linkage::LinkOnceOdr | Linkage::AvailableExternally
    )
}

/// Replaces declarations in `base` with the definitions `lifted` provides
/// (typically lifted from assembly) and relinks.
pub fn integrate_lifted_ir(base: &IrModule, lifted: &IrModule) -> Result<IrModule, ExtractError> {
    let mut base = base.clone();
    let mut replaced = BTreeSet::new();
    for f in &lifted.functions {
        if let Some(d) = base.function(&f.symbol) {
            if is_strong(d.linkage) {
                return Err(ExtractError::AlreadyDefined(f.symbol.clone()));
            }
            replaced.insert(f.symbol.clone());
        } else if let Some(d) = base.declaration(&f.symbol) {
            if !compatible(&d.signature, &f.signature) {
                return Err(ExtractError::SignatureMismatch(f.symbol.clone()));
            }
        }
    }
    // Weak definitions in the base give way to the lifted body.
    base.functions.retain(|f| !replaced.contains(&f.symbol));
    Ok(link_modules(&[base, lifted.clone()])?)
}
