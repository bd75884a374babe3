use alloc::string::String;

use thiserror::Error;

/// Parse and link failures. Positions are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IrError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: u32, col: u32, msg: String },
    #[error("{line}:{col}: duplicate value id %{name} in @{function}")]
    DuplicateValue { line: u32, col: u32, function: String, name: String },
    #[error("{line}:{col}: unknown block target %{label} in @{function}")]
    UnknownBlock { line: u32, col: u32, function: String, label: String },
    #[error("{line}:{col}: reference to undefined type %{name}")]
    UnknownType { line: u32, col: u32, name: String },
    #[error("{line}:{col}: call to undeclared symbol @{name}")]
    UnknownSymbol { line: u32, col: u32, name: String },
    #[error("duplicate definition of {0}")]
    DuplicateDefinition(String),
}

impl IrError {
    pub fn line(&self) -> Option<u32> {
        match self {
            IrError::Syntax { line, .. }
            | IrError::DuplicateValue { line, .. }
            | IrError::UnknownBlock { line, .. }
            | IrError::UnknownType { line, .. }
            | IrError::UnknownSymbol { line, .. } => Some(*line),
            IrError::DuplicateDefinition(_) => None,
        }
    }
}

/// A missing or malformed configuration section; the payload names it.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("configuration error: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("signature mismatch for {0}")]
    SignatureMismatch(String),
    #[error("lifted definition for {0}, which is already defined")]
    AlreadyDefined(String),
    #[error(transparent)]
    Link(#[from] IrError),
}
