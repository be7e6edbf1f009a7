use crate::dsl::Pos;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error at {pos}: {message}")]
    Parse { pos: Pos, message: String },
    #[error("unknown symbol `{name}` at {pos}")]
    UnknownSymbol { name: String, pos: Pos },
    #[error("invalid spec at {pos}: {message}")]
    Spec { pos: Pos, message: String },
    /// An error raised inside the engine, tagged with the module it came from.
    #[error("{module}: {message}")]
    Module { module: &'static str, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn parse(pos: Pos, message: impl Into<String>) -> Self {
        CliError::Parse { pos, message: message.into() }
    }

    pub fn pos(&self) -> Option<Pos> {
        match self {
            CliError::Parse { pos, .. } | CliError::UnknownSymbol { pos, .. } | CliError::Spec { pos, .. } => Some(*pos),
            _ => None,
        }
    }
}

/// Tags engine errors with their module.
pub trait InModule<T> {
    fn in_module(self, module: &'static str) -> Result<T, CliError>;
}

impl<T, E: std::fmt::Display> InModule<T> for Result<T, E> {
    fn in_module(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Module { module, message: e.to_string() })
    }
}
