use std::fmt;

use darcy_core::CoreError;

/// Failure category, mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Numerical => 3,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Numerical => "numerical",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    /// Offending configuration key, when there is one.
    pub key: Option<String>,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Config,
            key: Some(key.into()),
            message: message.into(),
        }
    }

    pub fn plain(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            key: None,
            message: message.into(),
        }
    }

    /// Attaches `key` to a core error raised while interpreting that key.
    pub fn at(key: impl Into<String>) -> impl FnOnce(CoreError) -> CliError {
        let key = key.into();
        move |e| CliError {
            key: Some(key),
            ..CliError::from(e)
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = if e.is_numerical() {
            ErrorKind::Numerical
        } else {
            ErrorKind::Config
        };
        CliError::plain(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::plain(ErrorKind::Config, e.to_string())
    }
}

/// Single line: `error kind=<kind> [key=<key>] message="<text>"`.
impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error kind={}", self.kind.as_str())?;
        if let Some(key) = &self.key {
            write!(f, " key={key}")?;
        }
        let msg: String = self
            .message
            .chars()
            .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
            .collect();
        write!(f, " message={:?}", msg.trim())
    }
}

impl std::error::Error for CliError {}
