use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{stage} failed: {source}")]
    Numerical {
        stage: &'static str,
        source: quadrep::Error,
    },
    #[error("{0}")]
    Io(String),
    #[error("replay mismatch: {0}")]
    Mismatch(String),
}

impl CliError {
    /// 0 success, 2 usage, 3 numerical failure; I/O problems exit with 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical { .. } | CliError::Mismatch(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Attach a stage name to a library error. Bad arguments stay usage errors.
pub fn stage(name: &'static str) -> impl Fn(quadrep::Error) -> CliError {
    move |e| match e {
        quadrep::Error::InvalidArgument(msg) => CliError::Usage(format!("{name}: {msg}")),
        quadrep::Error::Io(msg) => CliError::Io(format!("{name}: {msg}")),
        source => CliError::Numerical { stage: name, source },
    }
}
