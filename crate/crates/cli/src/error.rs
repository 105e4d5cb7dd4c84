use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("unknown preset `{name}`; available presets: {}", available.join(", "))]
    UnknownPreset { name: String, available: Vec<String> },
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { path: path.into(), message: message.into() }
    }

    /// 2 for usage and configuration problems, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) | CliError::UnknownPreset { .. } => 2,
            CliError::Io { .. } => 3,
        }
    }
}
