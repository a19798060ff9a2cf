use serde_json::json;
use thiserror::Error;

/// Exit statuses of the `nwcell` binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const PHYSICAL: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{key}`{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config {
        key: String,
        line: Option<usize>,
        message: String,
    },

    #[error("bad argument `{flag}`: {message}")]
    Argument { flag: String, message: String },

    #[error(transparent)]
    Model(#[from] nwcell::Error),

    /// A protocol run ended in contact; outputs were still written.
    #[error("contact during protocol run (cell {cell}, step {step})")]
    Contact { cell: usize, step: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Argument { .. } => exit::CONFIG,
            CliError::Model(nwcell::Error::InvalidParameter { .. })
            | CliError::Model(nwcell::Error::TooManyModes { .. })
            | CliError::Model(nwcell::Error::UnknownElectrode(_)) => exit::CONFIG,
            CliError::Model(nwcell::Error::Contact { .. }) | CliError::Contact { .. } => exit::PHYSICAL,
            CliError::Model(_) | CliError::Io { .. } => exit::NUMERICAL,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Argument { .. } => "argument",
            CliError::Model(nwcell::Error::Contact { .. }) | CliError::Contact { .. } => "contact",
            CliError::Model(_) => "numerical",
            CliError::Io { .. } => "io",
        }
    }

    /// Machine-readable form for stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Config { key, line, .. } = self {
            v["key"] = json!(key);
            v["line"] = json!(line);
        }
        if let CliError::Contact { cell, step } = self {
            v["cell"] = json!(cell);
            v["step"] = json!(step);
        }
        v
    }
}
