use std::fmt;

/// Error classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unknown keys, invalid values. Exit 2.
    Config(String),
    /// Missing or malformed input files, incompatible models, existing outputs. Exit 3.
    Data(String),
    /// Anything that indicates a bug or a broken invariant. Exit 4.
    Internal(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Internal(_) => "internal",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }

    /// The single line printed to stderr.
    pub fn line(&self) -> String {
        let flat: String = self.message().split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error kind={} exit={} message={:?}", self.kind(), self.exit_code(), flat)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl std::error::Error for CliError {}

impl From<explore_core::Error> for CliError {
    fn from(e: explore_core::Error) -> Self {
        use explore_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Config(_) => CliError::Config(msg),
            E::Parse { .. } | E::Incompatible(_) | E::TooLarge(_) | E::Generation(_) | E::Io(_) => {
                CliError::Data(msg)
            }
            E::Sensing(_) | E::Contract(_) | E::Training(_) | E::Oracle(_) => CliError::Internal(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
