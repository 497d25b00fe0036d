//! Error types shared across the crate.
//!
//! Every fallible public operation returns [`Error`]; the CLI maps each
//! variant to a distinct process exit code (see `main.rs`).

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration. Carries *all* violations found, not just the first.
    #[error("invalid configuration:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<String>),

    /// A numerical operation produced or received non-finite data.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The solution norm exceeded the blow-up threshold (or became non-finite).
    /// `history` holds the most recent `(t, l2_norm)` samples before the event.
    #[error("blow-up detected at t = {t}: ||w||_L2 = {norm:.6e}")]
    BlowUp {
        t: f64,
        norm: f64,
        history: Vec<(f64, f64)>,
    },

    /// A statistical acceptance check failed (selftest tier).
    #[error("statistical check failed: {0}")]
    Statistical(String),

    /// Checkpoint/restart refused or malformed.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    /// Convenience constructor for a single-message config error.
    pub fn config<S: Into<String>>(msg: S) -> Self {
        Error::Config(vec![msg.into()])
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(vec![e.to_string()])
    }
}
