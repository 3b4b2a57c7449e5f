//! Pipeline commands behind the `taskdisc` binary.
//!
//! Every command reads a [`RunConfig`] and works inside its output
//! directory; see [`workspace::Workspace`] for the layout.

use std::path::PathBuf;

use taskdisc::corpus::CorpusError;
use taskdisc::eval::EvalError;
use taskdisc::lexical_graph::GraphError;
use taskdisc::model::ModelError;
use taskdisc::task_discovery::TaskError;

pub mod commands;
pub mod config;
pub mod events;
pub mod repro;
pub mod workspace;

pub use config::RunConfig;
pub use repro::{cmd_repro, ReproReport};
pub use workspace::Workspace;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("missing input {}: {reason}", path.display())]
    MissingInput { path: PathBuf, reason: String },
    #[error("{artifact} was produced from data hash {found}, expected {expected}; pass --force to use it anyway")]
    HashMismatch {
        artifact: String,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// The module an error originated in, for the machine-readable report.
    pub fn module(&self) -> &'static str {
        match self {
            CliError::ConfigInvalid(_) | CliError::MissingInput { .. } | CliError::HashMismatch { .. } => "cli",
            CliError::Graph(_) => "lexical_graph",
            CliError::Corpus(_) => "corpus",
            CliError::Task(_) => "task_discovery",
            CliError::Model(_) => "model",
            CliError::Eval(_) => "eval",
            CliError::Io(_) => "io",
            CliError::Json(_) => "json",
        }
    }

    /// Variant name, e.g. `MissingInput`.
    pub fn kind(&self) -> String {
        let dbg = format!("{self:?}");
        let head: String = dbg.chars().take_while(|c| c.is_alphanumeric()).collect();
        match self {
            CliError::ConfigInvalid(_) | CliError::MissingInput { .. } | CliError::HashMismatch { .. } => head,
            _ => {
                // Report the inner variant, which is the informative one.
                let inner = dbg[head.len()..].trim_start_matches('(');
                inner.chars().take_while(|c| c.is_alphanumeric()).collect()
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "error": self.kind(),
            "module": self.module(),
            "message": self.to_string(),
        })
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/pipeline.md")]
mod pipeline_guide {}
