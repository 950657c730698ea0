use metagente_core::dataset::DatasetError;
use metagente_core::eval::EvalError;
use metagente_llm::LlmError;
use metagente_pipeline::{AgentError, OrchestratorError, PromptError};
use thiserror::Error;

/// Every failure the CLI reports, grouped by what the operator has to fix.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("synthesis error: {0}")]
    Synthesis(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// Process exit status for this category. 2 is left to argument parsing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 3,
            CliError::Data(_) => 4,
            CliError::Transport(_) => 5,
            CliError::Synthesis(_) => 6,
        }
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::AuthFailure(_) => CliError::Config(e.to_string()),
            DatasetError::Github(_) => CliError::Transport(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Config(_) | LlmError::Cassette { .. } => CliError::Config(e.to_string()),
            _ => CliError::Transport(e.to_string()),
        }
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Llm(inner) => inner.into(),
            AgentError::Prompt(inner) => inner.into(),
            AgentError::Precondition(_) => CliError::Data(e.to_string()),
            AgentError::EmptyInput { .. } => CliError::Synthesis(e.to_string()),
            _ => CliError::Transport(e.to_string()),
        }
    }
}

impl From<OrchestratorError> for CliError {
    fn from(e: OrchestratorError) -> Self {
        match e {
            OrchestratorError::Config(_) => CliError::Config(e.to_string()),
            OrchestratorError::InvalidBatch(_) => CliError::Data(e.to_string()),
            OrchestratorError::Agent(inner) => inner.into(),
            OrchestratorError::Io { .. } => CliError::Io(e.to_string()),
        }
    }
}
