//! CLI failure taxonomy.
//!
//! Every failure is classified into one of four categories so that callers
//! and scripts can tell them apart by exit code alone:
//!
//! | category | exit code | typical causes                                    |
//! |----------|-----------|---------------------------------------------------|
//! | i/o      | 1         | unreadable or unwritable files and directories    |
//! | config   | 2         | bad config file, bad flags, mismatched run inputs |
//! | backend  | 3         | auth, transport, rate limits, unusable completions|
//! | analysis | 4         | degenerate data, missing analysis artifacts       |

use influence_core::backend::BackendError;
use influence_core::bank::BankError;
use influence_core::design::DesignError;
use influence_core::prompt::PromptError;
use influence_core::sampler::SamplerError;
use influence_core::stats::StatsError;

/// One classified CLI failure.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("i/o error: {detail}")]
    Io { detail: String },
    #[error("config error: {detail}")]
    Config { detail: String },
    #[error("backend error: {detail}")]
    Backend { detail: String },
    #[error("analysis error: {detail}")]
    Analysis { detail: String },
}

impl CliError {
    pub fn io(detail: impl Into<String>) -> CliError {
        CliError::Io { detail: detail.into() }
    }

    pub fn config(detail: impl Into<String>) -> CliError {
        CliError::Config { detail: detail.into() }
    }

    pub fn backend(detail: impl Into<String>) -> CliError {
        CliError::Backend { detail: detail.into() }
    }

    pub fn analysis(detail: impl Into<String>) -> CliError {
        CliError::Analysis { detail: detail.into() }
    }

    /// Process exit code for this failure category.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config { .. } => 2,
            CliError::Backend { .. } => 3,
            CliError::Analysis { .. } => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> CliError {
        CliError::io(err.to_string())
    }
}

impl From<BackendError> for CliError {
    fn from(err: BackendError) -> CliError {
        CliError::backend(err.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(err: StatsError) -> CliError {
        CliError::analysis(err.to_string())
    }
}

// Broken input files (banks, templates, articles, country tables) are config
// problems: the run never starts.
impl From<BankError> for CliError {
    fn from(err: BankError) -> CliError {
        CliError::config(err.to_string())
    }
}

impl From<PromptError> for CliError {
    fn from(err: PromptError) -> CliError {
        CliError::config(err.to_string())
    }
}

impl From<DesignError> for CliError {
    fn from(err: DesignError) -> CliError {
        CliError::config(err.to_string())
    }
}

impl From<SamplerError> for CliError {
    fn from(err: SamplerError) -> CliError {
        CliError::config(err.to_string())
    }
}
