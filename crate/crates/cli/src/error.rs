//! The error type shared by every subcommand. Each variant maps to one
//! documented exit code, and stage-level variants name the pipeline stage
//! that failed so scripted callers can attribute the abort.

use std::fmt;

/// A command failure, classified by exit code:
///
/// * configuration problems (exit 2) are found before any stage runs;
/// * input errors (exit 3) mean a referenced file exists but does not
///   parse or validate;
/// * analysis errors (exit 4) mean a stage failed on well-formed inputs.
#[derive(Clone, Debug)]
pub enum CliError {
    Config(String),
    Input { stage: &'static str, message: String },
    Analysis { stage: &'static str, message: String },
}

impl CliError {
    pub fn config(message: impl Into<String>) -> CliError {
        CliError::Config(message.into())
    }

    pub fn input(stage: &'static str, message: impl fmt::Display) -> CliError {
        CliError::Input { stage, message: message.to_string() }
    }

    pub fn analysis(stage: &'static str, message: impl fmt::Display) -> CliError {
        CliError::Analysis { stage, message: message.to_string() }
    }

    /// The process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input { .. } => 3,
            CliError::Analysis { .. } => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(message) => write!(f, "configuration: {message}"),
            CliError::Input { stage, message } => write!(f, "stage {stage}: input: {message}"),
            CliError::Analysis { stage, message } => write!(f, "stage {stage}: {message}"),
        }
    }
}

impl std::error::Error for CliError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_documented_contract() {
        assert_eq!(CliError::config("x").exit_code(), 2);
        assert_eq!(CliError::input("ingest", "x").exit_code(), 3);
        assert_eq!(CliError::analysis("taint", "x").exit_code(), 4);
    }

    #[test]
    fn messages_name_the_failed_stage() {
        let err = CliError::analysis("match", "app a: bad");
        assert_eq!(err.to_string(), "stage match: app a: bad");
        let err = CliError::input("ingest", "corpus/x.ir: line 3");
        assert!(err.to_string().starts_with("stage ingest: input:"));
    }
}
