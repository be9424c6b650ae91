//! Command failures and their exit codes.

use std::path::Path;

use pktseer_core::featsel::FeatselError;
use pktseer_core::ingest::IngestError;
use pktseer_core::models::ModelError;
use pktseer_core::synth::SynthError;
use pktseer_core::tokenizer::{TextError, TokenizerError};
use pktseer_core::trainer::TrainError;
use pktseer_nn::NnError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad config values, unreadable or mismatched inputs.
    #[error("{0}")]
    Usage(String),
    /// Input content that cannot be used.
    #[error("{0}")]
    Data(String),
    /// A non-finite training loss.
    #[error("{0}")]
    Diverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Diverged(_) => EXIT_DIVERGED,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Diverged(_) => "divergence",
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    /// Prefixes the message with the file it concerns.
    pub fn context(self, path: &Path) -> Self {
        let at = |m: String| format!("{}: {m}", path.display());
        match self {
            CliError::Usage(m) => CliError::Usage(at(m)),
            CliError::Data(m) => CliError::Data(at(m)),
            CliError::Diverged(m) => CliError::Diverged(at(m)),
        }
    }

    /// An input file that cannot be opened or read.
    pub fn read(path: &Path, e: std::io::Error) -> Self {
        CliError::Usage(format!("cannot read {}: {e}", path.display()))
    }

    /// An output that cannot be written.
    pub fn write(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("cannot write {}: {e}", path.display()))
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::MissingColumn(_) | IngestError::Header(_) | IngestError::InvalidArgument(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<FeatselError> for CliError {
    fn from(e: FeatselError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<TokenizerError> for CliError {
    fn from(e: TokenizerError) -> Self {
        match e {
            TokenizerError::VocabTooSmall { .. }
            | TokenizerError::MaxLenTooSmall { .. }
            | TokenizerError::InvalidArgument(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TextError> for CliError {
    fn from(e: TextError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Nn(e) => e.into(),
            ModelError::Tokenizer(e) => e.into(),
            ModelError::WrongKind { .. }
            | ModelError::VocabMismatch { .. }
            | ModelError::FeatureMismatch(_)
            | ModelError::VocabSize { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CliError::Diverged(e.to_string()),
            TrainError::Config(_) => CliError::Usage(e.to_string()),
            TrainError::Model(e) => e.into(),
            TrainError::Nn(e) => e.into(),
            TrainError::Tokenizer(e) => e.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_failure_class() {
        let diverged = TrainError::Diverged {
            step: 3,
            batch: vec![0, 1],
            loss: f64::NAN,
        };
        assert_eq!(CliError::from(diverged).exit_code(), EXIT_DIVERGED);
        assert_eq!(CliError::from(TrainError::Config("x".into())).exit_code(), EXIT_USAGE);
        assert_eq!(CliError::from(TrainError::EmptyData).exit_code(), EXIT_DATA);
        assert_eq!(CliError::from(IngestError::MissingColumn("dstIP".into())).exit_code(), EXIT_USAGE);
        let nested = TrainError::Model(ModelError::FeatureMismatch("a".into()));
        assert_eq!(CliError::from(nested).exit_code(), EXIT_USAGE);
        assert_eq!(CliError::Diverged("x".into()).kind(), "divergence");
    }
}
