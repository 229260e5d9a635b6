use std::io;
use std::path::PathBuf;

use regida_core::eventtime::EventTimeError;
use regida_core::ingest::IngestError;
use regida_core::synth::SynthError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    /// The schema config could not be read, parsed or validated.
    #[error("{0}")]
    Config(IngestError),
    /// The bundle described by a valid config could not be loaded.
    #[error("{0}")]
    Load(IngestError),
    #[error("{0}")]
    Synth(#[from] SynthError),
    #[error("{context}: {source}")]
    EventTime {
        context: String,
        source: EventTimeError,
    },
    #[error("{0}")]
    Usage(String),
    #[error("cannot write `{}`: {source}", path.display())]
    Output { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Load(e) if e.is_config_error() => EXIT_CONFIG,
            CliError::Load(_) => EXIT_DATA,
            CliError::Synth(SynthError::InvalidConfig { .. } | SynthError::Parse(_)) => EXIT_CONFIG,
            CliError::Synth(_) => EXIT_INTERNAL,
            CliError::EventTime { source, .. } => match source {
                EventTimeError::EmptyCohort | EventTimeError::InvalidTime { .. } => EXIT_DATA,
                _ => EXIT_CONFIG,
            },
            CliError::Output { .. } => EXIT_INTERNAL,
        }
    }

    /// Variant name of the underlying error, printed ahead of the message.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(e) | CliError::Load(e) => ingest_kind(e),
            CliError::Synth(e) => match e {
                SynthError::InvalidConfig { .. } => "InvalidConfig",
                SynthError::Parse(_) => "ConfigParse",
                SynthError::Io { .. } => "Io",
                SynthError::Csv { .. } => "Csv",
            },
            CliError::EventTime { source, .. } => match source {
                EventTimeError::EmptyCohort => "EmptyCohort",
                EventTimeError::InvalidTime { .. } => "InvalidTime",
                EventTimeError::NotConfigured => "NotConfigured",
                EventTimeError::UnknownTable(_) => "UnknownTable",
                EventTimeError::UnknownColumn { .. } => "UnknownColumn",
                EventTimeError::NotADateColumn { .. } => "NotADateColumn",
            },
            CliError::Usage(_) => "Usage",
            CliError::Output { .. } => "Output",
        }
    }
}

fn ingest_kind(e: &IngestError) -> &'static str {
    match e {
        IngestError::Io { .. } => "Io",
        IngestError::ConfigParse { .. } => "ConfigParse",
        IngestError::InvalidConfig { .. } => "InvalidConfig",
        IngestError::FileMissing { .. } => "FileMissing",
        IngestError::HeaderMismatch { .. } => "HeaderMismatch",
        IngestError::CellParse { .. } => "CellParse",
        IngestError::DuplicateColumn { .. } => "DuplicateColumn",
        IngestError::DuplicateTable(_) => "DuplicateTable",
        IngestError::Csv { .. } => "Csv",
        IngestError::ConflictingGroup { .. } => "ConflictingGroup",
        IngestError::UnknownFilterColumn { .. } => "UnknownFilterColumn",
        IngestError::Model(_) => "Model",
    }
}
