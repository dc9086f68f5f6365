//! File formats, configuration, and pipeline drivers around `vitals-core`:
//! raw video containers, checkpoints, CSV logs, dataset manifests,
//! evaluation reports, and attention-mask export.

pub mod checkpoint;
pub mod config;
pub mod csvio;
pub mod manifest;
pub mod masks;
pub mod report;
pub mod rvid;
pub mod trainloop;

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

/// Toolkit-level error. `Usage` maps to exit code 2 (caller mistakes:
/// invalid config, missing files, bad arguments); everything else to exit
/// code 1 (runtime failures).
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration.
    Usage { detail: String },
    /// Filesystem failure on a specific path.
    Io { path: PathBuf, source: io::Error },
    /// Structured file is malformed; offset is the byte where parsing failed.
    Format { path: PathBuf, offset: u64, detail: String },
    /// Checkpoint/config disagreement (names the offending tensor).
    Mismatch { detail: String },
    /// Computation failed (propagated from the core crate).
    Runtime { detail: String },
}

impl CliError {
    pub fn usage(detail: impl Into<String>) -> Self {
        CliError::Usage { detail: detail.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, offset: u64, detail: impl Into<String>) -> Self {
        CliError::Format { path: path.into(), offset, detail: detail.into() }
    }

    pub fn runtime(detail: impl fmt::Display) -> Self {
        CliError::Runtime { detail: detail.to_string() }
    }

    /// Stable machine-readable category, the first token of the rendered
    /// error line.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage { .. } => "usage",
            CliError::Io { .. } => "io",
            CliError::Format { .. } => "format",
            CliError::Mismatch { .. } => "mismatch",
            CliError::Runtime { .. } => "runtime",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage { detail } => write!(f, "error[usage]: {}", detail),
            CliError::Io { path, source } => {
                write!(f, "error[io]: {}: {}", path.display(), source)
            }
            CliError::Format { path, offset, detail } => write!(
                f,
                "error[format]: {} at byte {}: {}",
                path.display(),
                offset,
                detail
            ),
            CliError::Mismatch { detail } => write!(f, "error[mismatch]: {}", detail),
            CliError::Runtime { detail } => write!(f, "error[runtime]: {}", detail),
        }
    }
}

impl std::error::Error for CliError {}

macro_rules! from_core_error {
    ($($ty:ty),+) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Runtime { detail: e.to_string() }
            }
        })+
    };
}

from_core_error!(
    vitals_core::frames::FrameError,
    vitals_core::loss::LossError,
    vitals_core::model::ModelError,
    vitals_core::sigproc::SigError,
    vitals_core::synth::SynthError,
    vitals_core::train::TrainError,
    vitals_core::autodiff::TapeError
);

/// Write `bytes` to `path`, creating parent directories as needed.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Read a whole file.
pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}
