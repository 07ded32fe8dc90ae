//! Batch driver: reads a run configuration, executes one pipeline and writes
//! its outputs plus a manifest into the output directory.

pub mod config;
pub mod formats;
pub mod output;
pub mod run;

use serde::Serialize;

pub use config::{Command, MaterialSpec, RunConfig};
pub use output::{FileRecord, OutputDir, RunManifest};
pub use run::{run, run_in};

pub const ERROR_SCHEMA: &str = "hcband.error/1";

/// Environment variable overriding the eigenpair cache directory.
pub const CACHE_ENV: &str = "HCBAND_CACHE_DIR";
pub const DEFAULT_CACHE_DIR: &str = ".hcband-cache";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    /// Bad configuration or input; nothing was computed or written.
    Usage,
    /// A numerical stage failed.
    Numerical,
    Io,
}

/// The machine-readable error record printed on failure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunError {
    pub schema: &'static str,
    pub kind: ErrorKind,
    /// Pipeline stage that failed, if known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub module: Option<String>,
    pub message: String,
}

impl RunError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self { schema: ERROR_SCHEMA, kind: ErrorKind::Usage, module: None, message: msg.into() }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Self { schema: ERROR_SCHEMA, kind: ErrorKind::Io, module: None, message: msg.into() }
    }

    /// Attaches the failing stage, unless one is already set.
    pub fn context(mut self, module: &str) -> Self {
        if self.module.is_none() {
            self.module = Some(module.to_string());
        }
        self
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Usage => 2,
            ErrorKind::Numerical | ErrorKind::Io => 1,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.module {
            Some(m) => write!(f, "{m}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for RunError {}

impl From<hcband_core::Error> for RunError {
    fn from(e: hcband_core::Error) -> Self {
        use hcband_core::Error as E;
        let kind = match e {
            E::Parse { .. }
            | E::Model(_)
            | E::Parameter(_)
            | E::Moduli(_)
            | E::Geometry(_)
            | E::CellFit { .. }
            | E::Dimension(_)
            | E::DimensionMismatch { .. }
            | E::NotElliptic(_)
            | E::Symmetry { .. }
            | E::Budget { .. } => ErrorKind::Usage,
            E::Io(_) => ErrorKind::Io,
            _ => ErrorKind::Numerical,
        };
        Self { schema: ERROR_SCHEMA, kind, module: None, message: e.to_string() }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}
