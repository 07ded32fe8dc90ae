use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::RunError;

pub const MANIFEST_SCHEMA: &str = "hcband.manifest/1";
pub const MANIFEST_NAME: &str = "manifest.json";

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileRecord {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Versions {
    pub hcband: &'static str,
    pub hcband_core: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub schema: &'static str,
    pub config: RunConfig,
    pub versions: Versions,
    /// Content hashes of the config and of any files it references.
    pub inputs: Vec<FileRecord>,
    pub wall_clock_seconds: f64,
    pub files: Vec<FileRecord>,
}

/// Output directory. Each file is written as `<name>.partial` and renamed
/// into place, so an interrupted run leaves only `.partial` leftovers.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<FileRecord>,
    inputs: Vec<FileRecord>,
    started: Instant,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| RunError::io(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| RunError::io(format!("{}: {e}", path.display())))
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|e| RunError::io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new(), inputs: Vec::new(), started: Instant::now() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn add_input(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.push(FileRecord { name: name.to_string(), bytes: bytes.len(), sha256: sha256(bytes) });
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), RunError> {
        write_atomic(&self.dir.join(name), contents.as_bytes())?;
        self.files.push(FileRecord { name: name.to_string(), bytes: contents.len(), sha256: sha256(contents.as_bytes()) });
        Ok(())
    }

    /// Writes the manifest last and returns it.
    pub fn finish(self, config: &RunConfig) -> Result<RunManifest, RunError> {
        let manifest = RunManifest {
            schema: MANIFEST_SCHEMA,
            config: config.clone(),
            versions: Versions { hcband: env!("CARGO_PKG_VERSION"), hcband_core: hcband_core::VERSION },
            inputs: self.inputs,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            files: self.files,
        };
        write_atomic(&self.dir.join(MANIFEST_NAME), crate::formats::json(&manifest).as_bytes())?;
        Ok(manifest)
    }
}
