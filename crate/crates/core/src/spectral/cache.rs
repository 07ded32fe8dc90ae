//! Content-addressed eigenpair cache.
//!
//! Each entry is a JSON record `<key>.json` (values, moments, residuals) and
//! a raw little-endian `f64` dump `<key>.bin` of the eigenvectors. The
//! directory manifest `manifest.json` lists every key with its mesh size and
//! tolerance; it is rewritten after each insertion.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::eigs::EigOptions;
use super::inclusion::{EigenDecomposition, InclusionProblem};
use crate::error::{Error, Result};

pub const CACHE_SCHEMA: &str = "hcband.eigcache/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub shape_id: String,
    pub h: f64,
    pub count: usize,
    pub tol: f64,
    pub ndof: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheManifest {
    pub schema: String,
    pub entries: BTreeMap<String, ManifestEntry>,
}

impl Default for CacheManifest {
    fn default() -> Self {
        Self { schema: CACHE_SCHEMA.into(), entries: BTreeMap::new() }
    }
}

impl CacheManifest {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let m: CacheManifest = serde_json::from_str(s).map_err(|e| Error::parse("cache manifest", e))?;
        if m.schema != CACHE_SCHEMA {
            return Err(Error::parse("cache manifest", format!("unknown schema {:?}", m.schema)));
        }
        for (k, e) in &m.entries {
            let hex_ok = k.len() == 64 && k.bytes().all(|b| b.is_ascii_hexdigit());
            if !hex_ok || !(e.h > 0.0) || !(e.tol > 0.0) {
                return Err(Error::parse("cache manifest", format!("invalid entry {k:?}")));
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    schema: String,
    ndof: usize,
    #[serde(flatten)]
    eig: EigenDecomposition,
}

/// In-memory store with optional on-disk persistence. Safe to share between
/// threads; concurrent misses on the same key may both compute, and the
/// results are identical.
#[derive(Debug, Default)]
pub struct EigenCache {
    dir: Option<PathBuf>,
    mem: Mutex<HashMap<String, Arc<EigenDecomposition>>>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

impl EigenCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn persistent(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir: Some(dir), mem: Mutex::new(HashMap::new()) })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn manifest(&self) -> Result<CacheManifest> {
        match &self.dir {
            None => Ok(CacheManifest::default()),
            Some(d) => {
                let p = d.join("manifest.json");
                if !p.exists() {
                    return Ok(CacheManifest::default());
                }
                CacheManifest::from_json_str(&fs::read_to_string(p)?)
            }
        }
    }

    fn load(&self, key: &str, ndof: usize) -> Option<EigenDecomposition> {
        let d = self.dir.as_ref()?;
        let text = fs::read_to_string(d.join(format!("{key}.json"))).ok()?;
        let rec: Record = serde_json::from_str(&text).ok()?;
        if rec.schema != CACHE_SCHEMA || rec.ndof != ndof || rec.eig.shape_key != key {
            return None;
        }
        let bytes = fs::read(d.join(format!("{key}.bin"))).ok()?;
        let count = rec.eig.values.len();
        if bytes.len() != count * ndof * 8 {
            return None;
        }
        let mut eig = rec.eig;
        eig.vectors = bytes
            .chunks_exact(ndof * 8)
            .map(|c| c.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect())
            .collect();
        Some(eig)
    }

    fn store(&self, key: &str, problem: &InclusionProblem, eig: &EigenDecomposition, opts: &EigOptions) -> Result<()> {
        let Some(d) = &self.dir else { return Ok(()) };
        let ndof = problem.forms.ndof();
        let rec = Record { schema: CACHE_SCHEMA.into(), ndof, eig: eig.clone() };
        let mut bin = Vec::with_capacity(eig.vectors.len() * ndof * 8);
        for v in &eig.vectors {
            for x in v {
                bin.extend_from_slice(&x.to_le_bytes());
            }
        }
        write_atomic(&d.join(format!("{key}.bin")), &bin)?;
        write_atomic(&d.join(format!("{key}.json")), serde_json::to_string(&rec)?.as_bytes())?;
        let mut manifest = self.manifest().unwrap_or_default();
        manifest.entries.insert(
            key.to_string(),
            ManifestEntry { shape_id: problem.shape.id.clone(), h: problem.h, count: eig.values.len(), tol: opts.tol, ndof },
        );
        write_atomic(&d.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())
    }

    pub fn get_or_compute(&self, problem: &InclusionProblem, count: usize, opts: &EigOptions) -> Result<EigenDecomposition> {
        let count = count.min(problem.forms.ndof());
        let key = problem.key(count);
        if let Some(e) = self.mem.lock().map_err(|_| Error::Cache("poisoned lock".into()))?.get(&key) {
            return Ok((**e).clone());
        }
        let eig = match self.load(&key, problem.forms.ndof()) {
            Some(e) => e,
            None => {
                let e = problem.eigen(count, opts)?;
                self.store(&key, problem, &e, opts)?;
                e
            }
        };
        self.mem.lock().map_err(|_| Error::Cache("poisoned lock".into()))?.insert(key, Arc::new(eig.clone()));
        Ok(eig)
    }
}
