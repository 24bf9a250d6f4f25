//! Run manifests: what a command was asked to do and the digests of what
//! it read, written next to its outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use flowcast_core::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest<C: Serialize> {
    pub command: &'static str,
    pub version: &'static str,
    pub config: C,
    /// Input path → SHA-256 hex digest. Directories contribute one entry per file.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let io = |e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    };
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(io)?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            files_under(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Digests of every file at or below each path.
pub fn digests(paths: &[&Path]) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for &p in paths {
        let mut files = Vec::new();
        if p.is_dir() {
            files_under(p, &mut files)?;
        } else {
            files.push(p.to_path_buf());
        }
        for f in files {
            map.insert(f.display().to_string(), hash_file(&f)?);
        }
    }
    Ok(map)
}

pub fn write<C: Serialize>(path: &Path, manifest: &RunManifest<C>) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Numeric(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
