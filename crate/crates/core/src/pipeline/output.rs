//! Artifact tree writes and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

/// A stage that failed for one event and token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Incomplete {
    pub stage: String,
    pub event: Option<String>,
    pub token: Option<String>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    /// Input label to content hash.
    pub inputs: BTreeMap<String, String>,
    pub files: Vec<FileEntry>,
    pub incomplete: Vec<Incomplete>,
    pub warnings: Vec<String>,
    pub complete: bool,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Writes under one root and records failures and warnings. Shared across
/// worker threads.
#[derive(Debug)]
pub struct Outputs {
    root: PathBuf,
    incomplete: Mutex<Vec<(Incomplete, Error)>>,
    warnings: Mutex<Vec<String>>,
}

impl Outputs {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Outputs { root, incomplete: Mutex::new(Vec::new()), warnings: Mutex::new(Vec::new()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    /// Buffers a writer-based serializer and stores its output.
    pub fn write_with(&self, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)
    }

    pub fn warn(&self, message: impl Into<String>) {
        self.warnings.lock().unwrap().push(message.into());
    }

    pub fn fail(&self, stage: &str, event: Option<&str>, token: Option<&str>, error: Error) {
        let entry = Incomplete {
            stage: stage.into(),
            event: event.map(str::to_string),
            token: token.map(str::to_string),
            error: error.to_string(),
        };
        self.incomplete.lock().unwrap().push((entry, error));
    }

    /// Runs `f`, recording its error against the stage instead of returning it.
    pub fn guard<T>(&self, stage: &str, event: Option<&str>, token: Option<&str>, f: impl FnOnce() -> Result<T>) -> Option<T> {
        match f() {
            Ok(v) => Some(v),
            Err(e) => {
                let mut ctx = String::new();
                if let Some(ev) = event {
                    ctx.push_str(ev);
                }
                if let Some(t) = token {
                    if !ctx.is_empty() {
                        ctx.push(' ');
                    }
                    ctx.push_str(t);
                }
                let e = if ctx.is_empty() { e } else { e.context(stage_module(stage), ctx) };
                self.fail(stage, event, token, e);
                None
            }
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = self.warnings.lock().unwrap().clone();
        w.sort();
        w.dedup();
        w
    }

    /// Recorded failures in a stable order, dropping the errors.
    pub fn incomplete(&self) -> Vec<Incomplete> {
        let mut v: Vec<Incomplete> = self.incomplete.lock().unwrap().iter().map(|(i, _)| i.clone()).collect();
        v.sort();
        v
    }

    /// The error of the first failure in [`Outputs::incomplete`] order.
    pub fn take_first_error(&self) -> Option<Error> {
        let mut all = std::mem::take(&mut *self.incomplete.lock().unwrap());
        all.sort_by(|a, b| a.0.cmp(&b.0));
        all.into_iter().next().map(|(_, e)| e)
    }

    /// Lists every file under the root except the manifest itself, in path
    /// order, and writes the manifest last.
    pub fn finish(&self, config_hash: &str, seed: u64, inputs: BTreeMap<String, String>) -> Result<Manifest> {
        let mut paths = Vec::new();
        walk(&self.root, &mut paths)?;
        paths.sort();
        let mut files = Vec::new();
        for rel in paths {
            if rel == MANIFEST {
                continue;
            }
            let full = self.root.join(&rel);
            let bytes = fs::metadata(&full).map_err(|e| Error::io(&full, e))?.len();
            files.push(FileEntry { sha256: sha256_file(&full)?, path: rel, bytes });
        }
        let incomplete = self.incomplete();
        let manifest = Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.to_string(),
            seed,
            inputs,
            files,
            complete: incomplete.is_empty(),
            incomplete,
            warnings: self.warnings(),
        };
        let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        json.push('\n');
        self.write(MANIFEST, json.as_bytes())?;
        Ok(manifest)
    }
}

fn stage_module(stage: &str) -> &'static str {
    match stage {
        "ingest" => "ingest",
        "series" => "series",
        "eventstudy" => "eventstudy",
        "regress" => "heterogeneity",
        "impact" => "impact",
        "diagnostics" => "diagnostics",
        "placebo" => "placebo",
        _ => "cli",
    }
}

/// Relative `/`-separated paths of all files below `root`.
fn walk(root: &Path, out: &mut Vec<String>) -> Result<()> {
    fn inner(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            let ft = entry.file_type().map_err(|e| Error::io(&path, e))?;
            if ft.is_dir() {
                inner(root, &path, out)?;
            } else {
                let rel = path.strip_prefix(root).expect("walk stays under root");
                let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
                out.push(parts.join("/"));
            }
        }
        Ok(())
    }
    inner(root, root, out)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}
