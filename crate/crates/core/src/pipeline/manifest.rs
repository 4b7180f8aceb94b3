//! Run manifest and per-stage artifact cache.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub cache_key: String,
    /// True when the stage was skipped because its outputs were current.
    pub cached: bool,
    /// Input path -> sha256 of its contents.
    pub inputs: BTreeMap<String, String>,
    /// Output path relative to the output directory -> sha256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    /// Wall-clock time of the run; the only field that differs between reruns.
    pub created_at: String,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn read(dir: &Path) -> Option<Manifest> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
        serde_json::from_str(&text).ok()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Collects the files one stage writes.
pub struct StageOutput<'a> {
    root: &'a Path,
    written: BTreeMap<String, String>,
}

impl StageOutput<'_> {
    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.written.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }
}

pub(crate) struct Runner {
    root: PathBuf,
    previous: Option<Manifest>,
    pub manifest: Manifest,
    force: bool,
}

impl Runner {
    pub fn new(root: PathBuf, manifest: Manifest, force: bool) -> Result<Self> {
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let previous = Manifest::read(&root);
        Ok(Runner {
            root,
            previous,
            manifest,
            force,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn rel(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Outputs of an earlier stage in this run, as absolute paths.
    pub fn outputs_of(&self, stage: &str) -> Vec<PathBuf> {
        self.manifest
            .stage(stage)
            .map(|s| s.outputs.keys().map(|k| self.root.join(k)).collect())
            .unwrap_or_default()
    }

    fn input_key(&self, path: &Path) -> String {
        match path.strip_prefix(&self.root) {
            Ok(rel) => rel.to_string_lossy().replace('\\', "/"),
            Err(_) => path.display().to_string(),
        }
    }

    /// Runs `body` unless a previous run recorded the same cache key and its
    /// outputs are still intact on disk.
    pub fn stage<P, F>(&mut self, name: &'static str, params: &P, inputs: &[PathBuf], body: F) -> Result<()>
    where
        P: Serialize,
        F: FnOnce(&mut StageOutput<'_>) -> Result<()>,
    {
        let wrap = |e: Error| Error::Stage {
            stage: name,
            source: Box::new(e),
        };
        let mut input_hashes = BTreeMap::new();
        for p in inputs {
            input_hashes.insert(self.input_key(p), hash_file(p).map_err(wrap)?);
        }
        let mut hasher = Sha256::new();
        hasher.update(name.as_bytes());
        hasher.update(b"\0");
        hasher.update(self.manifest.tool_version.as_bytes());
        hasher.update(b"\0");
        hasher.update(serde_json::to_vec(params).map_err(|e| wrap(e.into()))?);
        for (k, h) in &input_hashes {
            hasher.update(b"\0");
            hasher.update(k.as_bytes());
            hasher.update(b"=");
            hasher.update(h.as_bytes());
        }
        let cache_key = hex::encode(hasher.finalize());

        let prior = self.previous.as_ref().and_then(|m| m.stage(name)).cloned();
        if !self.force {
            if let Some(prev) = &prior {
                if prev.cache_key == cache_key && self.intact(&prev.outputs) {
                    log::info!("stage {name}: up to date");
                    self.record(StageRecord {
                        name: name.into(),
                        cache_key,
                        cached: true,
                        inputs: input_hashes,
                        outputs: prev.outputs.clone(),
                    })
                    .map_err(wrap)?;
                    return Ok(());
                }
            }
        }
        // stale outputs from an earlier run must not linger
        if let Some(prev) = &prior {
            for rel in prev.outputs.keys() {
                let _ = fs::remove_file(self.root.join(rel));
            }
        }
        log::info!("stage {name}: running");
        let mut out = StageOutput {
            root: &self.root,
            written: BTreeMap::new(),
        };
        body(&mut out).map_err(wrap)?;
        let outputs = out.written;
        self.record(StageRecord {
            name: name.into(),
            cache_key,
            cached: false,
            inputs: input_hashes,
            outputs,
        })
        .map_err(wrap)
    }

    fn intact(&self, outputs: &BTreeMap<String, String>) -> bool {
        outputs
            .iter()
            .all(|(rel, h)| hash_file(&self.root.join(rel)).is_ok_and(|x| &x == h))
    }

    fn record(&mut self, rec: StageRecord) -> Result<()> {
        self.manifest.stages.retain(|s| s.name != rec.name);
        self.manifest.stages.push(rec);
        self.save()
    }

    pub fn save(&self) -> Result<()> {
        let path = self.root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}
