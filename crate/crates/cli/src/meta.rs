//! `*.meta.json` sidecars naming the config and corpus behind an artifact.

use std::path::{Path, PathBuf};

use anyhow::Context;
use refocus_core::corpus::DatasetManifest;
use refocus_core::fsutil;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub stage: String,
    pub config_hash: String,
    pub corpus_hash: Option<String>,
    pub records: usize,
    pub tool_version: String,
    pub created_at: String,
}

pub fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

pub fn write(path: &Path, meta: &Meta) -> anyhow::Result<()> {
    let side = sidecar(path);
    fsutil::write_json_atomic(&side, meta).with_context(|| format!("writing {}", side.display()))
}

pub fn read(path: &Path) -> anyhow::Result<Meta> {
    let side = sidecar(path);
    fsutil::read_json(&side).with_context(|| format!("reading {}", side.display()))
}

/// Identity of a split: SHA-256 over the id hash name and both id lists,
/// independent of when the split was written.
pub fn corpus_hash(manifest: &DatasetManifest) -> String {
    let mut h = Sha256::new();
    h.update(manifest.hash.as_bytes());
    for (tag, ids) in [("train", &manifest.train), ("test", &manifest.test)] {
        h.update(tag.as_bytes());
        for id in ids {
            h.update(b"\n");
            h.update(id.as_str().as_bytes());
        }
    }
    hex::encode(h.finalize())[..16].to_string()
}
