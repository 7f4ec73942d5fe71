//! Method/comment units, the JSONL corpus format, and dataset splits.

mod scanner;
pub mod synthetic;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::{rfc3339_serde, Clock};
use crate::fsutil;

pub use scanner::{extract_methods, ExtractError};

/// Name of the id hash, recorded in every dataset manifest.
pub const ID_HASH: &str = "sha256-128";

/// Collapses whitespace runs to a single space and trims the ends.
pub fn normalize_code(code: &str) -> String {
    code.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Content hash of normalized code text: the first 128 bits of SHA-256, hex encoded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitId(String);

impl UnitId {
    pub fn for_code(code: &str) -> Self {
        let digest = Sha256::digest(normalize_code(code).as_bytes());
        UnitId(hex::encode(&digest[..16]))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for UnitId {
    fn from(s: &str) -> Self {
        UnitId(s.to_string())
    }
}

impl From<String> for UnitId {
    fn from(s: String) -> Self {
        UnitId(s)
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Java,
}

/// Where a unit came from: `path` plus the byte span `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub path: String,
    pub start: usize,
    pub end: usize,
}

/// One extracted method with the Javadoc that preceded it, if any.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeUnit {
    pub id: UnitId,
    pub code: String,
    pub existing_comment: Option<String>,
    pub language: Language,
    pub origin: Origin,
    pub project: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("reading corpus")]
    Io(#[from] std::io::Error),
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("id mismatch at line {line}: stored {stored}, recomputed {computed}")]
    IdMismatch { line: usize, stored: UnitId, computed: UnitId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
}

/// Loads a corpus and re-derives every id from its code.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<CodeUnit>, CorpusError> {
    let CorpusFormat::Jsonl = format;
    let text = std::fs::read_to_string(path)?;
    let mut units = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let unit: CodeUnit = serde_json::from_str(line)
            .map_err(|e| CorpusError::MalformedRecord { line: line_no, reason: e.to_string() })?;
        if unit.code.trim().is_empty() {
            return Err(CorpusError::MalformedRecord { line: line_no, reason: "empty code".into() });
        }
        if unit.origin.end < unit.origin.start {
            return Err(CorpusError::MalformedRecord { line: line_no, reason: "origin end before start".into() });
        }
        let computed = UnitId::for_code(&unit.code);
        if computed != unit.id {
            return Err(CorpusError::IdMismatch { line: line_no, stored: unit.id, computed });
        }
        units.push(unit);
    }
    Ok(units)
}

pub fn save_corpus(path: &Path, units: &[CodeUnit]) -> std::io::Result<()> {
    fsutil::write_jsonl_atomic(path, units)
}

/// Keeps the first unit for each id, preserving order.
pub fn dedup_by_id(units: &[CodeUnit]) -> Vec<CodeUnit> {
    let mut seen = HashSet::new();
    units.iter().filter(|u| seen.insert(u.id.clone())).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionCounts {
    pub train: usize,
    pub test: usize,
}

/// Train/test partition of a corpus by unit id.
///
/// In a full run the `test` partition is the pool reserved for human
/// surveys; AI judging only ever sees `train`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    #[serde(with = "rfc3339_serde")]
    pub created_at: DateTime<Utc>,
    pub hash: String,
    pub counts: PartitionCounts,
    pub train: Vec<UnitId>,
    pub test: Vec<UnitId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SplitError {
    #[error("test count {requested} exceeds {available} unique units")]
    TestCountTooLarge { requested: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LeakageError {
    #[error("counts {counts:?} disagree with id lists ({train} train, {test} test)")]
    CountMismatch { counts: PartitionCounts, train: usize, test: usize },
    #[error("unit {0} is in both partitions")]
    SharedId(UnitId),
    #[error("units {train} (train) and {test} (test) have identical normalized code")]
    SharedCode { train: UnitId, test: UnitId },
    #[error("unit {0} listed more than once")]
    DuplicateId(UnitId),
}

impl DatasetManifest {
    pub fn test_ids(&self) -> HashSet<&UnitId> {
        self.test.iter().collect()
    }

    /// Checks counts and partition disjointness; with `units`, also checks that
    /// no normalized code text is shared across partitions.
    pub fn validate(&self, units: Option<&[CodeUnit]>) -> Result<(), LeakageError> {
        if self.counts.train != self.train.len() || self.counts.test != self.test.len() {
            return Err(LeakageError::CountMismatch {
                counts: self.counts,
                train: self.train.len(),
                test: self.test.len(),
            });
        }
        let mut seen = HashSet::new();
        for id in self.train.iter().chain(&self.test) {
            if !seen.insert(id) {
                let in_both = self.train.contains(id) && self.test.contains(id);
                return Err(if in_both {
                    LeakageError::SharedId(id.clone())
                } else {
                    LeakageError::DuplicateId(id.clone())
                });
            }
        }
        if let Some(units) = units {
            let by_id: std::collections::HashMap<&UnitId, &CodeUnit> = units.iter().map(|u| (&u.id, u)).collect();
            let mut test_code = std::collections::HashMap::new();
            for id in &self.test {
                if let Some(u) = by_id.get(id) {
                    test_code.insert(normalize_code(&u.code), id);
                }
            }
            for id in &self.train {
                if let Some(u) = by_id.get(id) {
                    if let Some(t) = test_code.get(&normalize_code(&u.code)) {
                        return Err(LeakageError::SharedCode { train: id.clone(), test: (*t).clone() });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Uniformly samples `test_count` units into `test`; the rest go to `train`.
/// Both partitions keep input order. Units are deduplicated by id first.
pub fn split_dataset(
    units: &[CodeUnit],
    test_count: usize,
    seed: u64,
    clock: &Clock,
) -> Result<DatasetManifest, SplitError> {
    let unique = dedup_by_id(units);
    if test_count > unique.len() {
        return Err(SplitError::TestCountTooLarge { requested: test_count, available: unique.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: HashSet<usize> = rand::seq::index::sample(&mut rng, unique.len(), test_count).into_iter().collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, u) in unique.iter().enumerate() {
        if picked.contains(&i) {
            test.push(u.id.clone());
        } else {
            train.push(u.id.clone());
        }
    }
    Ok(DatasetManifest {
        seed,
        created_at: clock.now(),
        hash: ID_HASH.to_string(),
        counts: PartitionCounts { train: train.len(), test: test.len() },
        train,
        test,
    })
}
