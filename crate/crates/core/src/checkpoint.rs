//! Resumable, order-preserving execution of a per-unit stage.
//!
//! The output JSONL doubles as the checkpoint: a unit is complete exactly
//! when its record is in the file, so the two can never disagree. Work runs
//! in chunks of `concurrency` units and each chunk is committed in input
//! order, which keeps output bytes independent of thread scheduling.

use std::collections::HashSet;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::UnitId;
use crate::fsutil::{self, JsonlAppender, ReadJsonlError};

/// A unit that failed after retries, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub unit_id: UnitId,
    pub error: String,
}

#[derive(Debug)]
pub struct StageOutcome<T> {
    /// Every record in the output file after the run, previous runs first.
    pub records: Vec<T>,
    pub resumed: usize,
    pub generated: usize,
    pub skipped: Vec<SkipRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io")]
    Io(#[from] std::io::Error),
    #[error("checkpoint {path}: {source}")]
    Corrupt { path: String, source: ReadJsonlError },
    #[error("checkpoint holds a record for unit {0}, which is not among this run's inputs")]
    ForeignRecord(UnitId),
}

pub struct Stage<'a> {
    pub output: &'a Path,
    pub skip_list: &'a Path,
    pub concurrency: usize,
}

impl Stage<'_> {
    pub fn run<I, T, F>(
        &self,
        items: &[I],
        item_id: impl Fn(&I) -> &UnitId,
        record_id: impl Fn(&T) -> &UnitId,
        work: F,
    ) -> Result<StageOutcome<T>, CheckpointError>
    where
        I: Sync,
        T: Serialize + DeserializeOwned + Send,
        F: Fn(&I) -> Result<T, String> + Sync,
    {
        fsutil::truncate_torn_tail(self.output)?;
        let mut records: Vec<T> = if self.output.exists() {
            fsutil::read_jsonl(self.output)
                .map_err(|source| CheckpointError::Corrupt { path: self.output.display().to_string(), source })?
        } else {
            Vec::new()
        };
        let wanted: HashSet<&UnitId> = items.iter().map(&item_id).collect();
        let mut done = HashSet::new();
        for r in &records {
            let id = record_id(r);
            if !wanted.contains(id) {
                return Err(CheckpointError::ForeignRecord(id.clone()));
            }
            done.insert(id.clone());
        }
        let resumed = records.len();
        let pending: Vec<&I> = items.iter().filter(|i| !done.contains(item_id(i))).collect();

        let mut out = JsonlAppender::open(self.output)?;
        let mut skipped = Vec::new();
        let mut generated = 0;
        for chunk in pending.chunks(self.concurrency.max(1)) {
            let results: Vec<Result<T, String>> = std::thread::scope(|s| {
                let handles: Vec<_> = chunk.iter().map(|item| s.spawn(|| work(item))).collect();
                handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err("worker panicked".to_string()))).collect()
            });
            for (item, result) in chunk.iter().zip(results) {
                match result {
                    Ok(rec) => {
                        out.append(&rec)?;
                        records.push(rec);
                        generated += 1;
                    }
                    Err(error) => {
                        log::warn!("skipping unit {}: {error}", item_id(item));
                        skipped.push(SkipRecord { unit_id: item_id(item).clone(), error });
                    }
                }
            }
        }
        fsutil::write_jsonl_atomic(self.skip_list, &skipped)?;
        Ok(StageOutcome { records, resumed, generated, skipped })
    }
}
