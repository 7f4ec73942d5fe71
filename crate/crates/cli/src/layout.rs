//! Where each stage reads and writes inside a run directory.

use std::path::PathBuf;

use refocus_core::AxisKey;

#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn run_log(&self) -> PathBuf {
        self.root.join("run.log")
    }

    pub fn units(&self) -> PathBuf {
        self.root.join("corpus/units.jsonl")
    }

    pub fn ingest_skips(&self) -> PathBuf {
        self.root.join("corpus/ingest.skipped.jsonl")
    }

    pub fn split(&self) -> PathBuf {
        self.root.join("corpus/split.json")
    }

    /// Candidate sets for one partition: `train` (AI-judged) or `pool` (survey).
    pub fn candidates(&self, partition: &str) -> PathBuf {
        self.root.join(format!("candidates/{partition}.jsonl"))
    }

    pub fn candidate_skips(&self, partition: &str) -> PathBuf {
        self.root.join(format!("candidates/{partition}.skipped.jsonl"))
    }

    pub fn ai_selections(&self, axis: AxisKey) -> PathBuf {
        self.root.join(format!("judge/{axis}.jsonl"))
    }

    pub fn judge_skips(&self, axis: AxisKey) -> PathBuf {
        self.root.join(format!("judge/{axis}.skipped.jsonl"))
    }

    pub fn survey_data(&self) -> PathBuf {
        self.root.join("survey/data")
    }

    pub fn survey_pool(&self, name: &str) -> PathBuf {
        self.root.join(format!("survey/pools/{name}.json"))
    }

    pub fn human_selections(&self, axis: AxisKey) -> PathBuf {
        self.root.join(format!("survey/exports/{axis}.jsonl"))
    }

    pub fn rationale_export(&self, survey_id: &str) -> PathBuf {
        self.root.join(format!("survey/exports/{survey_id}.rationale.jsonl"))
    }

    pub fn sft(&self, axis: AxisKey) -> PathBuf {
        self.root.join(format!("sft/{axis}"))
    }

    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }
}
