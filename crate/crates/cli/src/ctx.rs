use std::collections::HashSet;
use std::path::Path;

use anyhow::{bail, Context};
use refocus_core::backends::{
    ChatCompletionsClient, Embedder, EmbeddingsClient, Generator, MockEmbedder, MockGenerator,
};
use refocus_core::clock::rfc3339;
use refocus_core::corpus::{load_corpus, CorpusFormat, DatasetManifest};
use refocus_core::{fsutil, Clock, CodeUnit, UnitId};

use crate::config::{BackendKind, BackendSection, RunConfig};
use crate::layout::Layout;
use crate::meta::{self, Meta};
use crate::runlog::RunLog;

/// Everything a command needs: the validated config, where to write, and
/// which clock stamps records.
pub struct Ctx {
    pub cfg: RunConfig,
    pub layout: Layout,
    pub clock: Clock,
    pub config_hash: String,
    pub mock: bool,
    pub log: RunLog,
}

impl Ctx {
    /// Validates `cfg`, creates the run directory and writes the resolved
    /// config into it.
    pub fn new(cfg: RunConfig, clock: Clock, mock: bool) -> anyhow::Result<Self> {
        cfg.validate()?;
        let root = cfg.run_dir.clone().unwrap_or_else(|| "run".into());
        std::fs::create_dir_all(&root).with_context(|| format!("creating run directory {}", root.display()))?;
        let layout = Layout::new(root);
        fsutil::write_atomic(&layout.config(), cfg.to_toml().as_bytes())?;
        let log = RunLog::new(layout.run_log(), clock);
        Ok(Self { config_hash: cfg.hash(), cfg, layout, clock, mock, log })
    }

    pub fn meta(&self, stage: &str, records: usize, corpus_hash: Option<String>) -> Meta {
        Meta {
            stage: stage.into(),
            config_hash: self.config_hash.clone(),
            corpus_hash,
            records,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            created_at: rfc3339(&self.clock.now()),
        }
    }

    pub fn units(&self) -> anyhow::Result<Vec<CodeUnit>> {
        let path = self.layout.units();
        load_corpus(&path, CorpusFormat::Jsonl)
            .with_context(|| format!("loading {} (run `ingest` first)", path.display()))
    }

    pub fn split(&self) -> anyhow::Result<DatasetManifest> {
        let path = self.layout.split();
        let manifest: DatasetManifest =
            fsutil::read_json(&path).with_context(|| format!("loading {} (run `split` first)", path.display()))?;
        manifest.validate(None)?;
        Ok(manifest)
    }

    pub fn corpus_hash(&self) -> anyhow::Result<String> {
        Ok(meta::corpus_hash(&self.split()?))
    }

    /// Units whose ids are listed, in list order.
    pub fn select<'u>(units: &'u [CodeUnit], ids: &[UnitId]) -> anyhow::Result<Vec<CodeUnit>> {
        let wanted: HashSet<&UnitId> = ids.iter().collect();
        let by_id: std::collections::HashMap<&UnitId, &'u CodeUnit> =
            units.iter().filter(|u| wanted.contains(&u.id)).map(|u| (&u.id, u)).collect();
        ids.iter()
            .map(|id| {
                by_id
                    .get(id)
                    .map(|u| (*u).clone())
                    .with_context(|| format!("split lists unit {id}, missing from corpus"))
            })
            .collect()
    }

    fn warn_mock(&self, role: &str, section: &BackendSection) {
        if section.kind == BackendKind::Mock && !self.mock {
            log::warn!("{role} backend is the deterministic mock; pass a remote backend for real runs");
        }
    }

    fn make_generator(&self, role: &str, section: &BackendSection) -> anyhow::Result<Box<dyn Generator>> {
        self.warn_mock(role, section);
        Ok(match section.kind {
            BackendKind::Mock => Box::new(MockGenerator::new(section.seed.unwrap_or(self.cfg.seed))),
            BackendKind::Remote => {
                let remote = section.remote.clone().context("remote backend without settings")?;
                Box::new(ChatCompletionsClient::new(remote)?)
            }
        })
    }

    pub fn generator(&self) -> anyhow::Result<Box<dyn Generator>> {
        self.make_generator("generator", &self.cfg.backends.generator)
    }

    pub fn judge_backend(&self) -> anyhow::Result<Box<dyn Generator>> {
        self.make_generator("judge", &self.cfg.backends.judge)
    }

    pub fn embedder(&self) -> anyhow::Result<Box<dyn Embedder>> {
        let section = &self.cfg.backends.embedder;
        self.warn_mock("embedder", section);
        Ok(match section.kind {
            BackendKind::Mock => Box::new(MockEmbedder::new(section.seed.unwrap_or(self.cfg.seed))),
            BackendKind::Remote => {
                let remote = section.remote.clone().context("remote backend without settings")?;
                Box::new(EmbeddingsClient::new(remote)?)
            }
        })
    }

    pub fn operator_token(&self) -> anyhow::Result<String> {
        let var = &self.cfg.survey.operator_token_env;
        match std::env::var(var) {
            Ok(t) if !t.is_empty() => Ok(t),
            _ => bail!("set {var} to the survey operator token"),
        }
    }
}

/// Unit ids from a file: one per line, either a bare id or a JSON object
/// with a `unit_id` field.
pub fn read_ids(path: &Path) -> anyhow::Result<Vec<UnitId>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut ids = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('{') {
            let v: serde_json::Value =
                serde_json::from_str(line).with_context(|| format!("{}:{}: not JSON", path.display(), i + 1))?;
            let id = v["unit_id"].as_str().with_context(|| format!("{}:{}: no unit_id", path.display(), i + 1))?;
            ids.push(UnitId::from(id));
        } else {
            ids.push(UnitId::from(line));
        }
    }
    Ok(ids)
}
