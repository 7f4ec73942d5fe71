use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use refocus_core::axes::{load_taxonomy, AxisKey};
use refocus_core::backends::RemoteConfig;
use refocus_core::candidates::PromptTemplate;
use refocus_core::finetune::Hyperparameters;
use refocus_core::judge::JudgeTemplate;
use refocus_survey::service::QcThresholds;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    #[serde(default)]
    pub kind: BackendKind,
    /// Mock backends only; defaults to the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub remote: Option<RemoteConfig>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Backends {
    #[serde(default)]
    pub generator: BackendSection,
    #[serde(default)]
    pub judge: BackendSection,
    #[serde(default)]
    pub embedder: BackendSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    /// Java files, directories searched for `*.java`, or corpus `*.jsonl` files.
    pub paths: Vec<PathBuf>,
    pub project: Option<String>,
    /// Generate this many synthetic methods instead of reading `paths`.
    pub synthetic_units: Option<usize>,
    /// Units held out of AI judging for human surveys.
    pub survey_pool: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self { paths: Vec::new(), project: None, synthetic_units: None, survey_pool: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CandidateSection {
    pub n: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Overrides the built-in prompt; `{code}` is replaced by the method.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template: Option<PromptTemplate>,
}

impl Default for CandidateSection {
    fn default() -> Self {
        Self { n: refocus_core::candidates::DEFAULT_N, temperature: 0.8, max_tokens: 128, template: None }
    }
}

/// `"all"`, one key, a comma list, or an array of keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxesSpec {
    Text(String),
    List(Vec<String>),
}

impl Default for AxesSpec {
    fn default() -> Self {
        Self::Text("all".into())
    }
}

impl AxesSpec {
    pub fn resolve(&self) -> Result<Vec<AxisKey>, String> {
        let joined = match self {
            Self::Text(s) => s.clone(),
            Self::List(v) => v.join(","),
        };
        AxisKey::parse_list(&joined).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JudgeSection {
    pub axes: AxesSpec,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template: Option<JudgeTemplate>,
}

impl Default for JudgeSection {
    fn default() -> Self {
        Self { axes: AxesSpec::default(), temperature: 0.0, max_tokens: 64, template: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurveySection {
    pub bind: String,
    pub operator_token_env: String,
    pub methods_per_session: Option<usize>,
    pub session_ttl_days: i64,
    pub thresholds: QcThresholds,
}

impl Default for SurveySection {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            operator_token_env: "REFOCUS_OPERATOR_TOKEN".into(),
            methods_per_session: None,
            session_ttl_days: 7,
            thresholds: QcThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SftSection {
    /// Human-selected units held out as the test split, per axis.
    pub test_count: usize,
    pub base_model_id: String,
    pub hyperparameters: Hyperparameters,
    /// Shell command run per axis by `assemble-sft --train`; `{manifest}` is
    /// replaced by the manifest path.
    pub trainer_command: Option<String>,
    /// Mock runs only: synthesize this many human selections per axis from
    /// the survey pool instead of running surveys.
    pub synthetic_human: usize,
}

impl Default for SftSection {
    fn default() -> Self {
        Self {
            test_count: 100,
            base_model_id: "base".into(),
            hyperparameters: Hyperparameters::default(),
            trainer_command: None,
            synthetic_human: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Defaults to the directory holding the config file. Never written to
    /// the resolved copy, so a run directory can be moved.
    #[serde(default, skip_serializing)]
    pub run_dir: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub candidates: CandidateSection,
    #[serde(default)]
    pub judge: JudgeSection,
    #[serde(default)]
    pub survey: SurveySection,
    #[serde(default)]
    pub sft: SftSection,
    #[serde(default)]
    pub backends: Backends,
}

fn default_seed() -> u64 {
    42
}

fn default_concurrency() -> usize {
    refocus_core::backends::DEFAULT_MAX_IN_FLIGHT
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if cfg.run_dir.is_none() {
            cfg.run_dir = Some(path.parent().map(Path::to_path_buf).unwrap_or_default());
        }
        Ok(cfg)
    }

    pub fn axes(&self) -> Vec<AxisKey> {
        self.judge.axes.resolve().unwrap_or_default()
    }

    /// Sets every backend to the deterministic mock.
    pub fn force_mock(&mut self) {
        for b in [&mut self.backends.generator, &mut self.backends.judge, &mut self.backends.embedder] {
            b.kind = BackendKind::Mock;
        }
    }

    /// Every problem found, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.concurrency == 0 {
            out.push("concurrency must be at least 1".to_string());
        }
        if self.candidates.n < 2 {
            out.push(format!("candidates.n must be at least 2, got {}", self.candidates.n));
        }
        for (name, t, m) in [
            ("candidates", self.candidates.temperature, self.candidates.max_tokens),
            ("judge", self.judge.temperature, self.judge.max_tokens),
        ] {
            if !(t.is_finite() && t >= 0.0) {
                out.push(format!("{name}.temperature must be a nonnegative number, got {t}"));
            }
            if m == 0 {
                out.push(format!("{name}.max_tokens must be at least 1"));
            }
        }
        if self.candidates.template.as_ref().is_some_and(|t| !t.user.contains("{code}")) {
            out.push("candidates.template.user must contain `{code}`".into());
        }
        if let Err(e) = self.judge.axes.resolve() {
            out.push(format!("judge.axes: {e}"));
        }
        if self.corpus.synthetic_units.is_some() && !self.corpus.paths.is_empty() {
            out.push("corpus.paths and corpus.synthetic_units are mutually exclusive".into());
        }
        for p in &self.corpus.paths {
            if !p.exists() {
                out.push(format!("corpus path {} does not exist", p.display()));
            }
        }
        if self.sft.synthetic_human > self.corpus.survey_pool {
            out.push(format!(
                "sft.synthetic_human ({}) exceeds corpus.survey_pool ({})",
                self.sft.synthetic_human, self.corpus.survey_pool
            ));
        }
        if self.survey.bind.parse::<SocketAddr>().is_err() {
            out.push(format!("survey.bind {:?} is not a socket address", self.survey.bind));
        }
        if self.survey.session_ttl_days < 1 {
            out.push("survey.session_ttl_days must be at least 1".into());
        }
        if self.survey.operator_token_env.is_empty() {
            out.push("survey.operator_token_env must name an environment variable".into());
        }
        for (name, b) in [
            ("generator", &self.backends.generator),
            ("judge", &self.backends.judge),
            ("embedder", &self.backends.embedder),
        ] {
            if b.kind != BackendKind::Remote {
                continue;
            }
            match &b.remote {
                None => out.push(format!("backends.{name}.kind is remote but backends.{name}.remote is missing")),
                Some(r) => {
                    if r.base_url.trim().is_empty() {
                        out.push(format!("backends.{name}.remote.base_url is empty"));
                    }
                    if r.model.trim().is_empty() {
                        out.push(format!("backends.{name}.remote.model is empty"));
                    }
                    if r.max_in_flight == 0 {
                        out.push(format!("backends.{name}.remote.max_in_flight must be at least 1"));
                    }
                    if let Some(var) = &r.api_key_env {
                        if std::env::var_os(var).is_none() {
                            out.push(format!("backends.{name}.remote.api_key_env names {var}, which is not set"));
                        }
                    }
                }
            }
        }
        if let Some(t) = &self.taxonomy {
            if let Err(e) = load_taxonomy(Some(t)) {
                out.push(format!("taxonomy {}: {:#}", t.display(), anyhow::Error::new(e)));
            }
        }
        out
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            return Ok(());
        }
        let list: Vec<String> = problems.iter().map(|p| format!("  - {p}")).collect();
        let noun = if problems.len() == 1 { "problem" } else { "problems" };
        bail!("invalid configuration ({} {noun}):\n{}", problems.len(), list.join("\n"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// First 16 hex digits of SHA-256 over the resolved config.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(digest)[..16].to_string()
    }
}
