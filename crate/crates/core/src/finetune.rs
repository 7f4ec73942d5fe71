//! Per-axis SFT dataset assembly with an AI-first, human-last curriculum.
//!
//! Training itself happens in an external trainer. This module writes the
//! JSONL files and a [`CurriculumManifest`] describing them, and can re-verify
//! a manifest against the candidate sets it was built from.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::axes::AxisKey;
use crate::candidates::CandidateSet;
use crate::corpus::{CodeUnit, UnitId};
use crate::fsutil;
use crate::judge::{AxisSelection, SelectionSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Ai,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One supervised example: method code in, selected comment out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub unit_id: UnitId,
    pub axis: AxisKey,
    pub selected_index: usize,
    pub input: String,
    pub target: String,
    pub phase: Phase,
    pub split: Split,
}

pub type ParamMap = BTreeMap<String, serde_json::Value>;

/// Trainer settings passed through untouched. `ai` and `human` override
/// `common` for their phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    #[serde(default)]
    pub common: ParamMap,
    #[serde(default)]
    pub ai: ParamMap,
    #[serde(default)]
    pub human: ParamMap,
}

impl Hyperparameters {
    pub fn for_phase(&self, phase: Phase) -> ParamMap {
        let mut merged = self.common.clone();
        let over = match phase {
            Phase::Ai => &self.ai,
            Phase::Human => &self.human,
        };
        merged.extend(over.iter().map(|(k, v)| (k.clone(), v.clone())));
        merged
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFiles {
    pub ai_train: PathBuf,
    pub human_train: PathBuf,
    pub human_test: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub ai_train: usize,
    pub human_train: usize,
    pub human_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumManifest {
    pub axis: AxisKey,
    pub phase_order: Vec<Phase>,
    /// Relative to the directory holding the manifest.
    pub files: ManifestFiles,
    pub counts: ManifestCounts,
    pub base_model_id: String,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
    pub test_count: usize,
    pub config_hash: Option<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
const AI_TRAIN: &str = "ai.train.jsonl";
const HUMAN_TRAIN: &str = "human.train.jsonl";
const HUMAN_TEST: &str = "human.test.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum AssembleError {
    #[error("selection for {unit} picks index {index} but the unit has {n} candidates")]
    IndexOutOfRange { unit: UnitId, index: usize, n: usize },
    #[error("{} unit(s) selected by both AI and humans, e.g. {}", .0.len(), .0[0])]
    OverlapBetweenSources(Vec<UnitId>),
    #[error("test count {requested} exceeds {available} human-selected units")]
    TestCountTooLarge { requested: usize, available: usize },
    #[error("unit {0} is not in the corpus")]
    UnknownUnit(UnitId),
    #[error("unit {0} has no candidate set")]
    MissingCandidates(UnitId),
    #[error("selection for {unit} is for axis {found}, expected {expected}")]
    AxisMismatch { unit: UnitId, expected: AxisKey, found: AxisKey },
    #[error("selection for {unit} has source {found:?} in the {expected:?} input")]
    WrongSource { unit: UnitId, expected: SelectionSource, found: SelectionSource },
    #[error("more than one AI selection for unit {0}")]
    DuplicateAiSelection(UnitId),
    #[error("writing SFT files")]
    Io(#[from] std::io::Error),
}

pub struct AssembleRequest<'a> {
    pub axis: AxisKey,
    pub ai_selections: &'a [AxisSelection],
    pub human_selections: &'a [AxisSelection],
    pub candidate_sets: &'a [CandidateSet],
    pub corpus: &'a [CodeUnit],
    pub test_count: usize,
    pub seed: u64,
    pub base_model_id: String,
    pub hyperparameters: Hyperparameters,
    pub config_hash: Option<String>,
    pub out_dir: &'a Path,
}

#[derive(Debug)]
pub struct Assembled {
    pub manifest: CurriculumManifest,
    pub manifest_path: PathBuf,
    pub warnings: Vec<String>,
}

/// Writes the three SFT files and the manifest for one axis.
///
/// Human selections are split by unit: `test_count` distinct units are
/// sampled into the test split with all of their selections. When every
/// unit has exactly one human selection this is a plain record split.
pub fn assemble(req: &AssembleRequest<'_>) -> Result<Assembled, AssembleError> {
    let corpus: HashMap<&UnitId, &CodeUnit> = req.corpus.iter().map(|u| (&u.id, u)).collect();
    let sets: HashMap<&UnitId, &CandidateSet> = req.candidate_sets.iter().map(|s| (&s.unit_id, s)).collect();

    let check = |sel: &AxisSelection, source: SelectionSource| -> Result<(), AssembleError> {
        if sel.axis != req.axis {
            return Err(AssembleError::AxisMismatch { unit: sel.unit_id.clone(), expected: req.axis, found: sel.axis });
        }
        if sel.source != source {
            return Err(AssembleError::WrongSource { unit: sel.unit_id.clone(), expected: source, found: sel.source });
        }
        if !corpus.contains_key(&sel.unit_id) {
            return Err(AssembleError::UnknownUnit(sel.unit_id.clone()));
        }
        let set = sets.get(&sel.unit_id).ok_or_else(|| AssembleError::MissingCandidates(sel.unit_id.clone()))?;
        if sel.selected_index >= set.candidates.len() {
            return Err(AssembleError::IndexOutOfRange {
                unit: sel.unit_id.clone(),
                index: sel.selected_index,
                n: set.candidates.len(),
            });
        }
        Ok(())
    };
    let mut ai_units = HashSet::new();
    for sel in req.ai_selections {
        check(sel, SelectionSource::Ai)?;
        if !ai_units.insert(&sel.unit_id) {
            return Err(AssembleError::DuplicateAiSelection(sel.unit_id.clone()));
        }
    }
    let mut human_units: Vec<&UnitId> = Vec::new();
    for sel in req.human_selections {
        check(sel, SelectionSource::Human)?;
        if !human_units.contains(&&sel.unit_id) {
            human_units.push(&sel.unit_id);
        }
    }
    let overlap: Vec<UnitId> = human_units.iter().filter(|u| ai_units.contains(*u)).map(|u| (*u).clone()).collect();
    if !overlap.is_empty() {
        return Err(AssembleError::OverlapBetweenSources(overlap));
    }
    if req.test_count > human_units.len() {
        return Err(AssembleError::TestCountTooLarge { requested: req.test_count, available: human_units.len() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let test_units: HashSet<&UnitId> = rand::seq::index::sample(&mut rng, human_units.len(), req.test_count)
        .into_iter()
        .map(|i| human_units[i])
        .collect();

    let record = |sel: &AxisSelection, phase: Phase, split: Split| SftRecord {
        unit_id: sel.unit_id.clone(),
        axis: req.axis,
        selected_index: sel.selected_index,
        input: corpus[&sel.unit_id].code.clone(),
        target: sets[&sel.unit_id].candidates[sel.selected_index].clone(),
        phase,
        split,
    };
    let ai_train: Vec<SftRecord> = req.ai_selections.iter().map(|s| record(s, Phase::Ai, Split::Train)).collect();
    let (mut human_train, mut human_test) = (Vec::new(), Vec::new());
    for sel in req.human_selections {
        if test_units.contains(&sel.unit_id) {
            human_test.push(record(sel, Phase::Human, Split::Test));
        } else {
            human_train.push(record(sel, Phase::Human, Split::Train));
        }
    }

    let mut warnings = Vec::new();
    if ai_train.is_empty() {
        warnings.push(format!("{}: AI-phase training file is empty", req.axis));
    }
    if human_train.is_empty() {
        warnings.push(format!("{}: human-phase training file is empty", req.axis));
    }

    fsutil::write_jsonl_atomic(&req.out_dir.join(AI_TRAIN), &ai_train)?;
    fsutil::write_jsonl_atomic(&req.out_dir.join(HUMAN_TRAIN), &human_train)?;
    fsutil::write_jsonl_atomic(&req.out_dir.join(HUMAN_TEST), &human_test)?;
    let manifest = CurriculumManifest {
        axis: req.axis,
        phase_order: vec![Phase::Ai, Phase::Human],
        files: ManifestFiles {
            ai_train: AI_TRAIN.into(),
            human_train: HUMAN_TRAIN.into(),
            human_test: HUMAN_TEST.into(),
        },
        counts: ManifestCounts {
            ai_train: ai_train.len(),
            human_train: human_train.len(),
            human_test: human_test.len(),
        },
        base_model_id: req.base_model_id.clone(),
        hyperparameters: req.hyperparameters.clone(),
        seed: req.seed,
        test_count: req.test_count,
        config_hash: req.config_hash.clone(),
    };
    let manifest_path = req.out_dir.join(MANIFEST_FILE);
    fsutil::write_json_atomic(&manifest_path, &manifest)?;
    Ok(Assembled { manifest, manifest_path, warnings })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    ManifestUnreadable { reason: String },
    PhaseOrder { found: Vec<Phase> },
    MissingFile { file: PathBuf },
    CountMismatch { file: PathBuf, expected: usize, actual: usize },
    MalformedLine { file: PathBuf, line: usize },
    AxisMismatch { file: PathBuf, line: usize },
    PhaseMismatch { file: PathBuf, line: usize },
    UnknownUnit { unit_id: UnitId },
    ProvenanceMismatch { unit_id: UnitId },
    SplitOverlap { unit_id: UnitId },
    SourceOverlap { unit_id: UnitId },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-reads a manifest and its files and reports every inconsistency:
/// line counts, target provenance against `sets`, and split disjointness.
pub fn verify_manifest(manifest_path: &Path, sets: &[CandidateSet]) -> VerificationReport {
    let mut report = VerificationReport::default();
    let manifest: CurriculumManifest = match fsutil::read_json(manifest_path) {
        Ok(m) => m,
        Err(e) => {
            report.violations.push(Violation::ManifestUnreadable { reason: e.to_string() });
            return report;
        }
    };
    if manifest.phase_order != [Phase::Ai, Phase::Human] {
        report.violations.push(Violation::PhaseOrder { found: manifest.phase_order.clone() });
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let sets: HashMap<&UnitId, &CandidateSet> = sets.iter().map(|s| (&s.unit_id, s)).collect();
    let files = [
        (&manifest.files.ai_train, manifest.counts.ai_train, Phase::Ai, Split::Train),
        (&manifest.files.human_train, manifest.counts.human_train, Phase::Human, Split::Train),
        (&manifest.files.human_test, manifest.counts.human_test, Phase::Human, Split::Test),
    ];
    let mut units_by_file: Vec<HashSet<UnitId>> = Vec::new();
    for (rel, expected, phase, split) in files {
        let path = dir.join(rel);
        let mut units = HashSet::new();
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(_) => {
                report.violations.push(Violation::MissingFile { file: rel.clone() });
                units_by_file.push(units);
                continue;
            }
        };
        let actual = text.bytes().filter(|&b| b == b'\n').count();
        if actual != expected {
            report.violations.push(Violation::CountMismatch { file: rel.clone(), expected, actual });
        }
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let Ok(rec) = serde_json::from_str::<SftRecord>(line) else {
                report.violations.push(Violation::MalformedLine { file: rel.clone(), line: line_no });
                continue;
            };
            if rec.axis != manifest.axis {
                report.violations.push(Violation::AxisMismatch { file: rel.clone(), line: line_no });
            }
            if rec.phase != phase || rec.split != split {
                report.violations.push(Violation::PhaseMismatch { file: rel.clone(), line: line_no });
            }
            match sets.get(&rec.unit_id) {
                None => report.violations.push(Violation::UnknownUnit { unit_id: rec.unit_id.clone() }),
                Some(set) => {
                    if set.candidates.get(rec.selected_index) != Some(&rec.target) {
                        report.violations.push(Violation::ProvenanceMismatch { unit_id: rec.unit_id.clone() });
                    }
                }
            }
            units.insert(rec.unit_id);
        }
        units_by_file.push(units);
    }
    let (ai, train, test) = (&units_by_file[0], &units_by_file[1], &units_by_file[2]);
    let mut shared: Vec<&UnitId> = test.intersection(train).collect();
    shared.sort();
    report.violations.extend(shared.into_iter().map(|u| Violation::SplitOverlap { unit_id: u.clone() }));
    let mut cross: Vec<&UnitId> = ai.iter().filter(|u| train.contains(*u) || test.contains(*u)).collect();
    cross.sort();
    report.violations.extend(cross.into_iter().map(|u| Violation::SourceOverlap { unit_id: u.clone() }));
    report
}

/// Builds `sh -c <template>` with every `{manifest}` replaced by the quoted path.
pub fn trainer_command(template: &str, manifest_path: &Path) -> Command {
    let quoted = format!("'{}'", manifest_path.display().to_string().replace('\'', r"'\''"));
    let mut cmd = Command::new("sh");
    cmd.arg("-c").arg(template.replace("{manifest}", &quoted));
    cmd
}
