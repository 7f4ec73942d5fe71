use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::stats::{mann_whitney, MannWhitneyError, StatMode, StatTestResult};
use super::{sentence_similarity, token_match_f1};
use crate::axes::AxisKey;
use crate::backends::{BackendError, Embedder};
use crate::corpus::UnitId;

pub const ALPHA: f64 = 0.05;

pub const REPORT_NOTES: [&str; 3] = [
    "token F1 is raw greedy max-cosine matching with no baseline rescaling",
    "p-values are two-sided Mann-Whitney U (independent samples) at alpha 0.05, no multiple-comparison correction",
    "the original evaluation describes its test as paired; Mann-Whitney does not use the pairing",
];

/// One generated comment together with the reference it is scored against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub unit_id: UnitId,
    pub axis: AxisKey,
    pub model_id: String,
    pub text: String,
    pub reference: String,
}

/// Per-unit scores for one model, aligned by position with the other model's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub model_id: String,
    pub token_f1: Vec<f64>,
    pub sentence: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub base_mean: f64,
    pub tuned_mean: f64,
    /// `None` when the base mean is zero.
    pub percent_improvement: Option<f64>,
    pub test: StatTestResult,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub axis: AxisKey,
    pub base_model: String,
    pub tuned_model: String,
    pub samples: usize,
    pub rows: Vec<MetricRow>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("score lists differ in length: base {base}, tuned {tuned}")]
    LengthMismatch { base: usize, tuned: usize },
    #[error(transparent)]
    Stat(#[from] MannWhitneyError),
    #[error("axis {axis}: unit {unit_id} is scored for only one model")]
    Unpaired { axis: AxisKey, unit_id: UnitId },
    #[error("axis {axis}: unit {unit_id} appears twice in one input")]
    Duplicate { axis: AxisKey, unit_id: UnitId },
    #[error("axis {axis}: predictions come from more than one model ({first}, {second})")]
    MixedModels { axis: AxisKey, first: String, second: String },
    #[error("scoring unit {unit_id}: {source}")]
    Backend { unit_id: UnitId, source: BackendError },
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn row(metric: &str, base: &[f64], tuned: &[f64]) -> Result<MetricRow, ReportError> {
    let test = mann_whitney(base, tuned, StatMode::Auto)?;
    let (base_mean, tuned_mean) = (mean(base), mean(tuned));
    let percent_improvement = (base_mean != 0.0).then(|| (tuned_mean - base_mean) / base_mean.abs() * 100.0);
    Ok(MetricRow {
        metric: metric.to_string(),
        base_mean,
        tuned_mean,
        percent_improvement,
        significant: test.p_two_sided < ALPHA,
        test,
    })
}

/// Compares base and tuned scores for one axis.
pub fn build_report(axis: AxisKey, base: &ModelScores, tuned: &ModelScores) -> Result<MetricReport, ReportError> {
    let lens = [base.token_f1.len(), base.sentence.len(), tuned.token_f1.len(), tuned.sentence.len()];
    if lens.iter().any(|&l| l != lens[0]) {
        return Err(ReportError::LengthMismatch { base: base.token_f1.len(), tuned: tuned.token_f1.len() });
    }
    Ok(MetricReport {
        axis,
        base_model: base.model_id.clone(),
        tuned_model: tuned.model_id.clone(),
        samples: lens[0],
        rows: vec![
            row("token_f1", &base.token_f1, &tuned.token_f1)?,
            row("sentence", &base.sentence, &tuned.sentence)?,
        ],
    })
}

impl MetricReport {
    /// Aligned plain-text table with the report notes as a header.
    pub fn render_table(reports: &[MetricReport]) -> String {
        let mut out = String::new();
        for note in REPORT_NOTES {
            let _ = writeln!(out, "# {note}");
        }
        if let Some(first) = reports.first() {
            let _ = writeln!(out, "# base: {}  tuned: {}", first.base_model, first.tuned_model);
        }
        let _ = writeln!(
            out,
            "{:<16} {:<9} {:>5} {:>8} {:>8} {:>9} {:>10} sig",
            "axis", "metric", "n", "base", "tuned", "%", "p"
        );
        for r in reports {
            for m in &r.rows {
                let pct = m.percent_improvement.map_or_else(|| "n/a".to_string(), |p| format!("{p:+.1}"));
                let _ = writeln!(
                    out,
                    "{:<16} {:<9} {:>5} {:>8.4} {:>8.4} {:>9} {:>10.3e} {}",
                    r.axis.as_str(),
                    m.metric,
                    r.samples,
                    m.base_mean,
                    m.tuned_mean,
                    pct,
                    m.test.p_two_sided,
                    if m.significant { "*" } else { "" }
                );
            }
        }
        out
    }
}

type Keyed<'a> = BTreeMap<AxisKey, BTreeMap<&'a UnitId, &'a Prediction>>;

fn group(preds: &[Prediction]) -> Result<Keyed<'_>, ReportError> {
    let mut out: Keyed<'_> = BTreeMap::new();
    let mut models: HashMap<AxisKey, &str> = HashMap::new();
    for p in preds {
        let model = models.entry(p.axis).or_insert(&p.model_id);
        if *model != p.model_id {
            return Err(ReportError::MixedModels {
                axis: p.axis,
                first: model.to_string(),
                second: p.model_id.clone(),
            });
        }
        if out.entry(p.axis).or_default().insert(&p.unit_id, p).is_some() {
            return Err(ReportError::Duplicate { axis: p.axis, unit_id: p.unit_id.clone() });
        }
    }
    Ok(out)
}

fn score(preds: &[&Prediction], embedder: &dyn Embedder) -> Result<ModelScores, ReportError> {
    let mut scores = ModelScores {
        model_id: preds.first().map(|p| p.model_id.clone()).unwrap_or_default(),
        token_f1: Vec::with_capacity(preds.len()),
        sentence: Vec::with_capacity(preds.len()),
    };
    for p in preds {
        let wrap = |source| ReportError::Backend { unit_id: p.unit_id.clone(), source };
        scores.token_f1.push(token_match_f1(&p.text, &p.reference, embedder).map_err(wrap)?.f1);
        scores.sentence.push(sentence_similarity(&p.text, &p.reference, embedder).map_err(wrap)?);
    }
    Ok(scores)
}

/// Scores both prediction sets and builds one report per axis present.
/// Units are paired by id; every unit must be present for both models.
pub fn evaluate_predictions(
    base: &[Prediction],
    tuned: &[Prediction],
    embedder: &dyn Embedder,
) -> Result<Vec<MetricReport>, ReportError> {
    let (base, tuned) = (group(base)?, group(tuned)?);
    let mut reports = Vec::new();
    for axis in AxisKey::ALL {
        let (b, t) = (base.get(&axis), tuned.get(&axis));
        if b.is_none() && t.is_none() {
            continue;
        }
        let empty = BTreeMap::new();
        let (b, t) = (b.unwrap_or(&empty), t.unwrap_or(&empty));
        if let Some(unit_id) = b.keys().find(|k| !t.contains_key(*k)).or_else(|| t.keys().find(|k| !b.contains_key(*k)))
        {
            return Err(ReportError::Unpaired { axis, unit_id: (*unit_id).clone() });
        }
        let bs = score(&b.values().copied().collect::<Vec<_>>(), embedder)?;
        let ts = score(&t.values().copied().collect::<Vec<_>>(), embedder)?;
        reports.push(build_report(axis, &bs, &ts)?);
    }
    Ok(reports)
}
