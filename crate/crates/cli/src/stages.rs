use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context};
use refocus_core::axes::load_taxonomy;
use refocus_core::candidates::{generate_candidates, load_candidates, CandidateJob, CandidateSet, GenerationConfig};
use refocus_core::corpus::{
    dedup_by_id, extract_methods, load_corpus, save_corpus, split_dataset, synthetic, CorpusFormat,
};
use refocus_core::finetune::{assemble, trainer_command, verify_manifest, AssembleRequest};
use refocus_core::judge::{judge_corpus, load_selections, save_selections, AxisSelection, JudgeJob, SelectionSource};
use refocus_core::metrics::{evaluate_predictions, MetricReport, Prediction};
use refocus_core::{fsutil, AxisKey, CodeUnit, UnitId};
use refocus_survey::{
    CreateSurveyRequest, PoolUnit, ServiceConfig, SurveyClient, SurveyExport, SurveyKind, SurveyService,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ctx::{read_ids, Ctx};
use crate::meta;

pub const SYNTHETIC_ANNOTATOR: &str = "synthetic-01";

/// How many units a stage could not process. Nonzero means exit code 2.
#[derive(Debug, Default, Clone, Copy)]
pub struct Outcome {
    pub skipped: usize,
}

impl Outcome {
    fn add(&mut self, other: Outcome) {
        self.skipped += other.skipped;
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FileSkip {
    path: String,
    error: String,
}

fn source_files(root: &Path) -> Vec<PathBuf> {
    if root.is_file() {
        return vec![root.to_path_buf()];
    }
    walkdir::WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("java" | "jsonl")))
        .collect()
}

pub fn ingest(ctx: &Ctx, inputs: &[PathBuf]) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let paths = if inputs.is_empty() { ctx.cfg.corpus.paths.clone() } else { inputs.to_vec() };
    let mut units = Vec::new();
    let mut skips = Vec::new();
    let mut files = 0;
    match (ctx.cfg.corpus.synthetic_units, paths.is_empty()) {
        (Some(count), true) => units = synthetic::java_units(count, ctx.cfg.seed),
        (None, true) => bail!("nothing to ingest: pass input paths or set corpus.paths or corpus.synthetic_units"),
        _ => {
            for root in &paths {
                if !root.exists() {
                    bail!("input {} does not exist", root.display());
                }
                for file in source_files(root) {
                    files += 1;
                    let shown = file.to_string_lossy().into_owned();
                    if file.extension().is_some_and(|e| e == "jsonl") {
                        units.extend(
                            load_corpus(&file, CorpusFormat::Jsonl).with_context(|| format!("loading {shown}"))?,
                        );
                        continue;
                    }
                    let extracted = std::fs::read_to_string(&file)
                        .map_err(|e| e.to_string())
                        .and_then(|src| extract_methods(&src, &shown).map_err(|e| e.to_string()));
                    match extracted {
                        Ok(found) => units.extend(found),
                        Err(error) => {
                            log::warn!("skipping {shown}: {error}");
                            skips.push(FileSkip { path: shown, error });
                        }
                    }
                }
            }
        }
    }
    if let Some(project) = &ctx.cfg.corpus.project {
        for u in units.iter_mut().filter(|u| u.project.is_none()) {
            u.project = Some(project.clone());
        }
    }
    let units = dedup_by_id(&units);
    let out = ctx.layout.units();
    save_corpus(&out, &units).with_context(|| format!("writing {}", out.display()))?;
    fsutil::write_jsonl_atomic(&ctx.layout.ingest_skips(), &skips)?;
    meta::write(&out, &ctx.meta("ingest", units.len(), None))?;
    ctx.log.record(
        "ingest",
        &[("files", files.to_string()), ("units", units.len().to_string()), ("skipped", skips.len().to_string())],
        start.elapsed(),
    );
    Ok(Outcome { skipped: skips.len() })
}

pub fn split(ctx: &Ctx, test_count: Option<usize>) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let units = ctx.units()?;
    let test_count = test_count.unwrap_or(ctx.cfg.corpus.survey_pool);
    let manifest = split_dataset(&units, test_count, ctx.cfg.seed, &ctx.clock)?;
    manifest.validate(Some(&units))?;
    let out = ctx.layout.split();
    fsutil::write_json_atomic(&out, &manifest)?;
    let hash = meta::corpus_hash(&manifest);
    meta::write(&out, &ctx.meta("split", manifest.train.len() + manifest.test.len(), Some(hash)))?;
    ctx.log.record(
        "split",
        &[("train", manifest.counts.train.to_string()), ("test", manifest.counts.test.to_string())],
        start.elapsed(),
    );
    Ok(Outcome::default())
}

pub const PARTITIONS: [&str; 2] = ["train", "pool"];

pub fn gen_candidates(ctx: &Ctx) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let units = ctx.units()?;
    let split = ctx.split()?;
    let corpus_hash = meta::corpus_hash(&split);
    let backend = ctx.generator()?;
    let mut outcome = Outcome::default();
    for (partition, ids) in PARTITIONS.iter().zip([&split.train, &split.test]) {
        let out = ctx.layout.candidates(partition);
        if ids.is_empty() {
            fsutil::write_jsonl_atomic::<CandidateSet>(&out, &[])?;
            meta::write(&out, &ctx.meta("gen-candidates", 0, Some(corpus_hash.clone())))?;
            continue;
        }
        let selected = Ctx::select(&units, ids)?;
        let job = CandidateJob {
            n: ctx.cfg.candidates.n,
            config: GenerationConfig {
                temperature: ctx.cfg.candidates.temperature,
                max_tokens: ctx.cfg.candidates.max_tokens,
                seed: None,
            },
            template: ctx.cfg.candidates.template.clone().unwrap_or_default(),
            clock: ctx.clock,
            concurrency: ctx.cfg.concurrency,
            output: out.clone(),
            skip_list: ctx.layout.candidate_skips(partition),
        };
        let result = generate_candidates(&selected, backend.as_ref(), &job)?;
        meta::write(&out, &ctx.meta("gen-candidates", result.records.len(), Some(corpus_hash.clone())))?;
        ctx.log.record(
            "gen-candidates",
            &[
                ("partition", partition.to_string()),
                ("sets", result.records.len().to_string()),
                ("resumed", result.resumed.to_string()),
                ("skipped", result.skipped.len().to_string()),
                ("skip_list", job.skip_list.display().to_string()),
            ],
            start.elapsed(),
        );
        outcome.skipped += result.skipped.len();
    }
    Ok(outcome)
}

/// Ids that AI judging must never see: the survey pool plus any listed files.
pub fn reserved_ids(ctx: &Ctx, extra: &[PathBuf]) -> anyhow::Result<HashSet<UnitId>> {
    let mut reserved: HashSet<UnitId> = ctx.split()?.test.into_iter().collect();
    for file in extra {
        reserved.extend(read_ids(file)?);
    }
    Ok(reserved)
}

pub fn judge(ctx: &Ctx, axes: &[AxisKey], extra_reserved: &[PathBuf]) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let units = ctx.units()?;
    let split = ctx.split()?;
    let corpus_hash = meta::corpus_hash(&split);
    let train = Ctx::select(&units, &split.train)?;
    let reserved = reserved_ids(ctx, extra_reserved)?;
    let sets_path = ctx.layout.candidates("train");
    let sets = load_candidates(&sets_path)
        .with_context(|| format!("loading {} (run `gen-candidates` first)", sets_path.display()))?;
    let taxonomy = load_taxonomy(ctx.cfg.taxonomy.as_deref())?;
    let backend = ctx.judge_backend()?;
    let mut outcome = Outcome::default();
    for &axis in axes {
        let mut job = JudgeJob::new(ctx.layout.ai_selections(axis), ctx.layout.judge_skips(axis));
        if let Some(t) = &ctx.cfg.judge.template {
            job.template = t.clone();
        }
        job.temperature = ctx.cfg.judge.temperature;
        job.max_tokens = ctx.cfg.judge.max_tokens;
        job.clock = ctx.clock;
        job.concurrency = ctx.cfg.concurrency;
        let result = judge_corpus(&train, &sets, taxonomy.get(axis), &reserved, backend.as_ref(), &job)
            .with_context(|| format!("judging axis {axis}"))?;
        meta::write(&job.output, &ctx.meta("judge", result.records.len(), Some(corpus_hash.clone())))?;
        ctx.log.record(
            "judge",
            &[
                ("axis", axis.to_string()),
                ("selections", result.records.len().to_string()),
                ("resumed", result.resumed.to_string()),
                ("skipped", result.skipped.len().to_string()),
                ("skip_list", job.skip_list.display().to_string()),
            ],
            start.elapsed(),
        );
        outcome.skipped += result.skipped.len();
    }
    Ok(outcome)
}

fn pool_sets(ctx: &Ctx) -> anyhow::Result<(Vec<CodeUnit>, BTreeMap<UnitId, CandidateSet>)> {
    let units = ctx.units()?;
    let split = ctx.split()?;
    let pool = Ctx::select(&units, &split.test)?;
    let path = ctx.layout.candidates("pool");
    let sets = load_candidates(&path).with_context(|| format!("loading {}", path.display()))?;
    Ok((pool, sets.into_iter().map(|s| (s.unit_id.clone(), s)).collect()))
}

pub fn survey_id(kind: SurveyKind, axis: Option<AxisKey>) -> String {
    match (kind, axis) {
        (SurveyKind::Axis, Some(a)) => a.to_string(),
        _ => "rationale".into(),
    }
}

/// Writes survey definitions over the pool partition and optionally posts
/// them to a running service.
pub fn survey_prepare(ctx: &Ctx, kind: SurveyKind, axes: &[AxisKey], post: Option<&str>) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let (pool, sets) = pool_sets(ctx)?;
    let mut requests = Vec::new();
    match kind {
        SurveyKind::Rationale => {
            let units: Vec<PoolUnit> = pool
                .iter()
                .filter_map(|u| {
                    let set = sets.get(&u.id)?;
                    let original = u.existing_comment.clone()?;
                    let mut candidates = vec![original];
                    candidates.extend(set.candidates.iter().take(2).cloned());
                    (candidates.len() == 3).then(|| PoolUnit {
                        unit_id: u.id.clone(),
                        code: u.code.clone(),
                        candidates,
                    })
                })
                .collect();
            requests.push(CreateSurveyRequest {
                survey_id: Some(survey_id(kind, None)),
                kind,
                axis: None,
                methods_per_session: ctx.cfg.survey.methods_per_session,
                options_per_task: None,
                units,
            });
        }
        SurveyKind::Axis => {
            for &axis in axes {
                let units = pool
                    .iter()
                    .filter_map(|u| {
                        let set = sets.get(&u.id)?;
                        Some(PoolUnit {
                            unit_id: u.id.clone(),
                            code: u.code.clone(),
                            candidates: set.candidates.clone(),
                        })
                    })
                    .collect();
                requests.push(CreateSurveyRequest {
                    survey_id: Some(survey_id(kind, Some(axis))),
                    kind,
                    axis: Some(axis),
                    methods_per_session: ctx.cfg.survey.methods_per_session,
                    options_per_task: None,
                    units,
                });
            }
        }
    }
    let client = match post {
        Some(url) => Some(SurveyClient::new(url, Some(ctx.operator_token()?))),
        None => None,
    };
    for req in &requests {
        let name = req.survey_id.clone().unwrap_or_default();
        let path = ctx.layout.survey_pool(&name);
        fsutil::write_json_atomic(&path, req)?;
        meta::write(&path, &ctx.meta("survey-prepare", req.units.len(), ctx.corpus_hash().ok()))?;
        if let Some(client) = &client {
            let created = client.create_survey(req).with_context(|| format!("creating survey {name}"))?;
            println!("created survey {}", created.survey_id);
        }
        ctx.log.record(
            "survey-prepare",
            &[("survey", name), ("units", req.units.len().to_string()), ("pool", path.display().to_string())],
            start.elapsed(),
        );
    }
    Ok(Outcome::default())
}

fn local_service(ctx: &Ctx, token: String) -> anyhow::Result<SurveyService> {
    let mut config = ServiceConfig::new(ctx.layout.survey_data(), token);
    config.thresholds = ctx.cfg.survey.thresholds;
    config.session_ttl = chrono::Duration::days(ctx.cfg.survey.session_ttl_days);
    config.taxonomy = load_taxonomy(ctx.cfg.taxonomy.as_deref())?;
    config.clock = ctx.clock;
    Ok(SurveyService::open(config)?)
}

pub fn survey_serve(ctx: &Ctx, bind: Option<&str>) -> anyhow::Result<Outcome> {
    let service = Arc::new(local_service(ctx, ctx.operator_token()?)?);
    let bind = bind.unwrap_or(&ctx.cfg.survey.bind).to_string();
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("binding {bind}"))?;
        println!("survey service listening on http://{}", listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        };
        refocus_survey::serve_until(listener, service, shutdown).await?;
        anyhow::Ok(())
    })?;
    Ok(Outcome::default())
}

type ExportFn = dyn Fn(&str) -> anyhow::Result<SurveyExport>;

/// Pulls selections out of the survey service, over HTTP when `url` is
/// given and from the local data directory otherwise.
pub fn survey_export(
    ctx: &Ctx,
    url: Option<&str>,
    surveys: &[String],
    include_flagged: bool,
) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let fetch: Box<ExportFn> = match url {
        Some(url) => {
            let client = SurveyClient::new(url, Some(ctx.operator_token()?));
            Box::new(move |id| Ok(client.export(id, include_flagged)?))
        }
        None => {
            let service = local_service(ctx, String::new())?;
            Box::new(move |id| Ok(service.export(id, include_flagged)?))
        }
    };
    for id in surveys {
        let export = fetch(id).with_context(|| format!("exporting survey {id}"))?;
        for w in &export.warnings {
            log::warn!("survey {id}: {w}");
        }
        let (path, records) = match (export.kind, export.axis) {
            (SurveyKind::Axis, Some(axis)) => {
                let path = ctx.layout.human_selections(axis);
                save_selections(&path, &export.selections)?;
                (path, export.selections.len())
            }
            _ => {
                let path = ctx.layout.rationale_export(id);
                fsutil::write_jsonl_atomic(&path, &export.rationales)?;
                (path, export.rationales.len())
            }
        };
        meta::write(&path, &ctx.meta("survey-export", records, ctx.corpus_hash().ok()))?;
        ctx.log.record(
            "survey-export",
            &[
                ("survey", id.clone()),
                ("included", export.included.to_string()),
                ("excluded", export.excluded.to_string()),
                ("out", path.display().to_string()),
            ],
            start.elapsed(),
        );
    }
    Ok(Outcome::default())
}

fn synthetic_choice(seed: u64, unit: &UnitId, axis: AxisKey, n: usize) -> usize {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(unit.as_str().as_bytes());
    h.update(axis.as_str().as_bytes());
    let digest = h.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(word) % n as u64) as usize
}

/// Stands in for axis surveys in mock runs: one human selection per axis
/// for each of the first `count` pool units.
pub fn survey_synthesize(ctx: &Ctx, axes: &[AxisKey], count: usize) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let (pool, sets) = pool_sets(ctx)?;
    let chosen: Vec<&CandidateSet> = pool.iter().filter_map(|u| sets.get(&u.id)).take(count).collect();
    if chosen.len() < count {
        bail!("asked for {count} synthetic human selections but the pool has {} units with candidates", chosen.len());
    }
    let corpus_hash = ctx.corpus_hash().ok();
    for &axis in axes {
        let selections: Vec<AxisSelection> = chosen
            .iter()
            .map(|set| AxisSelection {
                unit_id: set.unit_id.clone(),
                axis,
                selected_index: synthetic_choice(ctx.cfg.seed, &set.unit_id, axis, set.candidates.len()),
                source: SelectionSource::Human,
                raw_response: None,
                rewrite: None,
                rationale: None,
                annotator_id: Some(SYNTHETIC_ANNOTATOR.into()),
                created_at: ctx.clock.now(),
            })
            .collect();
        let path = ctx.layout.human_selections(axis);
        save_selections(&path, &selections)?;
        meta::write(&path, &ctx.meta("survey-synthesize", selections.len(), corpus_hash.clone()))?;
    }
    ctx.log.record(
        "survey-synthesize",
        &[("axes", axes.len().to_string()), ("units", count.to_string())],
        start.elapsed(),
    );
    Ok(Outcome::default())
}

pub fn assemble_sft(ctx: &Ctx, axes: &[AxisKey], test_count: Option<usize>, train: bool) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let units = ctx.units()?;
    let split = ctx.split()?;
    let reserved: HashSet<&UnitId> = split.test.iter().collect();
    let mut sets = Vec::new();
    for partition in PARTITIONS {
        let path = ctx.layout.candidates(partition);
        if path.exists() {
            sets.extend(load_candidates(&path).with_context(|| format!("loading {}", path.display()))?);
        }
    }
    let test_count = test_count.unwrap_or(ctx.cfg.sft.test_count);
    for &axis in axes {
        let ai_path = ctx.layout.ai_selections(axis);
        let ai =
            load_selections(&ai_path).with_context(|| format!("loading {} (run `judge` first)", ai_path.display()))?;
        let leaked: Vec<&UnitId> = ai.iter().map(|s| &s.unit_id).filter(|id| reserved.contains(id)).collect();
        if !leaked.is_empty() {
            bail!(
                "{axis}: {} AI selection(s) are for human-reserved units, e.g. {}; refusing to assemble",
                leaked.len(),
                leaked[0]
            );
        }
        let human_path = ctx.layout.human_selections(axis);
        let human = if human_path.exists() {
            load_selections(&human_path).with_context(|| format!("loading {}", human_path.display()))?
        } else {
            log::warn!("{axis}: no human selections at {}", human_path.display());
            Vec::new()
        };
        let out_dir = ctx.layout.sft(axis);
        let assembled = assemble(&AssembleRequest {
            axis,
            ai_selections: &ai,
            human_selections: &human,
            candidate_sets: &sets,
            corpus: &units,
            test_count,
            seed: ctx.cfg.seed,
            base_model_id: ctx.cfg.sft.base_model_id.clone(),
            hyperparameters: ctx.cfg.sft.hyperparameters.clone(),
            config_hash: Some(ctx.config_hash.clone()),
            out_dir: &out_dir,
        })
        .with_context(|| format!("assembling {axis}"))?;
        for w in &assembled.warnings {
            log::warn!("{w}");
        }
        let report = verify_manifest(&assembled.manifest_path, &sets);
        if !report.is_clean() {
            bail!("{axis}: manifest verification failed: {}", serde_json::to_string(&report.violations)?);
        }
        let c = &assembled.manifest.counts;
        ctx.log.record(
            "assemble-sft",
            &[
                ("axis", axis.to_string()),
                ("ai_train", c.ai_train.to_string()),
                ("human_train", c.human_train.to_string()),
                ("human_test", c.human_test.to_string()),
            ],
            start.elapsed(),
        );
        if train {
            let template = ctx.cfg.sft.trainer_command.as_deref().context("--train needs sft.trainer_command")?;
            let status = trainer_command(template, &assembled.manifest_path)
                .status()
                .with_context(|| format!("running trainer for {axis}"))?;
            if !status.success() {
                bail!("{axis}: trainer exited with {status}");
            }
        }
    }
    Ok(Outcome::default())
}

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";

pub fn evaluate(ctx: &Ctx, base: &Path, tuned: &Path, out: Option<&Path>) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let read = |p: &Path| -> anyhow::Result<Vec<Prediction>> {
        fsutil::read_jsonl(p).with_context(|| format!("reading predictions {}", p.display()))
    };
    let (base, tuned) = (read(base)?, read(tuned)?);
    let embedder = ctx.embedder()?;
    let reports = evaluate_predictions(&base, &tuned, embedder.as_ref())?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| ctx.layout.eval());
    write_reports(&out, &reports, ctx.meta("evaluate", reports.len(), ctx.corpus_hash().ok()))?;
    ctx.log.record(
        "evaluate",
        &[("axes", reports.len().to_string()), ("out", out.display().to_string())],
        start.elapsed(),
    );
    print!("{}", MetricReport::render_table(&reports));
    Ok(Outcome::default())
}

fn write_reports(dir: &Path, reports: &[MetricReport], meta: meta::Meta) -> anyhow::Result<()> {
    let json = dir.join(REPORT_JSON);
    fsutil::write_json_atomic(&json, &reports)?;
    fsutil::write_atomic(&dir.join(REPORT_TXT), MetricReport::render_table(reports).as_bytes())?;
    meta::write(&json, &meta)
}

/// Merges `report.json` files (or directories holding one) into one table.
/// Refuses inputs computed over different corpora.
pub fn report(inputs: &[PathBuf], out: Option<&Path>) -> anyhow::Result<Outcome> {
    let mut merged: Vec<MetricReport> = Vec::new();
    let mut first: Option<(PathBuf, meta::Meta)> = None;
    for input in inputs {
        let path = if input.is_dir() { input.join(REPORT_JSON) } else { input.clone() };
        let m = meta::read(&path)?;
        if let Some((p0, m0)) = &first {
            if m0.corpus_hash != m.corpus_hash {
                bail!(
                    "{} was computed over corpus {:?} but {} over {:?}; refusing to merge",
                    p0.display(),
                    m0.corpus_hash,
                    path.display(),
                    m.corpus_hash
                );
            }
        }
        let reports: Vec<MetricReport> =
            fsutil::read_json(&path).with_context(|| format!("reading {}", path.display()))?;
        merged.extend(reports);
        first.get_or_insert((path, m));
    }
    let Some((_, m0)) = first else { bail!("no reports given") };
    if let Some(dir) = out {
        let meta = meta::Meta { stage: "report".into(), records: merged.len(), ..m0 };
        write_reports(dir, &merged, meta)?;
    }
    print!("{}", MetricReport::render_table(&merged));
    Ok(Outcome::default())
}

pub struct PipelinePlan {
    pub axes: Vec<AxisKey>,
    pub synthetic_human: usize,
}

pub fn pipeline(ctx: &Ctx, plan: &PipelinePlan) -> anyhow::Result<Outcome> {
    let mut outcome = Outcome::default();
    outcome.add(ingest(ctx, &[])?);
    outcome.add(split(ctx, None)?);
    outcome.add(gen_candidates(ctx)?);
    outcome.add(judge(ctx, &plan.axes, &[])?);
    if plan.synthetic_human > 0 {
        outcome.add(survey_synthesize(ctx, &plan.axes, plan.synthetic_human)?);
    }
    outcome.add(assemble_sft(ctx, &plan.axes, None, false)?);
    Ok(outcome)
}
