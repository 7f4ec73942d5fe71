//! One PASS/FAIL line per acceptance criterion, then a single assertion.
//!
//! Run with `cargo test -p refocus-cli --test acceptance -- --nocapture`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refocus_core::axes::load_taxonomy;
use refocus_core::backends::{LookupEmbedder, MockEmbedder, MockGenerator};
use refocus_core::candidates::{load_candidates, CandidateSet, GenerationConfig};
use refocus_core::corpus::extract_methods;
use refocus_core::finetune::{assemble, verify_manifest, AssembleError, AssembleRequest, CurriculumManifest};
use refocus_core::judge::{judge_corpus, load_selections, AxisSelection, JudgeError, JudgeJob, SelectionSource};
use refocus_core::metrics::{mann_whitney, token_match_f1, StatMode};
use refocus_core::{fsutil, AxisKey, Clock, CodeUnit, UnitId};
use refocus_survey::client::answer;
use refocus_survey::{
    CreateSessionRequest, CreateSurveyRequest, Page1, Page2, PoolUnit, ServiceConfig, SubmissionRequest, SurveyClient,
    SurveyKind, SurveyService,
};

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_refocus"));
    c.env_remove("SOURCE_DATE_EPOCH");
    c
}

fn run_bin(args: &[&str]) -> Check {
    let out = bin().args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("refocus {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
}

// ---------------------------------------------------------------- metrics

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let words = rng.random_range(1..12);
    (0..words)
        .map(|_| {
            let len = rng.random_range(1..9);
            (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// All-pairs cosine similarity with greedy max matching, written without
/// reference to the library.
fn brute_force_f1(cand: &[Vec<f64>], refr: &[Vec<f64>]) -> f64 {
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let side = |xs: &[Vec<f64>], ys: &[Vec<f64>]| {
        xs.iter().map(|x| ys.iter().map(|y| cos(x, y)).fold(f64::MIN, f64::max)).sum::<f64>() / xs.len() as f64
    };
    let (p, r) = (side(cand, refr), side(refr, cand));
    2.0 * p * r / (p + r)
}

fn metric_oracle_suite() -> Check {
    let start = Instant::now();
    let emb = MockEmbedder::new(7);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let s = random_text(&mut rng);
        let f = token_match_f1(&s, &s, &emb).map_err(|e| e.to_string())?.f1;
        ensure((f - 1.0).abs() <= 1e-9, || format!("identity: f1({s:?}, same) = {f}"))?;
        let t = random_text(&mut rng);
        let ab = token_match_f1(&s, &t, &emb).map_err(|e| e.to_string())?.f1;
        let ba = token_match_f1(&t, &s, &emb).map_err(|e| e.to_string())?.f1;
        ensure(ab == ba, || format!("symmetry: {ab} != {ba} for {s:?} / {t:?}"))?;
    }

    let h = std::f64::consts::FRAC_1_SQRT_2;
    let (a, b, c) = (vec![1.0, 0.0], vec![0.0, 1.0], vec![h, h]);
    let oracle = brute_force_f1(&[a.clone(), b.clone()], &[a.clone(), c.clone()]);
    let golden = 0.853_553_390_593_273_8;
    ensure((oracle - golden).abs() < 1e-12, || format!("oracle gives {oracle}"))?;
    let lookup = LookupEmbedder::new([("a", a), ("b", b), ("c", c)]);
    let got = token_match_f1("a b", "a c", &lookup).map_err(|e| e.to_string())?.f1;
    ensure((got - golden).abs() < 1e-12, || format!("golden case: {got} vs {golden}"))?;

    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))
}

// ---------------------------------------------------------------- statistics

fn mann_whitney_suite() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut problems = Vec::new();
    // 25 size pairs, 40 draws each
    for n1 in 2..=6 {
        for n2 in 2..=6 {
            for _ in 0..40 {
                let a: Vec<f64> = (0..n1).map(|_| rng.random::<f64>()).collect();
                let b: Vec<f64> = (0..n2).map(|_| rng.random::<f64>()).collect();
                let exact = mann_whitney(&a, &b, StatMode::Exact).map_err(|e| e.to_string())?;
                let normal = mann_whitney(&a, &b, StatMode::NormalApprox).map_err(|e| e.to_string())?;
                if exact.u1 + exact.u2 != (n1 * n2) as f64 {
                    problems.push(format!("rank-sum identity broken for ({n1},{n2}): {} + {}", exact.u1, exact.u2));
                }
                let gap = (exact.p_two_sided - normal.p_two_sided).abs();
                let w = worst.entry((n1, n2)).or_insert(0.0);
                *w = w.max(gap);
            }
        }
    }
    let third = mann_whitney(&[1.0, 2.0], &[3.0, 4.0], StatMode::Exact).map_err(|e| e.to_string())?;
    if third.p_two_sided != 1.0 / 3.0 {
        problems.push(format!("[1,2] vs [3,4] exact p = {}", third.p_two_sided));
    }
    let over: Vec<String> =
        worst.iter().filter(|(_, g)| **g > 0.05).map(|((x, y), g)| format!("({x},{y}) gap {g:.4}")).collect();
    if !over.is_empty() {
        problems.push(format!("exact vs normal differ by more than 0.05 for {}", over.join(", ")));
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(30) {
        problems.push(format!("took {elapsed:?}"));
    }
    ensure(problems.is_empty(), || problems.join("; "))
}

// ---------------------------------------------------------------- pipeline

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn count_lines(path: &Path) -> usize {
    fsutil::count_lines(path).unwrap_or(usize::MAX)
}

fn pipeline_shape() -> Check {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let args =
        ["pipeline", "--units", "50", "--n", "4", "--axes", "all", "--synthetic-human", "10", "--human-test", "2"];
    let mut dirs = Vec::new();
    for name in ["a", "b"] {
        let dir = root.path().join(name);
        let dir_s = dir.to_str().unwrap().to_string();
        let start = Instant::now();
        let mut full = vec!["--mock", "--run-dir", dir_s.as_str()];
        full.extend_from_slice(&args);
        run_bin(&full)?;
        let elapsed = start.elapsed();
        ensure(elapsed < Duration::from_secs(60), || format!("run {name} took {elapsed:?}"))?;
        dirs.push(dir);
    }
    let a = &dirs[0];

    let sets = load_candidates(&a.join("candidates/train.jsonl")).map_err(|e| e.to_string())?;
    ensure(sets.len() == 50, || format!("{} candidate sets, expected 50", sets.len()))?;
    ensure(sets.iter().all(|s| s.candidates.len() == 4), || "a candidate set without 4 candidates".into())?;
    let mut all_sets: Vec<CandidateSet> = sets.clone();
    all_sets.extend(load_candidates(&a.join("candidates/pool.jsonl")).map_err(|e| e.to_string())?);

    let mut ai_total = 0;
    for axis in AxisKey::ALL {
        let sel = load_selections(&a.join(format!("judge/{axis}.jsonl"))).map_err(|e| e.to_string())?;
        ensure(sel.len() == 50, || format!("{axis}: {} AI selections", sel.len()))?;
        ensure(sel.iter().all(|s| s.selected_index < 4 && s.source == SelectionSource::Ai), || {
            format!("{axis}: selection out of range")
        })?;
        ai_total += sel.len();

        let dir = a.join(format!("sft/{axis}"));
        let counts = [
            count_lines(&dir.join("ai.train.jsonl")),
            count_lines(&dir.join("human.train.jsonl")),
            count_lines(&dir.join("human.test.jsonl")),
        ];
        ensure(counts == [50, 8, 2], || format!("{axis}: line counts {counts:?}"))?;
        let manifest: CurriculumManifest = fsutil::read_json(&dir.join("manifest.json")).map_err(|e| e.to_string())?;
        ensure(manifest.counts.ai_train == 50, || format!("{axis}: manifest counts {:?}", manifest.counts))?;
        let report = verify_manifest(&dir.join("manifest.json"), &all_sets);
        ensure(report.is_clean(), || format!("{axis}: {:?}", report.violations))?;
    }
    ensure(ai_total == 7 * 50, || format!("{ai_total} AI selections"))?;

    let (fa, fb) = (files_under(&dirs[0]), files_under(&dirs[1]));
    ensure(fa == fb, || "runs produced different file sets".into())?;
    for rel in fa.iter().filter(|p| p.as_os_str() != "run.log") {
        let (x, y) = (std::fs::read(dirs[0].join(rel)).unwrap(), std::fs::read(dirs[1].join(rel)).unwrap());
        ensure(x == y, || format!("{} differs between runs", rel.display()))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- reserved set

fn reserved_overlap() -> Check {
    let units = refocus_core::corpus::synthetic::java_units(6, 5);
    let sets: Vec<CandidateSet> = units
        .iter()
        .map(|u| CandidateSet {
            unit_id: u.id.clone(),
            candidates: (0..4).map(|i| format!("candidate {i} for {}", u.id)).collect(),
            model_id: "fixture".into(),
            generation_config: GenerationConfig::default(),
            created_at: Clock::from_epoch_secs(0).unwrap().now(),
        })
        .collect();
    let reserved: HashSet<UnitId> = [units[2].id.clone()].into();

    // judge time: the shared id must fail before the backend is asked anything
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let backend = MockGenerator::with_responder(move |_, _| {
        c.fetch_add(1, Ordering::SeqCst);
        "Best: 1".into()
    });
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let job = JudgeJob::new(dir.path().join("out.jsonl"), dir.path().join("skip.jsonl"));
    let taxonomy = load_taxonomy(None).map_err(|e| e.to_string())?;
    match judge_corpus(&units, &sets, taxonomy.get(AxisKey::Precise), &reserved, &backend, &job) {
        Err(JudgeError::ReservedOverlap(ids)) => ensure(ids == vec![units[2].id.clone()], || format!("{ids:?}"))?,
        other => return Err(format!("judge accepted a reserved unit: {:?}", other.map(|o| o.records.len()))),
    }
    ensure(calls.load(Ordering::SeqCst) == 0, || "backend was called".into())?;

    // assemble time: an AI selection for a human-selected unit
    let at = Clock::from_epoch_secs(0).unwrap().now();
    let sel = |u: &CodeUnit, source: SelectionSource| AxisSelection {
        unit_id: u.id.clone(),
        axis: AxisKey::Precise,
        selected_index: 0,
        source,
        raw_response: Some("Best: 1".into()),
        rewrite: None,
        rationale: None,
        annotator_id: Some("h".into()),
        created_at: at,
    };
    let ai: Vec<AxisSelection> = units[..3].iter().map(|u| sel(u, SelectionSource::Ai)).collect();
    let human: Vec<AxisSelection> = units[2..].iter().map(|u| sel(u, SelectionSource::Human)).collect();
    let result = assemble(&AssembleRequest {
        axis: AxisKey::Precise,
        ai_selections: &ai,
        human_selections: &human,
        candidate_sets: &sets,
        corpus: &units,
        test_count: 1,
        seed: 1,
        base_model_id: "base".into(),
        hyperparameters: Default::default(),
        config_hash: None,
        out_dir: dir.path(),
    });
    match result {
        Err(AssembleError::OverlapBetweenSources(ids)) => {
            ensure(ids == vec![units[2].id.clone()], || format!("{ids:?}"))?
        }
        Err(e) => return Err(format!("unexpected assemble error: {e}")),
        Ok(_) => return Err("assemble accepted overlapping AI and human units".into()),
    }
    ensure(!dir.path().join("manifest.json").exists(), || "a manifest was written".into())
}

// ---------------------------------------------------------------- survey

struct ServerGuard(Child);

impl Drop for ServerGuard {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

const TOKEN: &str = "acceptance-operator";

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn survey_round_trip() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path = dir.path().join("survey.toml");
    std::fs::write(&cfg_path, "seed = 8\n[corpus]\nsynthetic_units = 60\nsurvey_pool = 50\n").unwrap();
    let cfg = cfg_path.to_str().unwrap();
    for stage in [&["ingest"][..], &["split"], &["gen-candidates"]] {
        let mut args = vec!["--config", cfg, "--mock"];
        args.extend_from_slice(stage);
        run_bin(&args)?;
    }

    let bind = format!("127.0.0.1:{}", free_port());
    let url = format!("http://{bind}");
    let child = bin()
        .args(["--config", cfg, "--mock", "survey", "serve", "--bind", &bind])
        .env("REFOCUS_OPERATOR_TOKEN", TOKEN)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let _guard = ServerGuard(child);
    let op = SurveyClient::new(&url, Some(TOKEN.into()));
    let anon = SurveyClient::new(&url, None);
    let ready = Instant::now();
    while op.status("none").err().and_then(|e| e.code().map(str::to_string)).is_none() {
        ensure(ready.elapsed() < Duration::from_secs(20), || "survey service did not start".into())?;
        std::thread::sleep(Duration::from_millis(50));
    }

    let out = bin()
        .args([
            "--config",
            cfg,
            "--mock",
            "survey",
            "prepare",
            "--kind",
            "axis",
            "--axes",
            "precise,logical",
            "--post",
            &url,
        ])
        .env("REFOCUS_OPERATOR_TOKEN", TOKEN)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("prepare: {}", String::from_utf8_lossy(&out.stderr)))?;
    let pool: CreateSurveyRequest =
        fsutil::read_json(&dir.path().join("survey/pools/precise.json")).map_err(|e| e.to_string())?;
    ensure(pool.units.len() == 50, || format!("pool has {} units", pool.units.len()))?;
    let by_id: HashMap<UnitId, PoolUnit> = pool.units.into_iter().map(|u| (u.unit_id.clone(), u)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut expected = Vec::new();
    for who in ["annotator-1", "annotator-2"] {
        let s = anon.create_session("precise", who).map_err(|e| e.to_string())?;
        ensure(s.total_tasks == 50, || format!("{} tasks", s.total_tasks))?;
        loop {
            let task = match anon.next_task(&s) {
                Ok(t) => t,
                Err(e) if e.code() == Some("session_complete") => break,
                Err(e) => return Err(e.to_string()),
            };
            let k = rng.random_range(0..task.options.len());
            expected.push((who, task.unit_id.clone(), task.options[k].text.clone()));
            let why = format!("option {k} states the behaviour most precisely at step {}", task.position);
            anon.submit(&s, &answer(&task.unit_id, k, "rewritten comment", &why)).map_err(|e| e.to_string())?;
        }
    }
    match anon.create_session("logical", "annotator-1") {
        Err(e) if e.code() == Some("already_enrolled") => {}
        other => return Err(format!("second-survey enrollment was not rejected: {:?}", other.map(|s| s.session_id))),
    }

    let out = bin()
        .args(["--config", cfg, "--mock", "survey", "export", "--url", &url, "--surveys", "precise"])
        .env("REFOCUS_OPERATOR_TOKEN", TOKEN)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("export: {}", String::from_utf8_lossy(&out.stderr)))?;
    let selections = load_selections(&dir.path().join("survey/exports/precise.jsonl")).map_err(|e| e.to_string())?;
    ensure(selections.len() == 100, || format!("{} exported selections", selections.len()))?;
    for (sel, (who, unit, text)) in selections.iter().zip(&expected) {
        ensure(sel.annotator_id.as_deref() == Some(*who) && &sel.unit_id == unit, || {
            format!("order mismatch at {unit}")
        })?;
        ensure(&by_id[unit].candidates[sel.selected_index] == text, || format!("{unit}: shuffle not inverted"))?;
    }

    shuffle_inversion_property()
}

/// 100 one-task sessions, each with its own random display order.
fn shuffle_inversion_property() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let svc = SurveyService::open(ServiceConfig::new(dir.path(), TOKEN)).map_err(|e| e.to_string())?;
    let units: Vec<PoolUnit> = (0..4)
        .map(|u| PoolUnit {
            unit_id: UnitId::from(format!("unit-{u}")),
            code: format!("int m{u}() {{ return {u}; }}"),
            candidates: (0..4).map(|c| format!("candidate {c} of unit {u}")).collect(),
        })
        .collect();
    let by_id: HashMap<UnitId, PoolUnit> = units.iter().map(|u| (u.unit_id.clone(), u.clone())).collect();
    svc.create_survey(CreateSurveyRequest {
        survey_id: Some("shuffle".into()),
        kind: SurveyKind::Axis,
        axis: Some(AxisKey::Condensing),
        methods_per_session: Some(1),
        options_per_task: None,
        units,
    })
    .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut expected = HashMap::new();
    let mut orders = HashSet::new();
    for i in 0..100 {
        let who = format!("p{i}");
        let s = svc
            .create_session(CreateSessionRequest { survey_id: "shuffle".into(), annotator_id: who.clone() })
            .map_err(|e| e.to_string())?;
        let task = svc.next_task(&s.session_id, Some(&s.session_token)).map_err(|e| e.to_string())?;
        orders.insert(task.options.iter().map(|o| o.text.clone()).collect::<Vec<_>>());
        let k = rng.random_range(0..4);
        expected.insert(who, (task.unit_id.clone(), task.options[k].text.clone()));
        let req = SubmissionRequest {
            unit_id: task.unit_id.clone(),
            page1: Some(Page1 { choice: Some(k), no_preference: false, elapsed_ms: 20_000 }),
            page2: Some(Page2 {
                rewrite: "short rewrite".into(),
                rationale: format!("participant {i} found option {k} the tersest"),
                elapsed_ms: 40_000,
            }),
        };
        svc.submit(&s.session_id, Some(&s.session_token), req).map_err(|e| e.to_string())?;
    }
    let export = svc.export("shuffle", false).map_err(|e| e.to_string())?;
    ensure(export.selections.len() == 100, || format!("{} selections", export.selections.len()))?;
    ensure(orders.len() > 1, || "display order never changed".into())?;
    for sel in &export.selections {
        let (unit, text) = &expected[sel.annotator_id.as_deref().unwrap_or_default()];
        ensure(&sel.unit_id == unit && &by_id[unit].candidates[sel.selected_index] == text, || {
            format!("{}: inverted to the wrong candidate", sel.unit_id)
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------------- corpus

fn corpus_extraction() -> Check {
    let two = include_str!("../../core/tests/fixtures/TwoMethods.java");
    let units = extract_methods(two, "TwoMethods.java").map_err(|e| e.to_string())?;
    let spans: Vec<(usize, usize)> = units.iter().map(|u| (u.origin.start, u.origin.end)).collect();
    ensure(spans == vec![(185, 270), (295, 341)], || format!("spans {spans:?}"))?;
    let doc = "/**\n     * Adds {@code n} to the running total.\n     *\n     * @param n amount to add\n     */";
    ensure(units[0].existing_comment.as_deref() == Some(doc), || format!("{:?}", units[0].existing_comment))?;
    ensure(units[1].existing_comment.is_none(), || "line comment attached as Javadoc".into())?;
    let braces = include_str!("../../core/tests/fixtures/StringBraces.java");
    let found = extract_methods(braces, "StringBraces.java").map_err(|e| e.to_string())?;
    ensure(found.is_empty(), || format!("{} units from literal braces", found.len()))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 6] = [
        ("metric oracle suite", metric_oracle_suite),
        ("mann-whitney exact/normal agreement and identities", mann_whitney_suite),
        ("pipeline shape at desk scale", pipeline_shape),
        ("reserved-set non-overlap", reserved_overlap),
        ("survey service headless round-trip", survey_round_trip),
        ("corpus extraction fixtures", corpus_extraction),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        match check() {
            Ok(()) => println!("PASS {name}"),
            Err(why) => {
                println!("FAIL {name}: {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
