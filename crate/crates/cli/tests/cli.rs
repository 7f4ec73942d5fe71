use std::net::SocketAddr;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::http::StatusCode;
use axum::routing::post;
use axum::Router;
use serde_json::{json, Value};

fn refocus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_refocus")).args(args).env_remove("SOURCE_DATE_EPOCH").output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(path: &Path, text: &str) -> String {
    std::fs::write(path, text).unwrap();
    path.to_str().unwrap().to_string()
}

/// Counts every request and answers all of them with `status`.
fn counting_server(status: StatusCode) -> (SocketAddr, Arc<AtomicUsize>) {
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    let router = Router::new().fallback(post(move || {
        let h = h.clone();
        async move {
            h.fetch_add(1, Ordering::SeqCst);
            (status, "nope")
        }
    }));
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    (rx.recv().unwrap(), hits)
}

const BASE: &str = "seed = 3\n[corpus]\nsynthetic_units = 24\nsurvey_pool = 4\n";

fn remote_section(role: &str, addr: SocketAddr) -> String {
    format!(
        "[backends.{role}]\nkind = \"remote\"\n[backends.{role}.remote]\nbase_url = \"http://{addr}/v1\"\nmodel = \"m\"\n\
         [backends.{role}.remote.retry]\nmax_attempts = 1\nbase_delay = 1\nfactor = 1.0\n"
    )
}

fn prepared_run(dir: &Path) -> String {
    let cfg = write(&dir.join("mock.toml"), BASE);
    for stage in [&["ingest"][..], &["split"], &["gen-candidates"]] {
        let mut args = vec!["--config", cfg.as_str(), "--mock"];
        args.extend_from_slice(stage);
        let out = refocus(&args);
        assert!(out.status.success(), "{stage:?}: {}", stderr(&out));
    }
    cfg
}

fn first_ids(path: &Path, field: &str) -> Vec<String> {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v[field].as_array().unwrap().iter().map(|x| x.as_str().unwrap().to_string()).collect()
}

#[test]
fn config_problems_are_all_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir.path().join("bad.toml"),
        "concurrency = 0\n[candidates]\nn = 1\n[judge]\naxes = \"precise,verbose\"\n[survey]\nbind = \"nowhere\"\n",
    );
    let out = refocus(&["--config", &cfg, "split"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("invalid configuration (4 problems)"), "{err}");
    for needle in ["concurrency", "candidates.n", "verbose", "nowhere"] {
        assert!(err.contains(needle), "missing {needle}: {err}");
    }
}

#[test]
fn unknown_config_keys_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("typo.toml"), "[candidates]\ntemp = 0.5\n");
    let out = refocus(&["--config", &cfg, "split"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("temp"));
}

#[test]
fn judge_refuses_reserved_units_before_any_request() {
    let dir = tempfile::tempdir().unwrap();
    prepared_run(dir.path());
    let (addr, hits) = counting_server(StatusCode::INTERNAL_SERVER_ERROR);
    let cfg = write(&dir.path().join("remote.toml"), &format!("{BASE}{}", remote_section("judge", addr)));
    let train = first_ids(&dir.path().join("corpus/split.json"), "train");
    let reserved = write(&dir.path().join("reserved.txt"), &format!("{}\n", train[3]));

    let out = refocus(&["--config", &cfg, "judge", "--axes", "precise", "--reserved", &reserved]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains(&train[3]), "{}", stderr(&out));
    assert_eq!(hits.load(Ordering::SeqCst), 0);
    assert!(!dir.path().join("judge/precise.jsonl").exists());
}

#[test]
fn assemble_refuses_ai_selections_for_pool_units() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = prepared_run(dir.path());
    for args in [
        vec!["--config", cfg.as_str(), "--mock", "judge", "--axes", "precise"],
        vec!["--config", cfg.as_str(), "--mock", "survey", "synthesize", "--count", "4", "--axes", "precise"],
        vec!["--config", cfg.as_str(), "--mock", "assemble-sft", "--axes", "precise", "--test-count", "1"],
    ] {
        let out = refocus(&args);
        assert!(out.status.success(), "{args:?}: {}", stderr(&out));
    }

    let pool = first_ids(&dir.path().join("corpus/split.json"), "test");
    let path = dir.path().join("judge/precise.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    lines[0]["unit_id"] = json!(pool[0]);
    let tampered: Vec<String> = lines.iter().map(Value::to_string).collect();
    std::fs::write(&path, tampered.join("\n") + "\n").unwrap();

    let out = refocus(&["--config", &cfg, "--mock", "assemble-sft", "--axes", "precise", "--test-count", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("human-reserved"), "{}", stderr(&out));
}

#[test]
fn backend_failures_are_skipped_with_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    prepared_run(dir.path());
    std::fs::remove_file(dir.path().join("candidates/train.jsonl")).unwrap();
    let (addr, hits) = counting_server(StatusCode::INTERNAL_SERVER_ERROR);
    let cfg = write(&dir.path().join("remote.toml"), &format!("{BASE}{}", remote_section("generator", addr)));

    let out = refocus(&["--config", &cfg, "gen-candidates"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let skipped = std::fs::read_to_string(dir.path().join("candidates/train.skipped.jsonl")).unwrap();
    assert_eq!(skipped.lines().count(), 20);
    assert_eq!(hits.load(Ordering::SeqCst), 20);
    // the pool partition was complete from the earlier run and is resumed, not regenerated
    assert_eq!(std::fs::read_to_string(dir.path().join("candidates/pool.skipped.jsonl")).unwrap(), "");
}

fn predictions(path: &Path, model: &str, tuned: bool) -> String {
    let words = ["returns", "the", "sum", "of", "two", "values", "for", "given", "list", "index"];
    let mut lines = Vec::new();
    for i in 0..8 {
        let reference = format!("{} {} {}", words[i], words[(i + 3) % 10], words[(i + 5) % 10]);
        let text = if tuned { reference.clone() } else { format!("{} {}", words[(i + 1) % 10], words[(i + 7) % 10]) };
        lines.push(
            json!({"unit_id": format!("u{i}"), "axis": "precise", "model_id": model, "text": text, "reference": reference})
                .to_string(),
        );
    }
    write(path, &(lines.join("\n") + "\n"))
}

#[test]
fn report_refuses_reports_from_different_corpora() {
    let root = tempfile::tempdir().unwrap();
    let mut evals = Vec::new();
    for seed in ["1", "2"] {
        let dir = root.path().join(format!("run{seed}"));
        std::fs::create_dir_all(&dir).unwrap();
        let cfg = write(&dir.join("mock.toml"), BASE);
        for stage in [&["ingest"][..], &["split"]] {
            let mut args = vec!["--config", cfg.as_str(), "--mock", "--seed", seed];
            args.extend_from_slice(stage);
            assert!(refocus(&args).status.success());
        }
        let base = predictions(&dir.join("base.jsonl"), "base", false);
        let tuned = predictions(&dir.join("tuned.jsonl"), "tuned", true);
        let out =
            refocus(&["--config", &cfg, "--mock", "--seed", seed, "evaluate", "--base", &base, "--tuned", &tuned]);
        assert!(out.status.success(), "{}", stderr(&out));
        let table = String::from_utf8_lossy(&out.stdout).into_owned();
        assert!(table.contains("token_f1") || table.contains("precise"), "{table}");
        assert!(dir.join("eval/report.txt").exists());
        evals.push(dir.join("eval").to_str().unwrap().to_string());
    }

    let same = refocus(&["report", &evals[0], &evals[0]]);
    assert!(same.status.success(), "{}", stderr(&same));

    let mixed = refocus(&["report", &evals[0], &evals[1]]);
    assert_eq!(mixed.status.code(), Some(1));
    assert!(stderr(&mixed).contains("refusing to merge"), "{}", stderr(&mixed));
}
