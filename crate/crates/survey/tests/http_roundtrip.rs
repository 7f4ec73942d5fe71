use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use refocus_core::axes::AxisKey;
use refocus_core::judge::SelectionSource;
use refocus_core::UnitId;
use refocus_survey::client::answer;
use refocus_survey::*;

fn start(dir: &std::path::Path) -> SocketAddr {
    let svc = Arc::new(SurveyService::open(ServiceConfig::new(dir, "operator-secret")).unwrap());
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            serve(listener, svc).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

fn pool(n: usize) -> Vec<PoolUnit> {
    (0..n)
        .map(|u| PoolUnit {
            unit_id: UnitId::from(format!("unit-{u}")),
            code: format!("void m{u}() {{}}"),
            candidates: (0..4).map(|c| format!("candidate {c} of unit {u}")).collect(),
        })
        .collect()
}

fn axis_request(id: &str, axis: AxisKey, units: Vec<PoolUnit>) -> CreateSurveyRequest {
    CreateSurveyRequest {
        survey_id: Some(id.into()),
        kind: SurveyKind::Axis,
        axis: Some(axis),
        methods_per_session: None,
        options_per_task: None,
        units,
    }
}

#[test]
fn two_annotators_fifty_tasks_each() {
    let dir = tempfile::tempdir().unwrap();
    let addr = start(dir.path());
    let base = format!("http://{addr}");
    let op = SurveyClient::new(&base, Some("operator-secret".into()));
    let anon = SurveyClient::new(&base, None);
    let units = pool(50);
    let by_id: HashMap<_, _> = units.iter().map(|u| (u.unit_id.clone(), u.clone())).collect();

    let err = anon.create_survey(&axis_request("precise", AxisKey::Precise, units.clone())).unwrap_err();
    assert_eq!(err.code(), Some("unauthorized"));
    op.create_survey(&axis_request("precise", AxisKey::Precise, units.clone())).unwrap();
    op.create_survey(&axis_request("logical", AxisKey::Logical, units)).unwrap();

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut expected = Vec::new();
    for who in ["ann-1", "ann-2"] {
        let s = anon.create_session("precise", who).unwrap();
        assert_eq!(s.total_tasks, 50);
        loop {
            let task = match anon.next_task(&s) {
                Ok(t) => t,
                Err(e) if e.code() == Some("session_complete") => break,
                Err(e) => panic!("{e}"),
            };
            assert_eq!(task.options.len(), 4);
            let k = rng.random_range(0..4);
            expected.push((who.to_string(), task.unit_id.clone(), task.options[k].text.clone()));
            let ack = anon
                .submit(
                    &s,
                    &answer(
                        &task.unit_id,
                        k,
                        "rewritten",
                        &format!("option {k} is the most precise for task {}", task.position),
                    ),
                )
                .unwrap();
            assert_eq!(ack.completed, task.position);
        }
    }

    let err = anon.create_session("logical", "ann-1").unwrap_err();
    assert_eq!(err.code(), Some("already_enrolled"));

    assert_eq!(anon.export("precise", false).unwrap_err().code(), Some("unauthorized"));
    let export = op.export("precise", false).unwrap();
    assert_eq!(export.selections.len(), 100);
    assert_eq!(export.kind, SurveyKind::Axis);
    for (sel, (who, unit, text)) in export.selections.iter().zip(&expected) {
        assert_eq!(sel.annotator_id.as_deref(), Some(who.as_str()));
        assert_eq!(&sel.unit_id, unit);
        assert_eq!(sel.axis, AxisKey::Precise);
        assert_eq!(sel.source, SelectionSource::Human);
        assert_eq!(&by_id[unit].candidates[sel.selected_index], text);
    }

    let status = op.status("precise").unwrap();
    assert_eq!(status.sessions.len(), 2);
    assert!(status.sessions.iter().all(|s| s.completed == 50));
}

#[test]
fn http_errors_carry_codes() {
    let dir = tempfile::tempdir().unwrap();
    let base = format!("http://{}", start(dir.path()));
    let op = SurveyClient::new(&base, Some("operator-secret".into()));
    op.create_survey(&axis_request("s", AxisKey::Condensing, pool(50))).unwrap();
    let s = op.create_session("s", "a").unwrap();
    let task = op.next_task(&s).unwrap();

    let empty = answer(&task.unit_id, 0, "x", "");
    match op.submit(&s, &empty).unwrap_err() {
        ClientError::Api { status, code, field, .. } => {
            assert_eq!((status, code.as_str(), field.as_deref()), (422, "validation_failed", Some("rationale")));
        }
        e => panic!("{e}"),
    }
    let wrong = answer(&UnitId::from("other"), 0, "x", "a fine reason here");
    assert_eq!(op.submit(&s, &wrong).unwrap_err().code(), Some("out_of_order"));

    let forged = SessionCreated { session_token: "forged".into(), ..s.clone() };
    assert_eq!(op.next_task(&forged).unwrap_err().code(), Some("invalid_session_token"));
    assert_eq!(op.create_session("missing", "b").unwrap_err().code(), Some("unknown_survey"));

    let mut small = axis_request("tiny", AxisKey::Condensing, pool(3));
    small.methods_per_session = Some(5);
    assert_eq!(op.create_survey(&small).unwrap_err().code(), Some("pool_exhausted"));
}
