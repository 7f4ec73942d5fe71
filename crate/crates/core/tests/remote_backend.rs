use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use refocus_core::backends::{
    BackendError, ChatCompletionsClient, Embedder, EmbeddingsClient, GenerationRequest, Generator, RemoteConfig,
    RetryPolicy,
};
use serde_json::{json, Value};

fn serve(router: Router) -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

fn config(addr: SocketAddr) -> RemoteConfig {
    let mut c = RemoteConfig::new(format!("http://{addr}/v1"), "test-model");
    c.retry = RetryPolicy { max_attempts: 5, base_delay: Duration::from_millis(2), factor: 2.0 };
    c
}

fn request(n: usize) -> GenerationRequest {
    GenerationRequest { system: None, prompt: "hi".into(), n, temperature: 0.0, max_tokens: 8, seed: None }
}

fn status_server(status: StatusCode) -> (SocketAddr, Arc<AtomicUsize>) {
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    let router = Router::new().route(
        "/v1/chat/completions",
        post(move || {
            let h = h.clone();
            async move {
                h.fetch_add(1, Ordering::SeqCst);
                (status, "nope")
            }
        }),
    );
    (serve(router), hits)
}

#[test]
fn server_errors_exhaust_retries() {
    let (addr, hits) = status_server(StatusCode::INTERNAL_SERVER_ERROR);
    let client = ChatCompletionsClient::new(config(addr)).unwrap();
    let err = client.generate(&request(1)).unwrap_err();
    assert!(matches!(err, BackendError::BackendUnreachable { attempts: 5, .. }), "{err:?}");
    assert_eq!(hits.load(Ordering::SeqCst), 5);
}

#[test]
fn rate_limit_is_reported() {
    let (addr, hits) = status_server(StatusCode::TOO_MANY_REQUESTS);
    let client = ChatCompletionsClient::new(config(addr)).unwrap();
    assert_eq!(client.generate(&request(1)).unwrap_err(), BackendError::RateLimited { attempts: 5 });
    assert_eq!(hits.load(Ordering::SeqCst), 5);
}

#[test]
fn client_errors_are_not_retried() {
    let (addr, hits) = status_server(StatusCode::BAD_REQUEST);
    let client = ChatCompletionsClient::new(config(addr)).unwrap();
    assert!(matches!(client.generate(&request(1)), Err(BackendError::Rejected { status: 400, .. })));
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn unreachable_host() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let client = ChatCompletionsClient::new(config(addr)).unwrap();
    assert!(matches!(client.generate(&request(1)), Err(BackendError::BackendUnreachable { attempts: 5, .. })));
}

#[test]
fn chat_tops_up_short_responses_and_sends_auth() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let router = Router::new().route(
        "/v1/chat/completions",
        post(move |headers: HeaderMap, Json(body): Json<Value>| {
            let c = c.clone();
            async move {
                assert_eq!(headers["authorization"], "Bearer sekrit");
                assert_eq!(body["model"], "test-model");
                assert_eq!(body["messages"][0]["role"], "user");
                let i = c.fetch_add(1, Ordering::SeqCst);
                Json(json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": format!("c{i}")}}]}))
            }
        }),
    );
    let addr = serve(router);
    std::env::set_var("REFOCUS_TEST_KEY", "sekrit");
    let mut cfg = config(addr);
    cfg.api_key_env = Some("REFOCUS_TEST_KEY".into());
    let client = ChatCompletionsClient::new(cfg).unwrap();
    let resp = client.generate(&request(3)).unwrap();
    assert_eq!(resp.completions, vec!["c0", "c1", "c2"]);
    assert_eq!(resp.model_id, "test-model");
}

#[test]
fn embeddings_are_ordered_and_normalized() {
    let router = Router::new().route(
        "/v1/embeddings",
        post(|Json(body): Json<Value>| async move {
            let inputs = body["input"].as_array().unwrap().clone();
            let data: Vec<Value> = inputs
                .iter()
                .enumerate()
                .rev()
                .map(|(i, s)| json!({"index": i, "embedding": [s.as_str().unwrap().len() as f64, 1.0]}))
                .collect();
            Json(json!({"data": data}))
        }),
    );
    let client = EmbeddingsClient::new(config(serve(router))).unwrap();
    let s = client.embed_sentence(&["abc", "a"]).unwrap();
    assert_eq!(s.dim, 2);
    let expected = [3.0 / 10f64.sqrt(), 1.0 / 10f64.sqrt()];
    assert!((s.vectors[0][0] - expected[0]).abs() < 1e-12 && (s.vectors[0][1] - expected[1]).abs() < 1e-12);
    assert!((s.vectors[1][0] - 1.0 / 2f64.sqrt()).abs() < 1e-12);

    let t = client.embed_tokens(&["ab cd.", "x"]).unwrap();
    assert_eq!(t[0].vectors.len(), 3);
    assert_eq!(t[1].vectors.len(), 1);
}
