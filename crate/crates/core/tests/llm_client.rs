//! Chat-completion client against a local mock endpoint.

use std::collections::{HashSet, VecDeque};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use trendforge::description::{
    describe_llm, rephrase_llm, DescriptionError, Generator, LlmClient, LlmConfig, PromptTemplate,
};
use trendforge::trend_summary::TrendSummary;

#[derive(Default)]
struct Mock {
    /// Scripted (status, body) replies; when empty the server echoes the
    /// prompt upper-cased.
    script: Mutex<VecDeque<(u16, String)>>,
    requests: Mutex<Vec<(Option<String>, Value)>>,
}

fn reply(text: &str) -> String {
    json!({
        "model": "mock-1",
        "choices": [{ "message": { "role": "assistant", "content": text } }],
        "usage": { "prompt_tokens": 10, "completion_tokens": 4 }
    })
    .to_string()
}

async fn complete(State(mock): State<Arc<Mock>>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, String) {
    let auth = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    mock.requests.lock().unwrap().push((auth, body.clone()));
    if let Some((status, body)) = mock.script.lock().unwrap().pop_front() {
        return (StatusCode::from_u16(status).unwrap(), body);
    }
    let prompt = body["messages"][0]["content"].as_str().unwrap_or_default();
    (StatusCode::OK, reply(&prompt.to_uppercase()))
}

struct Server {
    mock: Arc<Mock>,
    addr: SocketAddr,
    _runtime: tokio::runtime::Runtime,
}

impl Server {
    fn start(script: Vec<(u16, String)>) -> Server {
        let mock = Arc::new(Mock {
            script: Mutex::new(script.into()),
            ..Mock::default()
        });
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(1)
            .enable_all()
            .build()
            .unwrap();
        let app = Router::new()
            .route("/v1/chat/completions", post(complete))
            .with_state(mock.clone());
        let listener = runtime
            .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
            .unwrap();
        let addr = listener.local_addr().unwrap();
        runtime.spawn(async move { axum::serve(listener, app).await.unwrap() });
        Server {
            mock,
            addr,
            _runtime: runtime,
        }
    }

    fn client(&self) -> LlmClient {
        let mut config = LlmConfig::new(format!("http://{}/v1/", self.addr), "mock-model");
        config.backoff = Duration::from_millis(1);
        config.api_key = Some("secret".into());
        LlmClient::new(config).unwrap()
    }

    fn hits(&self) -> usize {
        self.mock.requests.lock().unwrap().len()
    }
}

fn summary() -> TrendSummary {
    TrendSummary {
        window_id: "000007".into(),
        stride: 4,
        kernel_size: 5,
        values: (0..25).map(|i| i as f64 / 10.0).collect(),
    }
}

#[test]
fn pass_through() {
    let server = Server::start(vec![(200, reply("The trend rises steadily."))]);
    let d = describe_llm(&server.client(), &summary(), &PromptTemplate::default()).unwrap();
    assert_eq!(d.text, "The trend rises steadily.");
    assert_eq!(d.generator, Generator::Llm);
    assert_eq!(d.model_id, "mock-1");
    assert_eq!(d.summary_id, "000007");

    let requests = server.mock.requests.lock().unwrap();
    let (auth, body) = &requests[0];
    assert_eq!(auth.as_deref(), Some("Bearer secret"));
    assert_eq!(body["model"], "mock-model");
    let prompt = body["messages"][0]["content"].as_str().unwrap();
    assert!(prompt.contains("[0.0, 0.1, 0.2,"));
    assert_eq!(body["messages"][0]["role"], "user");
}

#[test]
fn rate_limited_after_three_attempts() {
    let server = Server::start(vec![(429, "slow down".into()); 3]);
    let err = describe_llm(&server.client(), &summary(), &PromptTemplate::default()).unwrap_err();
    assert!(matches!(err, DescriptionError::RateLimited(3)), "{err:?}");
    assert_eq!(server.hits(), 3);
}

#[test]
fn transient_failure_is_retried() {
    let server = Server::start(vec![(503, "busy".into()), (429, "later".into()), (200, reply("Flat."))]);
    let d = describe_llm(&server.client(), &summary(), &PromptTemplate::default()).unwrap();
    assert_eq!(d.text, "Flat.");
    assert_eq!(server.hits(), 3);
}

#[test]
fn server_errors_exhaust_to_unavailable() {
    let server = Server::start(vec![(500, "boom".into()); 3]);
    let err = describe_llm(&server.client(), &summary(), &PromptTemplate::default()).unwrap_err();
    assert!(matches!(err, DescriptionError::Unavailable { attempts: 3, .. }), "{err:?}");
}

#[test]
fn empty_completion() {
    let server = Server::start(vec![(200, reply(""))]);
    let err = describe_llm(&server.client(), &summary(), &PromptTemplate::default()).unwrap_err();
    assert!(matches!(err, DescriptionError::EmptyCompletion), "{err:?}");
}

#[test]
fn auth_failure_is_not_retried() {
    let server = Server::start(vec![(401, "bad key".into()), (200, reply("unused"))]);
    let err = describe_llm(&server.client(), &summary(), &PromptTemplate::default()).unwrap_err();
    assert!(matches!(err, DescriptionError::AuthError(401)), "{err:?}");
    assert_eq!(server.hits(), 1);
}

#[test]
fn nine_distinct_paraphrases() {
    let server = Server::start(Vec::new());
    let client = server.client();
    let original = describe_llm(&client, &summary(), &PromptTemplate::default()).unwrap();
    let texts: HashSet<String> = (0..9)
        .map(|v| {
            let r = rephrase_llm(&client, &original, v).unwrap();
            assert_eq!(r.generator, Generator::LlmRephrased);
            assert_ne!(r.text, original.text);
            r.text
        })
        .collect();
    assert_eq!(texts.len(), 9);
}

#[test]
fn transcript_records_every_exchange() {
    let server = Server::start(vec![(429, "wait".into()), (200, reply("Up."))]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("transcript.jsonl");
    let mut config = LlmConfig::new(format!("http://{}/v1", server.addr), "mock-model");
    config.backoff = Duration::from_millis(1);
    config.transcript = Some(path.clone());
    let client = LlmClient::new(config).unwrap();
    describe_llm(&client, &summary(), &PromptTemplate::default()).unwrap();
    let lines: Vec<Value> = std::fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["status"], 429);
    assert_eq!(lines[1]["status"], 200);
    assert_eq!(lines[1]["request"]["model"], "mock-model");
}
