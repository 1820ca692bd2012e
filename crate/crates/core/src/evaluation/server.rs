//! HTTP API for raters. Candidates are only ever exposed by slot letter; the
//! server resolves slots to models when scores arrive. Model ids appear only
//! in `/api/summary` once every triple is scored.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Component, Path as FsPath, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{raters_in, slot_label, summarize_scores, EvalError, EvalSet, EvalSplit, ModelScore, ScoreRecord, ScoreStore};
use crate::emitter::render_plot;

pub const TOKEN_HEADER: &str = "x-rater-token";

#[derive(Debug, Clone, Default)]
pub struct ServeConfig {
    /// Raters expected to cover every item. Empty means whoever has scored.
    pub raters: Vec<String>,
    /// Shared token required on every API call when set.
    pub token: Option<String>,
    /// Directory of static UI assets served at `/`.
    pub static_dir: Option<PathBuf>,
}

struct AppState {
    set: EvalSet,
    store: Mutex<ScoreStore>,
    config: ServeConfig,
    plots: Mutex<HashMap<String, Bytes>>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Progress {
    pub completed: usize,
    pub total: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SlotView {
    pub slot: String,
    pub text: String,
    /// This rater's existing score for the slot.
    pub score: Option<u8>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct NextResponse {
    pub done: bool,
    pub item_id: Option<String>,
    pub plot_url: Option<String>,
    pub slots: Vec<SlotView>,
    pub progress: Progress,
}

#[derive(Debug, Deserialize)]
struct ScoreBody {
    item_id: String,
    rater_id: String,
    slot: String,
    score: i64,
    #[serde(default)]
    overwrite: bool,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SummaryProgress {
    pub raters: usize,
    pub scored: usize,
    pub required: usize,
    pub by_split: Vec<SplitProgress>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SplitProgress {
    pub split: EvalSplit,
    pub scored: usize,
    pub required: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SummaryResponse {
    pub complete: bool,
    pub progress: SummaryProgress,
    pub scores: Option<Vec<ModelScore>>,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

impl AppState {
    fn raters(&self, records: &[ScoreRecord]) -> Vec<String> {
        if self.config.raters.is_empty() {
            raters_in(records)
        } else {
            self.config.raters.clone()
        }
    }

    fn summary(&self) -> SummaryResponse {
        let records = self.store.lock().expect("store lock").records();
        let raters = self.raters(&records);
        summary_report(&self.set, &records, &raters)
    }
}

/// Progress for `raters` over `set`, with normalized scores once every
/// (item, rater, candidate) triple is scored.
pub fn summary_report(set: &EvalSet, records: &[ScoreRecord], raters: &[String]) -> SummaryResponse {
    let mut by_split: Vec<SplitProgress> = Vec::new();
    for split in [EvalSplit::Test, EvalSplit::Holdout] {
        let items: Vec<_> = set.items.iter().filter(|i| i.split == split).collect();
        if items.is_empty() {
            continue;
        }
        let required: usize = items.iter().map(|i| i.candidates.len()).sum::<usize>() * raters.len();
        let scored = records
            .iter()
            .filter(|r| raters.contains(&r.rater_id))
            .filter(|r| {
                items
                    .iter()
                    .any(|i| i.item_id == r.item_id && i.candidates.iter().any(|c| c.model_id == r.model_id))
            })
            .count();
        by_split.push(SplitProgress { split, scored, required });
    }
    let progress = SummaryProgress {
        raters: raters.len(),
        scored: by_split.iter().map(|s| s.scored).sum(),
        required: by_split.iter().map(|s| s.required).sum(),
        by_split,
    };
    let scores = if raters.is_empty() {
        None
    } else {
        summarize_scores(records, set, raters).ok()
    };
    SummaryResponse {
        complete: scores.is_some(),
        progress,
        scores,
    }
}

async fn next(State(state): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> Response {
    let Some(rater) = q.get("rater").filter(|r| !r.is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "missing rater");
    };
    let store = state.store.lock().expect("store lock");
    let mut completed = 0;
    let mut pending = None;
    for item in &state.set.items {
        let perm = state.set.permutation(item, rater);
        let slots: Vec<SlotView> = perm
            .iter()
            .enumerate()
            .map(|(k, &c)| SlotView {
                slot: slot_label(k),
                text: item.candidates[c].text.clone(),
                score: store
                    .get(&item.item_id, rater, &item.candidates[c].model_id)
                    .map(|r| r.score),
            })
            .collect();
        if slots.iter().all(|s| s.score.is_some()) {
            completed += 1;
        } else if pending.is_none() {
            pending = Some((item.item_id.clone(), slots));
        }
    }
    let progress = Progress {
        completed,
        total: state.set.items.len(),
    };
    let body = match pending {
        Some((item_id, slots)) => NextResponse {
            done: false,
            plot_url: Some(format!("/api/item/{item_id}/plot")),
            item_id: Some(item_id),
            slots,
            progress,
        },
        None => NextResponse {
            done: true,
            item_id: None,
            plot_url: None,
            slots: Vec::new(),
            progress,
        },
    };
    Json(body).into_response()
}

async fn plot(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let Some(item) = state.set.item(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown item {id}"));
    };
    let cached = state.plots.lock().expect("plot cache").get(&id).cloned();
    let bytes = match cached {
        Some(b) => b,
        None => match render_plot(&item.values) {
            Ok(png) => {
                let b = Bytes::from(png);
                state.plots.lock().expect("plot cache").insert(id, b.clone());
                b
            }
            Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        },
    };
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn score(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let body: ScoreBody = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid body: {e}")),
    };
    if !(0..=2).contains(&body.score) {
        return error(StatusCode::BAD_REQUEST, format!("score {} is outside 0..=2", body.score));
    }
    let model_id = match state.set.resolve_slot(&body.item_id, &body.rater_id, &body.slot) {
        Ok(m) => m,
        Err(EvalError::UnknownItem(id)) => return error(StatusCode::NOT_FOUND, format!("unknown item {id}")),
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let record = ScoreRecord {
        item_id: body.item_id,
        rater_id: body.rater_id,
        slot: body.slot,
        model_id,
        score: body.score as u8,
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
    };
    let overwrite = body.overwrite;
    let writer = state.clone();
    let result = tokio::task::spawn_blocking(move || writer.store.lock().expect("store lock").record(record, overwrite)).await;
    match result {
        Ok(Ok(ack)) => Json(ack).into_response(),
        Ok(Err(EvalError::AlreadyScored { existing, .. })) => (
            StatusCode::CONFLICT,
            Json(json!({ "error": "slot already scored", "stored_score": existing })),
        )
            .into_response(),
        Ok(Err(e @ (EvalError::InvalidScore(_) | EvalError::EmptyRater))) => error(StatusCode::BAD_REQUEST, e.to_string()),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn summary(State(state): State<Arc<AppState>>) -> Response {
    Json(state.summary()).into_response()
}

async fn require_token(State(state): State<Arc<AppState>>, headers: HeaderMap, request: Request, next: Next) -> Response {
    if let Some(expected) = &state.config.token {
        let given = headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok());
        if given != Some(expected.as_str()) {
            return error(StatusCode::UNAUTHORIZED, "missing or wrong rater token");
        }
    }
    next.run(request).await
}

fn content_type(path: &FsPath) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("png") => "image/png",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

async fn static_file(State(state): State<Arc<AppState>>, request: Request) -> Response {
    let Some(root) = &state.config.static_dir else {
        return error(StatusCode::NOT_FOUND, "not found");
    };
    let rel = request.uri().path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let rel = FsPath::new(rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return error(StatusCode::NOT_FOUND, "not found");
    }
    let path = root.join(rel);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => error(StatusCode::NOT_FOUND, "not found"),
    }
}

/// Router over an eval set and an opened store.
pub fn router(set: EvalSet, store: ScoreStore, config: ServeConfig) -> Router {
    let state = Arc::new(AppState {
        set,
        store: Mutex::new(store),
        config,
        plots: Mutex::new(HashMap::new()),
    });
    let api = Router::new()
        .route("/api/next", get(next))
        .route("/api/item/{id}/plot", get(plot))
        .route("/api/score", post(score))
        .route("/api/summary", get(summary))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    api.fallback(static_file).with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(router: Router, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::tests::fixture;
    use axum::body::Body;
    use axum::http::Request as HttpRequest;
    use tower::ServiceExt;

    async fn call(app: &Router, req: HttpRequest<Body>) -> (StatusCode, Vec<u8>) {
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let body = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
        (status, body.to_vec())
    }

    fn get_req(uri: &str) -> HttpRequest<Body> {
        HttpRequest::get(uri).body(Body::empty()).unwrap()
    }

    fn post_score(body: serde_json::Value) -> HttpRequest<Body> {
        HttpRequest::post("/api/score")
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap()
    }

    #[tokio::test]
    async fn full_protocol_with_blinding() {
        let dir = tempfile::tempdir().unwrap();
        let set = fixture(3, &["alpha-model", "beta-model", "gamma-model", "delta-model"]);
        let models: Vec<String> = set.model_ids().into_iter().collect();
        let app = router(set.clone(), ScoreStore::open(dir.path()).unwrap(), ServeConfig::default());
        let leaks = |body: &[u8]| {
            let text = String::from_utf8_lossy(body);
            models.iter().any(|m| text.contains(m.as_str()))
        };

        let (status, body) = call(&app, get_req("/api/next?rater=r1")).await;
        assert_eq!(status, StatusCode::OK);
        assert!(!leaks(&body));
        let first: NextResponse = serde_json::from_slice(&body).unwrap();
        assert_eq!(first.item_id.as_deref(), Some("item-0001"));
        let labels: Vec<&str> = first.slots.iter().map(|s| s.slot.as_str()).collect();
        assert_eq!(labels, vec!["A", "B", "C", "D"]);
        // only slot, text and score keys
        let raw: serde_json::Value = serde_json::from_slice(&body).unwrap();
        for slot in raw["slots"].as_array().unwrap() {
            let keys: Vec<&String> = slot.as_object().unwrap().keys().collect();
            assert_eq!(keys.len(), 3);
        }

        let (status, body) = call(&app, get_req("/api/summary")).await;
        assert_eq!(status, StatusCode::OK);
        assert!(!leaks(&body));

        let (status, body) = call(&app, get_req("/api/item/item-0002/plot")).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(&body[1..4], b"PNG");
        assert_eq!(call(&app, get_req("/api/item/nope/plot")).await.0, StatusCode::NOT_FOUND);

        for rater in ["r1", "r2"] {
            loop {
                let (_, body) = call(&app, get_req(&format!("/api/next?rater={rater}"))).await;
                let next: NextResponse = serde_json::from_slice(&body).unwrap();
                if next.done {
                    assert_eq!(next.progress.completed, 3);
                    break;
                }
                for s in &next.slots {
                    let (status, body) = call(
                        &app,
                        post_score(json!({"item_id": next.item_id, "rater_id": rater, "slot": s.slot, "score": 2})),
                    )
                    .await;
                    assert_eq!(status, StatusCode::OK);
                    assert!(!leaks(&body));
                }
            }
        }
        let (_, body) = call(&app, get_req("/api/summary")).await;
        let summary: SummaryResponse = serde_json::from_slice(&body).unwrap();
        assert!(summary.complete);
        let scores = summary.scores.unwrap();
        assert_eq!(scores.len(), 8);
        assert!(scores.iter().all(|s| s.normalized == 1.0));
    }

    #[tokio::test]
    async fn score_errors() {
        let dir = tempfile::tempdir().unwrap();
        let app = router(fixture(1, &["m1", "m2"]), ScoreStore::open(dir.path()).unwrap(), ServeConfig::default());
        let base = json!({"item_id": "item-0001", "rater_id": "r", "slot": "A", "score": 1});
        assert_eq!(call(&app, post_score(base.clone())).await.0, StatusCode::OK);

        let mut bad = base.clone();
        bad["score"] = json!(3);
        assert_eq!(call(&app, post_score(bad)).await.0, StatusCode::BAD_REQUEST);
        let mut bad = base.clone();
        bad["score"] = json!(-1);
        assert_eq!(call(&app, post_score(bad)).await.0, StatusCode::BAD_REQUEST);
        let mut bad = base.clone();
        bad["slot"] = json!("Z");
        assert_eq!(call(&app, post_score(bad)).await.0, StatusCode::BAD_REQUEST);
        let mut missing = base.clone();
        missing["item_id"] = json!("item-9999");
        assert_eq!(call(&app, post_score(missing)).await.0, StatusCode::NOT_FOUND);

        let mut changed = base.clone();
        changed["score"] = json!(0);
        let (status, body) = call(&app, post_score(changed.clone())).await;
        assert_eq!(status, StatusCode::CONFLICT);
        let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
        assert_eq!(v["stored_score"], 1);
        assert!(!String::from_utf8_lossy(&body).contains("m1"));
        changed["overwrite"] = json!(true);
        let (status, body) = call(&app, post_score(changed)).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(serde_json::from_slice::<serde_json::Value>(&body).unwrap()["status"], "overwritten");
        assert_eq!(call(&app, post_score(base)).await.0, StatusCode::CONFLICT);
        assert_eq!(call(&app, get_req("/api/next")).await.0, StatusCode::BAD_REQUEST);
    }

    #[tokio::test]
    async fn token_mode_and_static_files() {
        let dir = tempfile::tempdir().unwrap();
        let assets = tempfile::tempdir().unwrap();
        std::fs::write(assets.path().join("index.html"), "<html>ui</html>").unwrap();
        let config = ServeConfig {
            raters: vec![],
            token: Some("secret".into()),
            static_dir: Some(assets.path().to_path_buf()),
        };
        let app = router(fixture(1, &["m"]), ScoreStore::open(dir.path()).unwrap(), config);
        assert_eq!(call(&app, get_req("/api/summary")).await.0, StatusCode::UNAUTHORIZED);
        let req = HttpRequest::get("/api/summary")
            .header(TOKEN_HEADER, "secret")
            .body(Body::empty())
            .unwrap();
        assert_eq!(call(&app, req).await.0, StatusCode::OK);
        let (status, body) = call(&app, get_req("/")).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body, b"<html>ui</html>");
        assert_eq!(call(&app, get_req("/../secret")).await.0, StatusCode::NOT_FOUND);
    }
}
