#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use calibguide::planner::{random_pose, RandomPoseConstraints};
use calibguide::simharness::{reference_board, reference_rig};
use calibguide::Pose;
use calibguide_service::{router, CreateRequest, Mode, SessionState, Store, Targets};
use http_body_util::BodyExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use tower::ServiceExt;

pub fn create_request(mode: Mode, seed: u64) -> CreateRequest {
    serde_json::from_value(serde_json::json!({
        "rig": reference_rig(),
        "board": reference_board(),
        "mode": mode,
        "seed": seed,
    }))
    .unwrap()
}

pub fn with_targets(mut req: CreateRequest, targets: Targets) -> CreateRequest {
    req.targets = targets;
    req
}

/// Visible random board poses for the reference rig and board.
pub struct Poses {
    rng: ChaCha8Rng,
    history: Vec<Pose>,
}

impl Poses {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            history: Vec::new(),
        }
    }

    pub fn next(&mut self) -> Pose {
        let p = random_pose(
            &RandomPoseConstraints::default(),
            &reference_rig(),
            &reference_board(),
            &self.history,
            &mut self.rng,
        )
        .unwrap();
        self.history.push(p);
        p
    }
}

pub fn store() -> (tempfile::TempDir, Arc<Store>) {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path()).unwrap());
    (dir, store)
}

/// One request through the router; returns status and parsed JSON.
pub async fn call(
    store: &Arc<Store>,
    method: &str,
    uri: &str,
    body: Option<serde_json::Value>,
) -> (StatusCode, serde_json::Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json");
    let req = req
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = router(store.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let json = if bytes.is_empty() {
        serde_json::Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, json)
}

pub fn from<T: DeserializeOwned>(v: serde_json::Value) -> T {
    serde_json::from_value(v).unwrap()
}

pub async fn create(store: &Arc<Store>, req: &CreateRequest) -> SessionState {
    let (status, body) = call(
        store,
        "POST",
        "/sessions",
        Some(serde_json::to_value(req).unwrap()),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    from(body)
}
