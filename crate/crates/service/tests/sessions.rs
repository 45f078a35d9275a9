mod common;

use axum::http::StatusCode;
use calibguide::planner::{is_visible, DEFAULT_MARGIN_PX};
use calibguide::simharness::{reference_board, reference_rig};
use calibguide::{Pose, ViewPair};
use calibguide_service::{
    CaptureRequest, CaptureSource, Envelope, ErrorBody, Mode, SessionState, Store, SuggestRequest,
    Suggestion,
};
use common::{call, create, create_request, from, Poses};
use nalgebra::Vector3;
use serde_json::json;

async fn capture(
    store: &std::sync::Arc<Store>,
    id: &str,
    pose: &Pose,
    sigma: f64,
) -> (StatusCode, serde_json::Value) {
    call(
        store,
        "POST",
        &format!("/sessions/{id}/captures"),
        Some(json!({ "pose": pose, "sigma": sigma })),
    )
    .await
}

#[tokio::test]
async fn create_validates_and_issues_distinct_ids() {
    let (_dir, store) = common::store();
    let req = create_request(Mode::Guided, 1);
    let a = create(&store, &req).await;
    let b = create(&store, &req).await;
    assert_ne!(a.id, b.id);
    assert!(
        a.views.is_empty()
            && a.trace_history.is_empty()
            && a.estimate.is_none()
            && a.suggestion.is_none()
    );

    let mut bad = serde_json::to_value(&req).unwrap();
    bad["rig"]["left"]["fu"] = json!(0.0);
    let (status, body) = call(&store, "POST", "/sessions", Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(from::<ErrorBody>(body).code, "INVALID_CONFIG");

    let (status, body) = call(&store, "POST", "/sessions", Some(json!({"rig": 3}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(from::<ErrorBody>(body).code, "INVALID_REQUEST");
}

#[tokio::test]
async fn unknown_session_is_reported() {
    let (_dir, store) = common::store();
    for (method, uri) in [
        ("GET", "/sessions/nope".to_string()),
        ("GET", format!("/sessions/{}", uuid_like())),
        ("POST", format!("/sessions/{}/suggest", uuid_like())),
        (
            "GET",
            format!("/sessions/{}/events?timeout_ms=1", uuid_like()),
        ),
    ] {
        let (status, body) = call(&store, method, &uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        let err: ErrorBody = from(body);
        assert_eq!(err.code, "SESSION_NOT_FOUND");
        assert!(!err.message.is_empty());
    }
    let (status, body) = capture(&store, &uuid_like(), &Pose::identity(), 1.0).await;
    assert_eq!(
        (status, from::<ErrorBody>(body).code.as_str()),
        (StatusCode::NOT_FOUND, "SESSION_NOT_FOUND")
    );
}

fn uuid_like() -> String {
    "7f1c9a52-3d4e-4b8a-9f60-0a1b2c3d4e5f".into()
}

#[tokio::test]
async fn captures_build_an_estimate_and_history() {
    let (_dir, store) = common::store();
    let s = create(&store, &create_request(Mode::Freestyle, 2)).await;
    let mut poses = Poses::new(2);

    let (status, body) = capture(&store, &s.id, &poses.next(), 0.5).await;
    assert_eq!(status, StatusCode::OK);
    let one: SessionState = from(body);
    assert_eq!(one.views.len(), 1);
    assert!(one.estimate.is_none());
    assert_eq!(one.trace_history, vec![None]);

    let (status, body) = call(&store, "POST", &format!("/sessions/{}/suggest", s.id), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(from::<ErrorBody>(body).code, "INSUFFICIENT_VIEWS");

    let mut last = one;
    for k in 2..=4 {
        let (status, body) = capture(&store, &s.id, &poses.next(), 0.5).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        last = from(body);
        assert_eq!(last.trace_history.len(), k);
        assert!(last.estimate.is_some());
        assert!(last.trace_history[k - 1].is_some());
    }
    let stats = last.history.last().unwrap();
    assert_eq!(stats.source, CaptureSource::Manual);
    assert!(stats.rotation_error_deg.unwrap() < 5.0);
    assert!(stats.reprojection_rms_px.unwrap() < 2.0);

    // Rejected capture leaves the session untouched.
    let hidden = Pose::new(Vector3::zeros(), Vector3::new(5000.0, 0.0, 1000.0));
    let (status, body) = capture(&store, &s.id, &hidden, 0.5).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(from::<ErrorBody>(body).code, "NOT_VISIBLE");
    let (_, body) = call(&store, "GET", &format!("/sessions/{}", s.id), None).await;
    assert_eq!(from::<SessionState>(body), last);
}

#[tokio::test]
async fn suggestions_are_visible_deterministic_and_reduce_trace() {
    let (_dir, store) = common::store();
    let s = create(&store, &create_request(Mode::Guided, 3)).await;
    let mut poses = Poses::new(3);
    for _ in 0..2 {
        assert_eq!(
            capture(&store, &s.id, &poses.next(), 0.05).await.0,
            StatusCode::OK
        );
    }
    let uri = format!("/sessions/{}/suggest", s.id);
    let (status, body) = call(&store, "POST", &uri, None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let first: Suggestion = from(body);
    let (_, body) = call(&store, "POST", &uri, Some(json!({}))).await;
    assert_eq!(from::<Suggestion>(body), first);
    let (_, body) = call(&store, "POST", &uri, Some(json!({"seed": 99}))).await;
    assert_ne!(from::<Suggestion>(body).candidate, first.candidate);

    // Overlay: every board corner, inside the left image.
    let rig = reference_rig();
    assert_eq!(first.overlay.len(), 54);
    assert!(first
        .overlay
        .iter()
        .all(|[u, v]| (0.0..640.0).contains(u) && (0.0..480.0).contains(v)));
    let state: SessionState = from(
        call(&store, "GET", &format!("/sessions/{}", s.id), None)
            .await
            .1,
    );
    let estimated = rig.with_relative(state.estimate.as_ref().unwrap().relative);
    assert!(is_visible(
        &first.candidate.pose,
        &estimated,
        &reference_board(),
        DEFAULT_MARGIN_PX
    ));
    let current = first.current_trace.unwrap();
    let recorded = state.trace_history.last().unwrap().unwrap();
    assert!(
        (current - recorded).abs() <= 1e-9 * recorded,
        "{current} vs {recorded}"
    );
    assert!(first.candidate.trace < current);

    // Capturing at the suggestion lowers the trace.
    let (_, body) = call(&store, "POST", &uri, Some(json!({}))).await;
    let suggestion: Suggestion = from(body);
    let (status, body) = capture(&store, &s.id, &suggestion.candidate.pose, 0.05).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let after: SessionState = from(body);
    assert_eq!(
        after.history.last().unwrap().source,
        CaptureSource::Suggested
    );
    assert!(after.trace_history[2].unwrap() < after.trace_history[1].unwrap());
    assert!(after.suggestion.is_none());
}

#[tokio::test]
async fn external_corners_are_accepted() {
    let (_dir, store) = common::store();
    let s = create(&store, &create_request(Mode::Freestyle, 4)).await;
    let rig = reference_rig();
    let board = reference_board();
    let mut poses = Poses::new(4);
    for _ in 0..2 {
        let view = ViewPair::exact(&rig, &board, &poses.next()).unwrap();
        let (status, body) = call(
            &store,
            "POST",
            &format!("/sessions/{}/captures", s.id),
            Some(json!({ "view": view })),
        )
        .await;
        assert_eq!(status, StatusCode::OK, "{body}");
    }
    let state: SessionState = from(
        call(&store, "GET", &format!("/sessions/{}", s.id), None)
            .await
            .1,
    );
    assert_eq!(state.true_poses, vec![None, None]);
    assert_eq!(state.history[1].source, CaptureSource::External);
    // Exact corners: the estimate is the true rig.
    assert!(state.history[1].rotation_error_deg.unwrap() < 1e-6);

    let mut short = ViewPair::exact(&rig, &board, &poses.next()).unwrap();
    short.left_pixels.pop();
    let (status, body) = call(
        &store,
        "POST",
        &format!("/sessions/{}/captures", s.id),
        Some(json!({ "view": short })),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(from::<ErrorBody>(body).code, "DIMENSION_MISMATCH");
}

#[tokio::test]
async fn event_log_replays_to_current_state() {
    let (dir, store) = common::store();
    let s = create(&store, &create_request(Mode::Guided, 5)).await;
    let mut poses = Poses::new(5);
    for _ in 0..2 {
        capture(&store, &s.id, &poses.next(), 0.5).await;
    }
    let suggestion: Suggestion = from(
        call(&store, "POST", &format!("/sessions/{}/suggest", s.id), None)
            .await
            .1,
    );
    capture(&store, &s.id, &suggestion.candidate.pose, 0.5).await;
    call(&store, "POST", &format!("/sessions/{}/suggest", s.id), None).await;
    let fetched: SessionState = from(
        call(&store, "GET", &format!("/sessions/{}", s.id), None)
            .await
            .1,
    );

    // Deltas from the long-poll channel.
    let (status, body) = call(&store, "GET", &format!("/sessions/{}/events", s.id), None).await;
    assert_eq!(status, StatusCode::OK);
    let envelopes: Vec<Envelope> = from(body);
    assert_eq!(
        envelopes.iter().map(|e| e.seq).collect::<Vec<_>>(),
        (0..6).collect::<Vec<_>>()
    );
    let replayed = SessionState::replay(envelopes.iter().map(|e| &e.event)).unwrap();
    assert_eq!(replayed, fetched);

    // Recomputing each command from the replayed prefix gives the logged event.
    let mut prefix = SessionState::replay(std::iter::once(&envelopes[0].event)).unwrap();
    for env in &envelopes[1..] {
        let recomputed = match &env.event {
            calibguide_service::Event::Captured { true_pose, .. } => {
                let pose = true_pose.unwrap();
                let sigma = 0.5;
                prefix
                    .capture(&CaptureRequest::Simulated { pose, sigma })
                    .unwrap()
            }
            calibguide_service::Event::Suggested { .. } => {
                prefix.suggest(&SuggestRequest::default()).unwrap()
            }
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(recomputed, env.event);
        prefix.apply(&env.event);
    }

    // A fresh store over the same directory rebuilds the session from disk.
    let reopened = Store::open(dir.path()).unwrap();
    assert_eq!(reopened.state(&s.id).await.unwrap(), fetched);
    let text = std::fs::read_to_string(dir.path().join(format!("{}.jsonl", s.id))).unwrap();
    assert_eq!(text.lines().count(), 6);

    // Resuming after the last event waits, then returns nothing new.
    let (status, body) = call(
        &store,
        "GET",
        &format!("/sessions/{}/events?after=5&timeout_ms=50", s.id),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!([]));
}

#[tokio::test]
async fn server_sent_events_stream_the_log() {
    use axum::body::Body;
    use axum::http::Request;
    use http_body_util::BodyExt;
    use tower::ServiceExt;

    let (_dir, store) = common::store();
    let s = create(&store, &create_request(Mode::Freestyle, 6)).await;
    let mut poses = Poses::new(6);
    capture(&store, &s.id, &poses.next(), 0.5).await;

    let req = Request::get(format!("/sessions/{}/events", s.id))
        .header("accept", "text/event-stream")
        .body(Body::empty())
        .unwrap();
    let resp = calibguide_service::router(store.clone())
        .oneshot(req)
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(resp.headers()["content-type"]
        .to_str()
        .unwrap()
        .starts_with("text/event-stream"));
    let mut body = resp.into_body();

    // The live capture arrives after the two logged events.
    let store2 = store.clone();
    let id = s.id.clone();
    let pose = poses.next();
    tokio::spawn(async move { capture(&store2, &id, &pose, 0.5).await });

    let mut text = String::new();
    let mut envelopes: Vec<Envelope> = Vec::new();
    while envelopes.len() < 3 {
        let frame = tokio::time::timeout(std::time::Duration::from_secs(30), body.frame())
            .await
            .unwrap()
            .unwrap()
            .unwrap();
        if let Ok(data) = frame.into_data() {
            text.push_str(std::str::from_utf8(&data).unwrap());
        }
        envelopes = text
            .lines()
            .filter_map(|l| l.strip_prefix("data:"))
            .map(|d| serde_json::from_str(d.trim()).unwrap())
            .collect();
    }
    assert_eq!(
        envelopes.iter().map(|e| e.seq).collect::<Vec<_>>(),
        [0, 1, 2]
    );
    assert!(text.contains("event: created") && text.contains("event: captured"));
    let fetched = store.state(&s.id).await.unwrap();
    assert_eq!(
        SessionState::replay(envelopes.iter().map(|e| &e.event)).unwrap(),
        fetched
    );
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_commands_on_one_session_are_serialized() {
    let (_dir, store) = common::store();
    let s = create(&store, &create_request(Mode::Freestyle, 7)).await;
    let mut poses = Poses::new(7);
    let tasks: Vec<_> = (0..6)
        .map(|_| {
            let (store, id, pose) = (store.clone(), s.id.clone(), poses.next());
            tokio::spawn(async move {
                store
                    .capture(&id, CaptureRequest::Simulated { pose, sigma: 0.5 })
                    .await
                    .unwrap()
            })
        })
        .collect();
    for t in tasks {
        t.await.unwrap();
    }
    let state = store.state(&s.id).await.unwrap();
    assert_eq!(state.views.len(), 6);
    assert_eq!(state.trace_history.len(), 6);
    let (log, _) = store.subscribe(&s.id, 0).await.unwrap();
    assert_eq!(
        log.iter().map(|e| e.seq).collect::<Vec<_>>(),
        (0..7).collect::<Vec<_>>()
    );
    assert_eq!(
        SessionState::replay(log.iter().map(|e| &e.event)).unwrap(),
        state
    );
}
