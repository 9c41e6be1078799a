use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use meshforge::backends::geometry::Rect;
use meshforge::backends::http::{call_backend, encode_mesh_payload, HttpBackend};
use meshforge::backends::mock::mock_mesh;
use meshforge::backends::{BackendDescriptor, BackendError, BackendKind, Detector, ImageData, ImageTo3d, TextTo3d};

#[derive(Clone, Default)]
struct Stub {
    hits: Arc<AtomicUsize>,
    last: Arc<parking_lot::Mutex<Option<Value>>>,
}

async fn serve(router: Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    format!("http://{addr}/")
}

fn descriptor(kind: BackendKind, url: &str, timeout_ms: u64) -> BackendDescriptor {
    BackendDescriptor::new(kind, url).with_timeout(Duration::from_millis(timeout_ms))
}

#[tokio::test]
async fn text_to_3d_round_trip_forwards_params() {
    let stub = Stub::default();
    let app = Router::new()
        .route(
            "/",
            post(|State(s): State<Stub>, Json(body): Json<Value>| async move {
                s.hits.fetch_add(1, Ordering::SeqCst);
                let prompt = body["input"]["prompt"].as_str().unwrap_or_default().to_string();
                *s.last.lock() = Some(body);
                Json(json!({"output": {"mesh": encode_mesh_payload(&mock_mesh(&prompt, Some(100)))}}))
            }),
        )
        .with_state(stub.clone());
    let url = serve(app).await;
    let backend = HttpBackend::new(descriptor(BackendKind::TextTo3d, &url, 5_000));
    let mesh = TextTo3d::generate(&backend, "red apple").await.unwrap();
    assert_eq!(mesh, mock_mesh("red apple", Some(100)));
    let body = stub.last.lock().clone().unwrap();
    assert_eq!(body["kind"], "text-to-3d");
    assert_eq!(body["params"]["sampling_steps"], 64);
    assert_eq!(body["params"]["sigma_min"], 1e-3);
    assert_eq!(body["params"]["sigma_max"], 160.0);
    assert_eq!(body["params"]["s_churn"], 0.0);
    assert_eq!(stub.hits.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn image_payload_is_base64() {
    let stub = Stub::default();
    let app = Router::new()
        .route(
            "/",
            post(|State(s): State<Stub>, Json(body): Json<Value>| async move {
                *s.last.lock() = Some(body);
                Json(json!({"output": {"mesh": encode_mesh_payload(&mock_mesh("cup", Some(12)))}}))
            }),
        )
        .with_state(stub.clone());
    let url = serve(app).await;
    let backend = HttpBackend::new(descriptor(BackendKind::ImageTo3d, &url, 5_000));
    let image = ImageData {
        width: 2,
        height: 1,
        data: vec![0xff, 0x00, 0x7f],
    };
    let crop = Rect::new(0.0, 0.0, 2.0, 1.0).unwrap();
    ImageTo3d::generate(&backend, &image, Some(crop), "cup").await.unwrap();
    let body = stub.last.lock().clone().unwrap();
    assert_eq!(body["input"]["image"]["data"], "/wB/");
    assert_eq!(body["input"]["crop"]["x_max"], 2.0);
}

#[tokio::test]
async fn stalled_backend_times_out_on_schedule() {
    let app = Router::new().route(
        "/",
        post(|| async {
            tokio::time::sleep(Duration::from_secs(30)).await;
            Json(json!({"output": {}}))
        }),
    );
    let url = serve(app).await;
    let d = descriptor(BackendKind::LlmExtract, &url, 200);
    let started = Instant::now();
    let err = call_backend(&reqwest::Client::new(), &d, json!({})).await.unwrap_err();
    let elapsed = started.elapsed();
    assert_eq!(err, BackendError::Timeout { after_ms: 200 });
    assert!(elapsed >= Duration::from_millis(200));
    assert!(elapsed < Duration::from_millis(1_000), "{elapsed:?}");
}

#[tokio::test]
async fn one_retry_after_server_error() {
    let stub = Stub::default();
    let app = Router::new()
        .route(
            "/",
            post(|State(s): State<Stub>| async move {
                if s.hits.fetch_add(1, Ordering::SeqCst) == 0 {
                    (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": {"code": "oom", "message": "busy"}})))
                } else {
                    (StatusCode::OK, Json(json!({"output": {"labels": ["apple"]}})))
                }
            }),
        )
        .with_state(stub.clone());
    let url = serve(app).await;
    let out = call_backend(&reqwest::Client::new(), &descriptor(BackendKind::LlmExtract, &url, 5_000), json!({}))
        .await
        .unwrap();
    assert_eq!(out["labels"][0], "apple");
    assert_eq!(stub.hits.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn persistent_server_error_gives_up_after_two_attempts() {
    let stub = Stub::default();
    let app = Router::new()
        .route(
            "/",
            post(|State(s): State<Stub>| async move {
                s.hits.fetch_add(1, Ordering::SeqCst);
                (StatusCode::SERVICE_UNAVAILABLE, "down")
            }),
        )
        .with_state(stub.clone());
    let url = serve(app).await;
    let err = call_backend(&reqwest::Client::new(), &descriptor(BackendKind::Tts, &url, 5_000), json!({}))
        .await
        .unwrap_err();
    assert_eq!(
        err,
        BackendError::Remote {
            status: 503,
            code: "http_503".into(),
            message: "down".into()
        }
    );
    assert_eq!(stub.hits.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn client_errors_are_not_retried() {
    let stub = Stub::default();
    let app = Router::new()
        .route(
            "/",
            post(|State(s): State<Stub>| async move {
                s.hits.fetch_add(1, Ordering::SeqCst);
                (StatusCode::BAD_REQUEST, Json(json!({"error": {"code": "bad_prompt", "message": "empty"}})))
            }),
        )
        .with_state(stub.clone());
    let url = serve(app).await;
    let err = call_backend(&reqwest::Client::new(), &descriptor(BackendKind::TextTo3d, &url, 5_000), json!({}))
        .await
        .unwrap_err();
    assert!(matches!(err, BackendError::Remote { status: 400, ref code, .. } if code == "bad_prompt"));
    assert_eq!(stub.hits.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn malformed_replies_are_distinguished() {
    let app = Router::new()
        .route("/text", post(|| async { "not json" }))
        .route("/nooutput", post(|| async { Json(json!({"result": 1})) }))
        .route("/badmesh", post(|| async { Json(json!({"output": {"mesh": "TUZSRw=="}})) }))
        .route(
            "/baddet",
            post(|| async {
                Json(json!({"output": {"detections": [{"label": "x", "confidence": 1.5, "box": {"x_min": 0, "y_min": 0, "x_max": 1, "y_max": 1}}]}}))
            }),
        );
    let url = serve(app).await;
    let client = reqwest::Client::new();
    for path in ["text", "nooutput"] {
        let d = descriptor(BackendKind::LlmExtract, &format!("{url}{path}"), 5_000);
        assert!(matches!(call_backend(&client, &d, json!({})).await, Err(BackendError::Malformed(_))), "{path}");
    }
    let mesh = HttpBackend::new(descriptor(BackendKind::TextTo3d, &format!("{url}badmesh"), 5_000));
    assert!(matches!(TextTo3d::generate(&mesh, "x").await, Err(BackendError::Malformed(_))));
    let det = HttpBackend::new(descriptor(BackendKind::Detector, &format!("{url}baddet"), 5_000));
    let image = ImageData {
        width: 1,
        height: 1,
        data: vec![],
    };
    assert!(matches!(det.detect(&image, 0.5).await, Err(BackendError::Malformed(_))));
}

#[tokio::test]
async fn refused_connection_is_transport() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    drop(listener);
    let err = call_backend(&reqwest::Client::new(), &descriptor(BackendKind::Tts, &url, 5_000), json!({}))
        .await
        .unwrap_err();
    assert!(matches!(err, BackendError::Transport(_)));
    assert_eq!(err.code(), "backend_transport");
}
