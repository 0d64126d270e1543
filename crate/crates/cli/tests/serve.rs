use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use argmine::inference::ModelConfig;
use argmine::testkit::isaac_essay;
use argmine_cli::serve::{router, ServeState, ServedModel, DEFAULT_ORIGINS};
use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app_with(endpoint: &str) -> Router {
    let model = ServedModel::new(ModelConfig { timeout_secs: 2, ..ModelConfig::new(endpoint, "demo") }).unwrap();
    let state = Arc::new(ServeState::new(vec![model], None, 0).unwrap());
    let origins: Vec<String> = DEFAULT_ORIGINS.iter().map(|s| s.to_string()).collect();
    router(state, None, &origins).unwrap()
}

async fn call(app: &Router, request: Request<Body>) -> (StatusCode, Value) {
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn get(path: &str) -> Request<Body> {
    Request::get(path).body(Body::empty()).unwrap()
}

fn post(path: &str, body: Value) -> Request<Body> {
    Request::post(path).header(header::CONTENT_TYPE, "application/json").body(Body::from(body.to_string())).unwrap()
}

#[tokio::test]
async fn health_and_models_answer() {
    let app = app_with("mock:paragraphs");
    let (status, health) = call(&app, get("/api/health")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(health["status"], "ok");
    assert_eq!(health["models"][0]["reachable"], true);

    let (status, models) = call(&app, get("/api/models")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(models["default"], "demo");
    assert_eq!(models["models"][0]["mock"], true);
    assert_eq!(models["tasks"], json!(["type_only", "quality_only", "type_and_quality"]));
}

#[tokio::test]
async fn analyze_round_trip_returns_tiling_segments() {
    let app = app_with("mock:paragraphs");
    let essay = isaac_essay();
    for mode in ["few_shot", "fine_tuned"] {
        let (status, body) =
            call(&app, post("/api/analyze", json!({ "text": essay.essay.text(), "mode": mode }))).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        assert_eq!(body["model"], "demo");
        assert_eq!(body["task"], "type_and_quality");
        let segments = body["segments"].as_array().unwrap();
        assert_eq!(segments.len(), 4);
        assert_eq!(segments[0]["arg_type"], "Lead");
        assert_eq!(segments[0]["quality"], "Adequate");
        let text = body["text"].as_str().unwrap();
        let rebuilt: String = segments.iter().map(|s| s["text"].as_str().unwrap()).collect();
        assert_eq!(rebuilt, text);
        let mut cursor = 0;
        for s in segments {
            assert_eq!(s["start"], cursor);
            cursor = s["end"].as_u64().unwrap();
        }
        assert_eq!(cursor as usize, text.chars().count());
    }
}

#[tokio::test]
async fn analyze_rejects_bad_requests() {
    let app = app_with("mock:paragraphs");
    let cases = [
        json!({ "text": "   " }),
        json!({ "text": "Some essay.", "task": "segmentation" }),
        json!({ "text": "Some essay.", "model": "other" }),
        json!({ "essay": "wrong field" }),
    ];
    for body in cases {
        let (status, answer) = call(&app, post("/api/analyze", body.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(answer["error"].as_str().is_some_and(|e| !e.is_empty()), "{body}: {answer}");
    }
}

#[tokio::test]
async fn unreachable_model_degrades_health_and_fails_analysis() {
    // The blocking HTTP client owns a runtime and must be built outside this one.
    let app = tokio::task::spawn_blocking(|| app_with("http://127.0.0.1:9")).await.unwrap();
    let (status, health) = call(&app, get("/api/health")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(health["status"], "degraded");
    assert_eq!(health["models"][0]["reachable"], false);
    assert!(health["models"][0]["detail"].is_string());
    let (status, body) = call(&app, post("/api/analyze", json!({ "text": "An essay. With two sentences." }))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE, "{body}");
}

#[tokio::test]
async fn cors_admits_the_ui_origin_only() {
    let app = app_with("mock:paragraphs");
    let preflight = |origin: &str| {
        Request::options("/api/analyze")
            .header(header::ORIGIN, origin)
            .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
            .header(header::ACCESS_CONTROL_REQUEST_HEADERS, "content-type")
            .body(Body::empty())
            .unwrap()
    };
    let ok = app.clone().oneshot(preflight("http://localhost:5173")).await.unwrap();
    assert_eq!(ok.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://localhost:5173");
    let other = app.clone().oneshot(preflight("http://example.com")).await.unwrap();
    assert!(other.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).is_none());
}

#[tokio::test]
async fn static_bundle_is_served_beside_the_api() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>feedback</html>").unwrap();
    let model = ServedModel::new(ModelConfig::new("mock:paragraphs", "demo")).unwrap();
    let state = Arc::new(ServeState::new(vec![model], None, 0).unwrap());
    let app = router(state, Some(dir.path().to_path_buf()), &[]).unwrap();
    let response = app.clone().oneshot(get("/")).await.unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&bytes[..], b"<html>feedback</html>");
    let (status, _) = call(&app, get("/api/health")).await;
    assert_eq!(status, StatusCode::OK);
}

#[test]
fn state_rejects_shots_without_training_essays() {
    let model = ServedModel::new(ModelConfig::new("mock:paragraphs", "demo")).unwrap();
    assert!(ServeState::new(vec![model], None, 2).is_err());
    assert!(ServedModel::new(ModelConfig::new("mock:gold", "demo")).is_err());
}

fn serve_command(addr: &str) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_argmine"));
    cmd.args(["serve", "--addr", addr, "--endpoint", "mock:paragraphs", "--model", "demo"])
        .env_remove("ARGMINE_ENDPOINT")
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    cmd
}

#[test]
fn port_in_use_is_reported() {
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let output = serve_command(&addr).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains(&format!("cannot listen on {addr}")), "{stderr}");
}

#[test]
fn served_binary_answers_health_checks() {
    let addr = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().to_string();
    let mut child = serve_command(&addr).spawn().unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let response = loop {
        if let Ok(mut stream) = TcpStream::connect(&addr) {
            stream.write_all(b"GET /api/health HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
            let mut text = String::new();
            stream.read_to_string(&mut text).unwrap();
            break text;
        }
        assert!(Instant::now() < deadline, "server did not start");
        std::thread::sleep(Duration::from_millis(50));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"status\":\"ok\""), "{response}");
}
