#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use reverso_core::clock::{ManualClock, Timestamp};
use reverso_core::gateway::{CompletionProvider, Gateway, MockBackend, RetryPolicy};
use reverso_core::store::FileStore;
use reverso_server::{router, AppState};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

pub struct TestApp {
    pub router: Router,
    pub state: Arc<AppState>,
    pub clock: Arc<ManualClock>,
    pub dir: tempfile::TempDir,
}

pub fn gateway(backend: MockBackend) -> Arc<dyn CompletionProvider> {
    Arc::new(Gateway::new(Arc::new(backend), RetryPolicy::immediate(1)))
}

impl TestApp {
    pub fn new() -> Self {
        TestApp::with_provider(gateway(MockBackend::synthetic()))
    }

    pub fn with_provider(provider: Arc<dyn CompletionProvider>) -> Self {
        let dir = tempfile::tempdir().unwrap();
        TestApp::in_dir(dir, provider)
    }

    pub fn in_dir(dir: tempfile::TempDir, provider: Arc<dyn CompletionProvider>) -> Self {
        let clock = Arc::new(ManualClock::new(Timestamp::from_secs(1_000)));
        let state = Arc::new(AppState::new(FileStore::new(dir.path()), provider, clock.clone()));
        TestApp {
            router: router(state.clone()),
            state,
            clock,
            dir,
        }
    }

    pub async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes) = self.call_raw(method, uri, body).await;
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        (status, value)
    }

    pub async fn call_raw(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
        let mut req = Request::builder().method(method).uri(uri);
        let body = match body {
            Some(v) => {
                req = req.header("content-type", "application/json");
                Body::from(v.to_string())
            }
            None => Body::empty(),
        };
        let resp = self.router.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call(Method::GET, uri, None).await
    }

    pub async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, uri, Some(body)).await
    }

    pub async fn patch(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::PATCH, uri, Some(body)).await
    }

    /// Creates a workspace from the fixture paper and waits until it is ready.
    pub async fn ready_workspace(&self) -> (String, Value) {
        let (status, created) = self.post("/workspaces", json!({ "markdown": fixture("paper.md") })).await;
        assert_eq!(status, StatusCode::ACCEPTED, "{created}");
        let id = created["workspace_id"].as_str().unwrap().to_string();
        let ws = self.wait_ready(&id).await;
        (id, ws)
    }

    pub async fn wait_ready(&self, id: &str) -> Value {
        for _ in 0..1000 {
            let (status, ws) = self.get(&format!("/workspaces/{id}")).await;
            assert_eq!(status, StatusCode::OK, "{ws}");
            if ws["status"] != "pending" {
                return ws;
            }
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
        panic!("workspace {id} never left pending");
    }

    pub async fn version(&self, id: &str) -> u64 {
        self.get(&format!("/workspaces/{id}")).await.1["state_version"].as_u64().unwrap()
    }
}
