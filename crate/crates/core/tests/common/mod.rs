#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use pace_core::config::RequestSettings;
use pace_core::gateway::{BackendConfig, BackendKind, ChatRequest, MockScript, RequestTag, RetryPolicy};
use pace_core::{Context, Gateway, TaskSpec, TemplateSet};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn task(name: &str) -> TaskSpec {
    TaskSpec::load_valid(fixture(name)).unwrap()
}

pub fn script(name: &str) -> MockScript {
    MockScript::load(&fixture(name)).unwrap()
}

pub fn mock_ctx(script: MockScript) -> Context {
    Context::new(Gateway::mock(script), TemplateSet::default(), RequestSettings::default(), 4).unwrap()
}

/// Guesses the role of a wire request from the default templates, so an
/// HTTP stub can answer with a tagged mock script.
pub fn infer_tag(content: &str) -> RequestTag {
    if content.starts_with("Instruction:") {
        RequestTag::Actor
    } else if content.contains("Based on this instruction") {
        RequestTag::Critic
    } else {
        RequestTag::Update
    }
}

#[derive(Clone, Copy)]
pub enum Fault {
    None,
    /// Fail the first `n` requests with this status, then recover.
    First(usize, u16),
    Always(u16),
}

/// Minimal OpenAI-compatible chat endpoint answering from a mock script.
pub struct StubServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
    server: Arc<tiny_http::Server>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(script: MockScript, fault: Fault) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let url = format!("http://{}/v1", server.server_addr().to_ip().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let (srv, counter) = (server.clone(), hits.clone());
        let handle = std::thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                let n = counter.fetch_add(1, Ordering::SeqCst);
                let failing = match fault {
                    Fault::None => None,
                    Fault::First(k, status) => (n < k).then_some(status),
                    Fault::Always(status) => Some(status),
                };
                if let Some(status) = failing {
                    let _ = req.respond(tiny_http::Response::from_string("{\"error\":\"stub\"}").with_status_code(status));
                    continue;
                }
                let mut body = String::new();
                req.as_reader().read_to_string(&mut body).unwrap();
                let wire: serde_json::Value = serde_json::from_str(&body).unwrap();
                let content = wire["messages"][0]["content"].as_str().unwrap_or_default().to_owned();
                let chat = ChatRequest::new(infer_tag(&content), wire["model"].as_str().unwrap_or_default(), content);
                let reply = match script.respond(&chat) {
                    Ok(r) => serde_json::json!({
                        "choices": [{"message": {"role": "assistant", "content": r.content}, "finish_reason": "stop"}]
                    })
                    .to_string(),
                    Err(e) => {
                        let _ = req.respond(tiny_http::Response::from_string(e.to_string()).with_status_code(400));
                        continue;
                    }
                };
                let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).unwrap();
                let _ = req.respond(tiny_http::Response::from_string(reply).with_header(header));
            }
        });
        StubServer {
            url,
            hits,
            server,
            handle: Some(handle),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

pub fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_attempts: 3,
        backoff_base_ms: 1,
    }
}

pub fn live_ctx(url: &str, cache_dir: &Path) -> Context {
    let config = BackendConfig {
        kind: BackendKind::Live,
        base_url: Some(url.to_owned()),
        cache_dir: Some(cache_dir.to_owned()),
        retry: fast_retry(),
        timeout_secs: 5,
        ..BackendConfig::default()
    };
    let gateway = Gateway::from_config_with_key(&config, Some("test-key".into())).unwrap();
    Context::new(gateway, TemplateSet::default(), RequestSettings::default(), 4).unwrap()
}

pub fn replay_ctx(cache_dir: &Path) -> Context {
    let config = BackendConfig {
        kind: BackendKind::Replay,
        cache_dir: Some(cache_dir.to_owned()),
        ..BackendConfig::default()
    };
    Context::new(Gateway::from_config(&config).unwrap(), TemplateSet::default(), RequestSettings::default(), 4).unwrap()
}
