//! A local chat-completions server that records request bodies and answers
//! from a queue of canned responses. Used for wire-conformance tests.

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::Router;
use tokio::task::JoinHandle;

use super::{wire, CompletionKind};

pub const STUB_PATH: &str = "/v1/chat/completions";

#[derive(Debug, Clone, PartialEq)]
pub enum CannedResponse {
    Completion(CompletionKind),
    /// A raw body with a status code, for malformed or failing answers.
    Raw(u16, String),
}

#[derive(Default)]
struct Shared {
    recorded: Vec<String>,
    authorization: Vec<Option<String>>,
    queue: VecDeque<CannedResponse>,
}

pub struct StubServer {
    addr: SocketAddr,
    shared: Arc<Mutex<Shared>>,
    handle: JoinHandle<()>,
}

impl StubServer {
    /// Binds to an ephemeral local port. Once the queue is empty every
    /// request gets a plain "OK." text completion.
    pub async fn start(responses: Vec<CannedResponse>) -> std::io::Result<Self> {
        let shared = Arc::new(Mutex::new(Shared {
            queue: responses.into(),
            ..Shared::default()
        }));
        let app = Router::new()
            .route(STUB_PATH, post(handle))
            .with_state(shared.clone());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let handle = tokio::spawn(async move {
            let _ = axum::serve(listener, app).await;
        });
        Ok(Self {
            addr,
            shared,
            handle,
        })
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}{STUB_PATH}", self.addr)
    }

    /// Request bodies in arrival order.
    pub fn recorded(&self) -> Vec<String> {
        self.shared.lock().expect("stub state").recorded.clone()
    }

    /// Authorization header of each request.
    pub fn authorization(&self) -> Vec<Option<String>> {
        self.shared
            .lock()
            .expect("stub state")
            .authorization
            .clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.handle.abort();
    }
}

async fn handle(
    State(shared): State<Arc<Mutex<Shared>>>,
    headers: axum::http::HeaderMap,
    body: String,
) -> (StatusCode, String) {
    let mut s = shared.lock().expect("stub state");
    s.recorded.push(body);
    s.authorization.push(
        headers
            .get(axum::http::header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string),
    );
    match s.queue.pop_front() {
        Some(CannedResponse::Completion(kind)) => (StatusCode::OK, wire::response_body(&kind)),
        Some(CannedResponse::Raw(status, body)) => (
            StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR),
            body,
        ),
        None => (
            StatusCode::OK,
            wire::response_body(&CompletionKind::Text("OK.".into())),
        ),
    }
}
