use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;
use tokio::task::JoinHandle;

use super::{
    start_session, start_session_with, Command, Pacing, SessionConfig, SessionError, SessionHandle,
};
use crate::backend::Backend;

pub const SNAPSHOT_PERIOD: Duration = Duration::from_millis(200);

/// Commands a client may send.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientFrame {
    Say { text: String },
    Abort,
    SelectTask { id: u8 },
}

#[derive(Clone)]
struct AppState {
    session: SessionHandle,
    /// The client allowed to send commands.
    authority: Arc<Mutex<Option<u64>>>,
    next_client: Arc<AtomicU64>,
}

/// A session served on a TCP port.
#[derive(Debug)]
pub struct ServerHandle {
    pub addr: SocketAddr,
    pub session: SessionHandle,
    join: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn ws_url(&self) -> String {
        format!("ws://{}/ws", self.addr)
    }

    pub async fn wait(mut self) {
        if let Some(join) = self.join.take() {
            let _ = join.await;
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(join) = &self.join {
            join.abort();
        }
        self.session.shutdown();
    }
}

/// Starts a session and serves it. `backend` overrides the configured one.
pub async fn bind(
    config: SessionConfig,
    backend: Option<Arc<dyn Backend>>,
    pacing: Pacing,
) -> Result<ServerHandle, SessionError> {
    let port = config.port;
    let session = match backend {
        Some(b) => start_session_with(config, b, pacing)?,
        None if pacing == (Pacing::Realtime { speed: 1.0 }) => start_session(config).await?,
        None => {
            config.check()?;
            let b = super::build_backend(&config.backend).await?;
            start_session_with(config, b, pacing)?
        }
    };
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
        .await
        .map_err(|source| SessionError::Io {
            context: format!("binding port {port}"),
            source,
        })?;
    let addr = listener.local_addr().map_err(|source| SessionError::Io {
        context: "reading bound address".into(),
        source,
    })?;
    let state = AppState {
        session: session.clone(),
        authority: Arc::new(Mutex::new(None)),
        next_client: Arc::new(AtomicU64::new(1)),
    };
    let app = Router::new()
        .route("/ws", get(upgrade))
        .route("/health", get(|| async { "ok" }))
        .with_state(state);
    let join = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!("server stopped: {e}");
        }
    });
    tracing::info!(%addr, "session listening");
    Ok(ServerHandle {
        addr,
        session,
        join: Some(join),
    })
}

/// Serves until the process ends.
pub async fn serve(config: SessionConfig) -> Result<(), SessionError> {
    let server = bind(config, None, Pacing::Realtime { speed: 1.0 }).await?;
    if let Some(path) = server.session.transcript_path() {
        tracing::info!(path = %path.display(), "writing transcript");
    }
    server.wait().await;
    Ok(())
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, state))
}

fn frame(value: &Value) -> Message {
    Message::Text(value.to_string().into())
}

fn event_frame(event: &crate::events::SessionEvent) -> Value {
    let mut v = serde_json::to_value(event).expect("event serializes");
    v.as_object_mut()
        .expect("event is an object")
        .insert("type".into(), json!("event"));
    v
}

async fn client(mut socket: WebSocket, state: AppState) {
    let id = state.next_client.fetch_add(1, Ordering::SeqCst);
    let authoritative = {
        let mut a = state.authority.lock().expect("authority lock");
        if a.is_none() {
            *a = Some(id);
        }
        *a == Some(id)
    };
    let mut events = state.session.subscribe();
    let mut snapshots = state.session.snapshots();
    let hello = json!({"type": "hello", "client": id, "role": if authoritative { "operator" } else { "observer" }});
    if socket.send(frame(&hello)).await.is_err() {
        release(&state, id);
        return;
    }
    let initial = json!({"type": "snapshot", "world": *snapshots.borrow_and_update()});
    if socket.send(frame(&initial)).await.is_err() {
        release(&state, id);
        return;
    }
    let mut ticker = tokio::time::interval(SNAPSHOT_PERIOD);
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let Some(Ok(msg)) = incoming else { break };
                let text = match msg {
                    Message::Text(t) => t.to_string(),
                    Message::Close(_) => break,
                    _ => continue,
                };
                let reply = match serde_json::from_str::<ClientFrame>(&text) {
                    Err(e) => Some(json!({"type": "error", "message": format!("malformed frame: {e}")})),
                    Ok(_) if !authoritative => Some(json!({"type": "error", "message": "read-only observer: commands are ignored"})),
                    Ok(cmd) => {
                        state.session.send(match cmd {
                            ClientFrame::Say { text } => Command::Say(text),
                            ClientFrame::Abort => Command::Abort,
                            ClientFrame::SelectTask { id } => Command::SelectTask(id),
                        });
                        None
                    }
                };
                if let Some(r) = reply {
                    if socket.send(frame(&r)).await.is_err() {
                        break;
                    }
                }
            }
            event = events.recv() => match event {
                Ok(e) => {
                    if socket.send(frame(&event_frame(&e))).await.is_err() {
                        break;
                    }
                }
                Err(RecvError::Lagged(n)) => {
                    let warn = json!({"type": "error", "message": format!("{n} events skipped, client too slow")});
                    if socket.send(frame(&warn)).await.is_err() {
                        break;
                    }
                }
                Err(RecvError::Closed) => break,
            },
            _ = ticker.tick() => {
                if snapshots.has_changed().unwrap_or(false) {
                    let snap = json!({"type": "snapshot", "world": *snapshots.borrow_and_update()});
                    if socket.send(frame(&snap)).await.is_err() {
                        break;
                    }
                }
            }
        }
    }
    release(&state, id);
}

fn release(state: &AppState, id: u64) {
    let mut a = state.authority.lock().expect("authority lock");
    if *a == Some(id) {
        *a = None;
    }
}
