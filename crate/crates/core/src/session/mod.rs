//! Session orchestration: the tick loop that owns the world, the event
//! sequencer and transcript, the websocket service and headless scenario
//! runs.

mod orchestrator;
mod runtime;
mod scenario;
mod server;
mod transcript;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendParams, RemoteBackend, ScriptError, ScriptedBackend};
use crate::events::LayerRules;
use crate::tasks::TaskError;

pub use orchestrator::{Orchestrator, Pacing};
pub use runtime::{start_session, start_session_with, Command, SessionHandle};
pub use scenario::{
    load_check, run_check, run_scenario, CheckPlan, Scenario, ScenarioReport, Step,
};
pub use server::{bind, serve, ClientFrame, ServerHandle};
pub use transcript::{mask_wall_time, read_transcript, TranscriptWriter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendSpec {
    Scripted(PathBuf),
    Remote {
        endpoint: String,
        params: BackendParams,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub backend: BackendSpec,
    pub tick_ms: u64,
    pub door_open_s: f64,
    pub language: String,
    /// Transcript directory. Without one nothing is persisted.
    pub log_dir: Option<PathBuf>,
    pub port: u16,
    pub max_tool_iterations: usize,
    pub context_cap: usize,
    pub layer_rules: LayerRules,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            backend: BackendSpec::Remote {
                endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
                params: BackendParams::default(),
            },
            tick_ms: 100,
            door_open_s: 6.0,
            language: "English".into(),
            log_dir: None,
            port: 8765,
            max_tool_iterations: 10,
            context_cap: 200,
            layer_rules: LayerRules::default(),
        }
    }
}

impl SessionConfig {
    pub fn scripted(path: impl Into<PathBuf>) -> Self {
        Self {
            backend: BackendSpec::Scripted(path.into()),
            ..Self::default()
        }
    }

    pub fn dt(&self) -> f64 {
        self.tick_ms as f64 / 1000.0
    }

    pub fn params(&self) -> BackendParams {
        match &self.backend {
            BackendSpec::Remote { params, .. } => params.clone(),
            BackendSpec::Scripted(_) => BackendParams::default(),
        }
    }

    pub fn check(&self) -> Result<(), SessionError> {
        if !(10..=1000).contains(&self.tick_ms) {
            return Err(SessionError::Config(format!(
                "tick_ms must be within 10..=1000, got {}",
                self.tick_ms
            )));
        }
        if !(self.door_open_s.is_finite() && self.door_open_s > 0.0) {
            return Err(SessionError::Config(format!(
                "door_open_s must be positive, got {}",
                self.door_open_s
            )));
        }
        if self.max_tool_iterations == 0 {
            return Err(SessionError::Config(
                "max_tool_iterations must be at least 1".into(),
            ));
        }
        if self.language.trim().is_empty() {
            return Err(SessionError::Config("language must not be empty".into()));
        }
        if let BackendSpec::Remote { params, .. } = &self.backend {
            params.check().map_err(SessionError::Config)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("backend at {endpoint} is unreachable: {reason}")]
    Unreachable { endpoint: String, reason: String },
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error("log directory {path} is not writable: {source}")]
    LogDir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid scenario {origin}: {message}")]
    Scenario { origin: String, message: String },
}

/// Builds the configured backend. A remote endpoint must accept a TCP
/// connection before the session starts.
pub async fn build_backend(spec: &BackendSpec) -> Result<Arc<dyn Backend>, SessionError> {
    match spec {
        BackendSpec::Scripted(path) => Ok(Arc::new(ScriptedBackend::load(path)?)),
        BackendSpec::Remote { endpoint, params } => {
            let unreachable = |reason: String| SessionError::Unreachable {
                endpoint: endpoint.clone(),
                reason,
            };
            let remote =
                RemoteBackend::from_env(endpoint).map_err(|e| unreachable(e.to_string()))?;
            let timeout = Duration::from_secs_f64(params.request_timeout.clamp(0.1, 5.0));
            remote
                .probe(timeout)
                .await
                .map_err(|e| unreachable(e.to_string()))?;
            Ok(Arc::new(remote))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_bounds() {
        let mut c = SessionConfig::scripted("x.json");
        for (ms, ok) in [
            (9, false),
            (10, true),
            (100, true),
            (1000, true),
            (1001, false),
        ] {
            c.tick_ms = ms;
            assert_eq!(c.check().is_ok(), ok, "tick_ms {ms}");
        }
    }

    #[tokio::test]
    async fn unreachable_remote_names_endpoint() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        drop(listener);
        let endpoint = format!("http://127.0.0.1:{port}/v1/chat/completions");
        let spec = BackendSpec::Remote {
            endpoint: endpoint.clone(),
            params: BackendParams::default(),
        };
        let err = build_backend(&spec).await.err().expect("must fail");
        assert!(err.to_string().contains(&endpoint), "{err}");
    }
}
