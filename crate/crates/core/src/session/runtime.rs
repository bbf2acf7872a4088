use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde_json::Value;
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tokio::time::MissedTickBehavior;

use crate::backend::Backend;
use crate::events::SessionEvent;

use super::{build_backend, Orchestrator, Pacing, SessionConfig, SessionError};

#[derive(Debug)]
pub enum Command {
    Say(String),
    Abort,
    SelectTask(u8),
    /// Replies once the orchestrator has no work left.
    WhenIdle(oneshot::Sender<()>),
    Shutdown,
}

/// A running session. The orchestrator lives on its own task; this handle
/// talks to it by message.
#[derive(Clone)]
pub struct SessionHandle {
    commands: mpsc::UnboundedSender<Command>,
    events: broadcast::Sender<SessionEvent>,
    snapshots: watch::Receiver<Value>,
    transcript: Option<PathBuf>,
    histories: usize,
    task: Arc<JoinHandle<()>>,
}

impl std::fmt::Debug for SessionHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionHandle")
            .field("transcript", &self.transcript)
            .finish_non_exhaustive()
    }
}

impl SessionHandle {
    pub fn say(&self, text: &str) {
        let _ = self.commands.send(Command::Say(text.to_string()));
    }

    pub fn abort(&self) {
        let _ = self.commands.send(Command::Abort);
    }

    pub fn select_task(&self, id: u8) {
        let _ = self.commands.send(Command::SelectTask(id));
    }

    pub fn send(&self, command: Command) -> bool {
        self.commands.send(command).is_ok()
    }

    pub async fn idle(&self) {
        let (tx, rx) = oneshot::channel();
        if self.commands.send(Command::WhenIdle(tx)).is_ok() {
            let _ = rx.await;
        }
    }

    pub fn subscribe(&self) -> broadcast::Receiver<SessionEvent> {
        self.events.subscribe()
    }

    pub fn snapshot(&self) -> Value {
        self.snapshots.borrow().clone()
    }

    pub fn snapshots(&self) -> watch::Receiver<Value> {
        self.snapshots.clone()
    }

    pub fn transcript_path(&self) -> Option<&std::path::Path> {
        self.transcript.as_deref()
    }

    /// Controller plus one per agent, all initialized.
    pub fn histories(&self) -> usize {
        self.histories
    }

    pub fn shutdown(&self) {
        let _ = self.commands.send(Command::Shutdown);
    }

    pub fn is_running(&self) -> bool {
        !self.task.is_finished()
    }
}

/// Starts a session in wall-clock time with the configured backend.
pub async fn start_session(config: SessionConfig) -> Result<SessionHandle, SessionError> {
    config.check()?;
    let backend = build_backend(&config.backend).await?;
    start_session_with(config, backend, Pacing::Realtime { speed: 1.0 })
}

pub fn start_session_with(
    config: SessionConfig,
    backend: Arc<dyn Backend>,
    pacing: Pacing,
) -> Result<SessionHandle, SessionError> {
    if let Pacing::Realtime { speed } = pacing {
        if !(speed.is_finite() && speed > 0.0) {
            return Err(SessionError::Config(format!(
                "speed must be positive, got {speed}"
            )));
        }
    }
    let orch = Orchestrator::new(config, backend)?;
    let (commands, rx) = mpsc::unbounded_channel();
    let (snap_tx, snapshots) = watch::channel(orch.snapshot());
    let events = orch.events_sender();
    let transcript = orch.transcript_path().map(|p| p.to_path_buf());
    let histories = 1 + orch.agents().len();
    let task = tokio::spawn(run(orch, rx, snap_tx, pacing));
    Ok(SessionHandle {
        commands,
        events,
        snapshots,
        transcript,
        histories,
        task: Arc::new(task),
    })
}

async fn run(
    mut orch: Orchestrator,
    mut rx: mpsc::UnboundedReceiver<Command>,
    snapshots: watch::Sender<Value>,
    pacing: Pacing,
) {
    let mut waiters: Vec<oneshot::Sender<()>> = Vec::new();
    let apply =
        |orch: &mut Orchestrator, waiters: &mut Vec<oneshot::Sender<()>>, cmd: Command| -> bool {
            match cmd {
                Command::Say(text) => orch.submit_utterance(&text),
                Command::Abort => orch.abort_all(),
                Command::SelectTask(id) => orch.select_task(id),
                Command::WhenIdle(tx) => {
                    waiters.push(tx);
                    return true;
                }
                Command::Shutdown => return false,
            }
            let _ = snapshots.send(orch.snapshot());
            true
        };
    match pacing {
        Pacing::FastForward => loop {
            while let Ok(cmd) = rx.try_recv() {
                if !apply(&mut orch, &mut waiters, cmd) {
                    return;
                }
            }
            if orch.is_idle() {
                for w in waiters.drain(..) {
                    let _ = w.send(());
                }
                match rx.recv().await {
                    Some(cmd) => {
                        if !apply(&mut orch, &mut waiters, cmd) {
                            return;
                        }
                    }
                    None => return,
                }
                continue;
            }
            orch.tick(true).await;
            let _ = snapshots.send(orch.snapshot());
            tokio::task::yield_now().await;
        },
        Pacing::Realtime { speed } => {
            let period = Duration::from_secs_f64(orch.dt() / speed);
            let mut interval = tokio::time::interval(period);
            interval.set_missed_tick_behavior(MissedTickBehavior::Delay);
            loop {
                tokio::select! {
                    biased;
                    cmd = rx.recv() => match cmd {
                        Some(cmd) => {
                            if !apply(&mut orch, &mut waiters, cmd) {
                                return;
                            }
                        }
                        None => return,
                    },
                    _ = interval.tick() => {
                        orch.tick(false).await;
                        let _ = snapshots.send(orch.snapshot());
                        if orch.is_idle() {
                            for w in waiters.drain(..) {
                                let _ = w.send(());
                            }
                        }
                    }
                }
            }
        }
    }
}
