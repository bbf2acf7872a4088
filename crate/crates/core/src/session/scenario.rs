use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backend::{Backend, ScriptedBackend};
use crate::events::SessionEvent;

use super::{Orchestrator, SessionConfig, SessionError};

/// One scripted operator action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Step {
    /// Types an utterance. Unless `wait` is false, the run continues only
    /// once every resulting turn has finished.
    Say {
        say: String,
        #[serde(default = "yes")]
        wait: bool,
    },
    /// Lets simulated time pass.
    Wait {
        wait_s: f64,
    },
    Abort {
        abort: bool,
    },
    SelectTask {
        select_task: u8,
    },
}

fn yes() -> bool {
    true
}

fn default_budget() -> f64 {
    300.0
}

/// A headless run of one task against a scripted backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub task: u8,
    /// Rule file, relative to the scenario file.
    pub rules: PathBuf,
    pub steps: Vec<Step>,
    /// Latency for every scripted answer that does not set its own.
    #[serde(default)]
    pub latency_s: Option<f64>,
    #[serde(default = "yes")]
    pub expect_goal: bool,
    /// Simulated seconds allowed for the whole run.
    #[serde(default = "default_budget")]
    pub max_sim_s: f64,
    #[serde(skip)]
    pub origin: PathBuf,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let value = read_json(path)?;
        Self::from_value(value, path)
    }

    fn from_value(value: Value, path: &Path) -> Result<Self, SessionError> {
        let mut s: Scenario =
            serde_json::from_value(value).map_err(|e| SessionError::Scenario {
                origin: path.display().to_string(),
                message: e.to_string(),
            })?;
        if s.name.is_empty() {
            s.name = path
                .file_stem()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        s.origin = path.to_path_buf();
        Ok(s)
    }

    pub fn rules_path(&self) -> PathBuf {
        match self.origin.parent() {
            Some(dir) => dir.join(&self.rules),
            None => self.rules.clone(),
        }
    }

    pub fn backend(&self) -> Result<Arc<dyn Backend>, SessionError> {
        let mut b = ScriptedBackend::load(&self.rules_path())?;
        if let Some(l) = self.latency_s {
            b = b.with_default_latency(l);
        }
        Ok(Arc::new(b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub name: String,
    pub task: u8,
    pub goal_reached: bool,
    pub expect_goal: bool,
    pub sim_time: f64,
    pub events: Vec<SessionEvent>,
    pub transcript: Option<PathBuf>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.goal_reached == self.expect_goal
    }
}

/// What `check` runs: a suite file listing scenarios, or a single one.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckPlan {
    pub scenarios: Vec<Scenario>,
}

#[derive(Deserialize)]
struct Suite {
    scenarios: Vec<PathBuf>,
}

fn read_json(path: &Path) -> Result<Value, SessionError> {
    let text = std::fs::read_to_string(path).map_err(|source| SessionError::Io {
        context: format!("reading {}", path.display()),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| SessionError::Scenario {
        origin: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_check(path: &Path) -> Result<CheckPlan, SessionError> {
    let value = read_json(path)?;
    if value.get("scenarios").is_some() {
        let suite: Suite = serde_json::from_value(value).map_err(|e| SessionError::Scenario {
            origin: path.display().to_string(),
            message: e.to_string(),
        })?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let scenarios = suite
            .scenarios
            .iter()
            .map(|p| Scenario::load(&dir.join(p)))
            .collect::<Result<_, _>>()?;
        Ok(CheckPlan { scenarios })
    } else {
        Ok(CheckPlan {
            scenarios: vec![Scenario::from_value(value, path)?],
        })
    }
}

/// Runs a scenario at fast-forward. `base` supplies everything but the
/// backend; its log_dir, if any, receives the transcript.
pub async fn run_scenario(
    scenario: &Scenario,
    base: &SessionConfig,
) -> Result<ScenarioReport, SessionError> {
    run_with_backend(scenario, base, scenario.backend()?).await
}

pub(crate) async fn run_with_backend(
    scenario: &Scenario,
    base: &SessionConfig,
    backend: Arc<dyn Backend>,
) -> Result<ScenarioReport, SessionError> {
    let mut orch = Orchestrator::with_task(base.clone(), backend, scenario.task)?;
    let budget = scenario.max_sim_s;
    let start = orch.sim_time();
    let remaining = |o: &Orchestrator| (budget - (o.sim_time() - start)).max(0.0);
    for step in &scenario.steps {
        match step {
            Step::Say { say, wait } => {
                orch.submit_utterance(say);
                if *wait {
                    let left = remaining(&orch);
                    orch.run_until_idle(left).await;
                }
            }
            Step::Wait { wait_s } => orch.run_for(wait_s.min(remaining(&orch))).await,
            Step::Abort { .. } => orch.abort_all(),
            Step::SelectTask { select_task } => orch.select_task(*select_task),
        }
    }
    while !orch.goal_reached() && orch.has_work() && remaining(&orch) > 0.0 {
        orch.tick(true).await;
    }
    // One more tick so a goal met by the last action is observed.
    if !orch.goal_reached() {
        orch.tick(true).await;
    }
    Ok(ScenarioReport {
        name: scenario.name.clone(),
        task: scenario.task,
        goal_reached: orch.goal_reached(),
        expect_goal: scenario.expect_goal,
        sim_time: orch.sim_time(),
        events: orch.events().to_vec(),
        transcript: orch.transcript_path().map(Path::to_path_buf),
    })
}

/// Runs every scenario of a plan in order.
pub async fn run_check(
    plan: &CheckPlan,
    base: &SessionConfig,
) -> Result<Vec<ScenarioReport>, SessionError> {
    let mut reports = Vec::with_capacity(plan.scenarios.len());
    for s in &plan.scenarios {
        reports.push(run_scenario(s, base).await?);
    }
    Ok(reports)
}
