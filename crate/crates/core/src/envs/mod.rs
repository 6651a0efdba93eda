//! Restorable environments.
//!
//! Both tasks are deterministic given `(state, action)`; randomness enters only
//! through the nominal start distribution and per-episode command draws, which
//! use the environment's own seeded stream. Any [`EnvState`] obtained from
//! [`Env::snapshot`] can later be handed to [`Env::reset`] to start an episode
//! from that exact point.

mod locomotion;
mod racing;
mod trajectory;

pub use locomotion::{LocomotionConfig, LocomotionEnv, Terrain, LOCOMOTION_REWARD_BOUND};
pub use racing::{Gate, RacingConfig, RacingEnv, RACING_REWARD_BOUND};
pub use trajectory::{read_trajectory, TrajectoryWriter, Transition};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

pub type Observation = Vec<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Locomotion,
    Racing,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Locomotion => "locomotion",
            Task::Racing => "racing",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum TaskDetail {
    Locomotion {
        command: [f64; 2],
        height_offset: f64,
        vertical_velocity: f64,
    },
    Racing {
        heading: f64,
        yaw_rate: f64,
        next_gate: usize,
        gates_passed: usize,
    },
}

/// Complete restorable state of one environment instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub detail: TaskDetail,
    pub episode_step: u32,
    pub accumulated_reward: f64,
}

impl EnvState {
    pub fn task(&self) -> Task {
        match self.detail {
            TaskDetail::Locomotion { .. } => Task::Locomotion,
            TaskDetail::Racing { .. } => Task::Racing,
        }
    }

    pub(crate) fn expect_task(&self, task: Task) -> Result<()> {
        if self.task() != task {
            return Err(Error::TaskMismatch {
                expected: task.to_string(),
                actual: self.task().to_string(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    None,
    Timeout,
    Crash,
    Goal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub termination: Termination,
}

impl StepResult {
    pub(crate) fn new(observation: Observation, reward: f64, termination: Termination) -> Self {
        Self {
            observation,
            reward,
            done: termination != Termination::None,
            termination,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum EnvConfig {
    Locomotion(LocomotionConfig),
    Racing(RacingConfig),
}

impl EnvConfig {
    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Locomotion => EnvConfig::Locomotion(LocomotionConfig::default()),
            Task::Racing => EnvConfig::Racing(RacingConfig::default()),
        }
    }

    pub fn task(&self) -> Task {
        match self {
            EnvConfig::Locomotion(_) => Task::Locomotion,
            EnvConfig::Racing(_) => Task::Racing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvConfig::Locomotion(c) => c.validate(),
            EnvConfig::Racing(c) => c.validate(),
        }
    }

    pub fn horizon(&self) -> u32 {
        match self {
            EnvConfig::Locomotion(c) => c.horizon,
            EnvConfig::Racing(c) => c.horizon,
        }
    }
}

/// A single environment instance of either task.
#[derive(Clone, Debug)]
pub enum Env {
    Locomotion(LocomotionEnv),
    Racing(RacingEnv),
}

macro_rules! dispatch {
    ($self:expr, $env:ident => $body:expr) => {
        match $self {
            Env::Locomotion($env) => $body,
            Env::Racing($env) => $body,
        }
    };
}

impl Env {
    pub fn new(config: &EnvConfig, rng: Stream) -> Result<Self> {
        config.validate()?;
        Ok(match config {
            EnvConfig::Locomotion(c) => Env::Locomotion(LocomotionEnv::new(c.clone(), rng)),
            EnvConfig::Racing(c) => Env::Racing(RacingEnv::new(c.clone(), rng)),
        })
    }

    pub fn task(&self) -> Task {
        match self {
            Env::Locomotion(_) => Task::Locomotion,
            Env::Racing(_) => Task::Racing,
        }
    }

    pub fn obs_dim(&self) -> usize {
        dispatch!(self, e => e.obs_dim())
    }

    pub fn action_dim(&self) -> usize {
        dispatch!(self, e => e.action_dim())
    }

    /// Starts a new episode, either from `init` or from a fresh nominal draw.
    pub fn reset(&mut self, init: Option<&EnvState>) -> Result<Observation> {
        match init {
            Some(state) => {
                self.restore(state)?;
                Ok(self.observe())
            }
            None => {
                let state = self.sample_nominal_start();
                self.restore(&state)?;
                Ok(self.observe())
            }
        }
    }

    /// Draws a start state from the nominal distribution without applying it.
    pub fn sample_nominal_start(&mut self) -> EnvState {
        dispatch!(self, e => e.sample_nominal_start())
    }

    /// Draws a start state uniformly over terrain centers (locomotion only).
    pub fn sample_prior_start(&mut self) -> Result<EnvState> {
        match self {
            Env::Locomotion(e) => Ok(e.sample_prior_start()),
            Env::Racing(_) => Err(Error::Unsupported("prior starts exist only for locomotion".into())),
        }
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        dispatch!(self, e => e.step(action))
    }

    pub fn snapshot(&self) -> EnvState {
        dispatch!(self, e => e.snapshot())
    }

    pub fn restore(&mut self, state: &EnvState) -> Result<()> {
        dispatch!(self, e => e.restore(state))
    }

    pub fn observe(&self) -> Observation {
        dispatch!(self, e => e.observe())
    }

    /// The observation an environment in `state` would emit. Pure.
    pub fn observation_of(&self, state: &EnvState) -> Result<Observation> {
        state.expect_task(self.task())?;
        Ok(dispatch!(self, e => e.observation_of(state)))
    }

    pub fn is_done(&self) -> bool {
        dispatch!(self, e => e.is_done())
    }

    pub fn terrain_centers(&self) -> Result<Vec<EnvState>> {
        match self {
            Env::Locomotion(e) => Ok(e.terrain_centers()),
            Env::Racing(_) => Err(Error::Unsupported(
                "terrain centers are defined only for locomotion".into(),
            )),
        }
    }

    /// Labels for the validation starts produced by [`Env::validation_starts`].
    pub fn validation_starts(&self) -> Vec<(String, EnvState)> {
        match self {
            Env::Locomotion(e) => e.validation_starts(),
            Env::Racing(e) => vec![("start".to_string(), e.start_state())],
        }
    }

    pub fn reward_bound(&self) -> f64 {
        match self {
            Env::Locomotion(_) => LOCOMOTION_REWARD_BOUND,
            Env::Racing(_) => RACING_REWARD_BOUND,
        }
    }
}

pub(crate) fn clip_action(action: &[f64], dim: usize) -> Result<Vec<f64>> {
    if action.len() != dim {
        return Err(Error::Shape(format!(
            "action has {} entries, task expects {dim}",
            action.len()
        )));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::Numeric("action".into()));
    }
    Ok(action.iter().map(|a| a.clamp(-1.0, 1.0)).collect())
}
