use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clbuffer::ContrastiveConfig;
use crate::envs::{EnvConfig, Task};
use crate::error::{Error, Result};
use crate::isb::{FilterConfig, Strategy};
use crate::ppo::PpoConfig;

/// Per-field overrides of the task's default admission filters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterOverrides {
    pub min_episode_step: Option<u32>,
    pub require_nonneg_reward: Option<bool>,
    pub require_nominal_start_trajectory: Option<bool>,
}

impl FilterOverrides {
    pub fn resolve(&self, task: Task) -> FilterConfig {
        let base = FilterConfig::for_task(task);
        FilterConfig {
            min_episode_step: self.min_episode_step.unwrap_or(base.min_episode_step),
            require_nonneg_reward: self.require_nonneg_reward.unwrap_or(base.require_nonneg_reward),
            require_nominal_start_trajectory: self
                .require_nominal_start_trajectory
                .unwrap_or(base.require_nominal_start_trajectory),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsbConfig {
    pub strategy: Strategy,
    /// Probability of starting an episode from the buffer.
    pub p: f64,
    /// States added to the buffer after each phase.
    pub n: usize,
    /// Clusters for the obs and cl strategies.
    pub k: usize,
    pub capacity: usize,
    /// Defaults to `num_envs * rollout_length`.
    pub visited_capacity: Option<usize>,
    pub terminal_window: u32,
    pub filters: FilterOverrides,
}

impl Default for IsbConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Vanilla,
            p: 0.8,
            n: 256,
            k: 64,
            capacity: 4096,
            visited_capacity: None,
            terminal_window: 5,
            filters: FilterOverrides::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write the buffers every this many iterations; 0 disables dumps.
    pub dump_every: u64,
    pub write_updates: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dump_every: 20,
            write_updates: true,
        }
    }
}

/// Declarative description of one seeded run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Environment parameters; the task's defaults when absent.
    pub env: Option<EnvConfig>,
    pub seed: u64,
    pub num_envs: usize,
    pub rollout_length: usize,
    pub iterations: u64,
    pub validation_interval: u64,
    pub validation_episodes: usize,
    /// Train from uniformly drawn terrain centers instead of the nominal start.
    pub prior_init: bool,
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub init_log_std: f64,
    pub ppo: PpoConfig,
    pub isb: IsbConfig,
    pub contrastive: ContrastiveConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::Locomotion,
            env: None,
            seed: 0,
            num_envs: 64,
            rollout_length: 64,
            iterations: 300,
            validation_interval: 20,
            validation_episodes: 1,
            prior_init: false,
            policy_hidden: vec![128, 128],
            value_hidden: vec![128, 128],
            init_log_std: -0.5,
            ppo: PpoConfig::default(),
            isb: IsbConfig::default(),
            contrastive: ContrastiveConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads TOML or JSON, chosen by extension (TOML when unknown).
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)?,
            _ => toml::from_str(&text)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn env_config(&self) -> EnvConfig {
        self.env.clone().unwrap_or_else(|| EnvConfig::default_for(self.task))
    }

    pub fn filters(&self) -> FilterConfig {
        self.isb.filters.resolve(self.task)
    }

    pub fn visited_capacity(&self) -> usize {
        self.isb.visited_capacity.unwrap_or(self.num_envs * self.rollout_length)
    }

    pub fn validate(&self) -> Result<()> {
        let env = self.env_config();
        if env.task() != self.task {
            return Err(Error::Config(format!(
                "env block describes {} but task is {}",
                env.task(),
                self.task
            )));
        }
        env.validate()?;
        self.ppo.validate()?;
        let positive = [
            ("num_envs", self.num_envs as u64),
            ("rollout_length", self.rollout_length as u64),
            ("iterations", self.iterations),
            ("validation_interval", self.validation_interval),
            ("validation_episodes", self.validation_episodes as u64),
            ("isb.n", self.isb.n as u64),
            ("isb.k", self.isb.k as u64),
            ("isb.capacity", self.isb.capacity as u64),
            ("isb.visited_capacity", self.visited_capacity() as u64),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(0.0..=1.0).contains(&self.isb.p) {
            return Err(Error::Config(format!("isb.p {} outside [0, 1]", self.isb.p)));
        }
        if self.policy_hidden.contains(&0) || self.value_hidden.contains(&0) || self.contrastive.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if !self.init_log_std.is_finite() {
            return Err(Error::Config("init_log_std must be finite".into()));
        }
        if self.prior_init && self.task != Task::Locomotion {
            return Err(Error::Config(
                "prior_init needs terrain centers, which only locomotion has".into(),
            ));
        }
        if self.isb.strategy == Strategy::Cl {
            self.contrastive.validate()?;
        }
        Ok(())
    }

    /// Label used to group runs in comparisons.
    pub fn method_name(&self) -> String {
        if self.prior_init {
            format!("{}-prior", self.isb.strategy)
        } else {
            self.isb.strategy.to_string()
        }
    }
}
