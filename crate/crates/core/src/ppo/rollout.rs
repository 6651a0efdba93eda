use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::envs::{Env, EnvConfig, EnvState, Observation, Termination};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::rng::{seeded_rng, Stream};

use super::{GaeConfig, GaussianPolicy};

/// Where an episode's initial state came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "nominal-start")]
    Nominal,
    #[serde(rename = "isb-start")]
    Isb,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Nominal => "nominal-start",
            Provenance::Isb => "isb-start",
        }
    }
}

/// Chooses the initial state of every new episode.
pub trait ResetSampler {
    fn initial_state(&mut self, env: &mut Env) -> Result<(EnvState, Provenance)>;
}

/// Always draws from the task's nominal start distribution.
#[derive(Clone, Copy, Debug, Default)]
pub struct NominalReset;

impl ResetSampler for NominalReset {
    fn initial_state(&mut self, env: &mut Env) -> Result<(EnvState, Provenance)> {
        Ok((env.sample_nominal_start(), Provenance::Nominal))
    }
}

struct Lane {
    env: Env,
    action_rng: Stream,
    observation: Observation,
    provenance: Provenance,
    episode_return: f64,
}

/// A set of independent environment lanes that persist across rollout phases.
pub struct VecEnv {
    lanes: Vec<Lane>,
    episodes_started: BTreeMap<Provenance, u64>,
    episodes_finished: u64,
}

impl VecEnv {
    /// Builds `num_envs` lanes with streams `env/{lane}` and `action/{lane}`
    /// and starts the first episode of each lane through `sampler`.
    pub fn new(config: &EnvConfig, num_envs: usize, seed: u64, sampler: &mut dyn ResetSampler) -> Result<Self> {
        if num_envs == 0 {
            return Err(Error::Config("num_envs must be positive".into()));
        }
        let mut venv = Self {
            lanes: Vec::with_capacity(num_envs),
            episodes_started: BTreeMap::new(),
            episodes_finished: 0,
        };
        for i in 0..num_envs {
            let mut env = Env::new(config, seeded_rng(seed, &format!("env/{i}")))?;
            let (state, provenance) = sampler.initial_state(&mut env)?;
            let observation = env.reset(Some(&state))?;
            *venv.episodes_started.entry(provenance).or_default() += 1;
            venv.lanes.push(Lane {
                env,
                action_rng: seeded_rng(seed, &format!("action/{i}")),
                observation,
                provenance,
                episode_return: 0.0,
            });
        }
        Ok(venv)
    }

    pub fn num_envs(&self) -> usize {
        self.lanes.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.lanes[0].env.obs_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.lanes[0].env.action_dim()
    }

    pub fn env(&self, lane: usize) -> &Env {
        &self.lanes[lane].env
    }

    /// Episode initializations so far, by provenance.
    pub fn episodes_started(&self) -> &BTreeMap<Provenance, u64> {
        &self.episodes_started
    }

    pub fn episodes_finished(&self) -> u64 {
        self.episodes_finished
    }

    /// Episodes that have started but not yet finished; one per lane.
    pub fn episodes_in_progress(&self) -> u64 {
        self.lanes.len() as u64
    }
}

/// One rollout phase, stored lane-major: entry `lane * horizon + t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutBatch {
    pub num_envs: usize,
    pub horizon: usize,
    pub observations: Vec<Observation>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub terminations: Vec<Termination>,
    pub values: Vec<f64>,
    /// State before the step, from which `observations[i]` was emitted.
    pub states: Vec<EnvState>,
    pub episode_steps: Vec<u32>,
    pub accumulated_rewards: Vec<f64>,
    pub provenance: Vec<Provenance>,
    /// Value of the observation reached by a step that timed out; 0 elsewhere.
    #[serde(default)]
    pub timeout_values: Vec<f64>,
    /// Observation following each lane's final step.
    pub final_observations: Vec<Observation>,
    /// Value of `final_observations`, used when the last step is not done.
    pub bootstrap_values: Vec<f64>,
    /// Undiscounted returns of episodes that ended during this phase.
    pub completed_returns: Vec<f64>,
    /// Terminations of the episodes counted in `completed_returns`.
    pub completed_terminations: Vec<Termination>,
    /// Episodes started during this phase, by provenance of their start.
    pub resets: BTreeMap<Provenance, u64>,
}

impl RolloutBatch {
    /// Rewards over `range` as fed to return estimation, with time-limit
    /// bootstraps folded in when `gae.bootstrap_timeouts` is set.
    pub fn gae_rewards(&self, range: Range<usize>, gae: GaeConfig) -> Vec<f64> {
        let rewards = &self.rewards[range.clone()];
        if !gae.bootstrap_timeouts || self.timeout_values.len() != self.rewards.len() {
            return rewards.to_vec();
        }
        rewards
            .iter()
            .zip(&self.timeout_values[range])
            .map(|(r, v)| r + gae.gamma * v)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn index(&self, lane: usize, t: usize) -> usize {
        lane * self.horizon + t
    }

    /// The lane slice `[start, end)` of flat indices for `lane`.
    pub fn lane_range(&self, lane: usize) -> std::ops::Range<usize> {
        lane * self.horizon..(lane + 1) * self.horizon
    }

    /// Flat index range from `i` to the end of its episode within the batch,
    /// inclusive of the done step when one occurs.
    pub fn tail(&self, i: usize) -> std::ops::Range<usize> {
        let end = self.lane_range(i / self.horizon).end;
        let mut j = i;
        while j < end {
            if self.dones[j] {
                return i..j + 1;
            }
            j += 1;
        }
        i..end
    }
}

/// Runs `horizon` steps on every lane with actions sampled from `policy`.
/// Finished episodes are restarted from `sampler` immediately.
pub fn collect_rollout(
    policy: &GaussianPolicy,
    value_net: &Mlp,
    venv: &mut VecEnv,
    horizon: usize,
    sampler: &mut dyn ResetSampler,
) -> Result<RolloutBatch> {
    let n = venv.lanes.len() * horizon;
    let mut batch = RolloutBatch {
        num_envs: venv.lanes.len(),
        horizon,
        observations: Vec::with_capacity(n),
        actions: Vec::with_capacity(n),
        log_probs: Vec::with_capacity(n),
        rewards: Vec::with_capacity(n),
        dones: Vec::with_capacity(n),
        terminations: Vec::with_capacity(n),
        values: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
        episode_steps: Vec::with_capacity(n),
        accumulated_rewards: Vec::with_capacity(n),
        provenance: Vec::with_capacity(n),
        timeout_values: Vec::with_capacity(n),
        final_observations: Vec::with_capacity(venv.lanes.len()),
        bootstrap_values: Vec::with_capacity(venv.lanes.len()),
        completed_returns: Vec::new(),
        completed_terminations: Vec::new(),
        resets: BTreeMap::new(),
    };
    for lane in venv.lanes.iter_mut() {
        for _ in 0..horizon {
            let state = lane.env.snapshot();
            let obs = lane.observation.clone();
            let value = value_net.forward(&obs)?[0];
            let (action, log_prob) = policy.sample(&obs, &mut lane.action_rng)?;
            let result = lane.env.step(&action)?;
            lane.episode_return += result.reward;

            batch.episode_steps.push(state.episode_step);
            batch.accumulated_rewards.push(state.accumulated_reward);
            batch.states.push(state);
            batch.observations.push(obs);
            batch.actions.push(action);
            batch.log_probs.push(log_prob);
            batch.rewards.push(result.reward);
            batch.dones.push(result.done);
            batch.terminations.push(result.termination);
            batch.values.push(value);
            batch.provenance.push(lane.provenance);
            batch
                .timeout_values
                .push(if result.termination == Termination::Timeout {
                    value_net.forward(&result.observation)?[0]
                } else {
                    0.0
                });

            if result.done {
                batch.completed_returns.push(lane.episode_return);
                batch.completed_terminations.push(result.termination);
                venv.episodes_finished += 1;
                let (init, provenance) = sampler.initial_state(&mut lane.env)?;
                lane.observation = lane.env.reset(Some(&init))?;
                lane.provenance = provenance;
                lane.episode_return = 0.0;
                *venv.episodes_started.entry(provenance).or_default() += 1;
                *batch.resets.entry(provenance).or_default() += 1;
            } else {
                lane.observation = result.observation;
            }
        }
        batch.bootstrap_values.push(value_net.forward(&lane.observation)?[0]);
        batch.final_observations.push(lane.observation.clone());
    }
    Ok(batch)
}
