use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamConfig, AdamState, Mlp, Parameters};

use super::{compute_gae, normalize_advantages, GaeConfig, GaussianPolicy, RolloutBatch};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub epochs: usize,
    pub minibatches: usize,
    pub clip_ratio: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub gae: GaeConfig,
    pub policy_adam: AdamConfig,
    pub value_adam: AdamConfig,
    /// Record tracked-state values after every this many gradient steps.
    pub snapshot_every: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            epochs: 4,
            minibatches: 4,
            clip_ratio: 0.2,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            gae: GaeConfig::default(),
            policy_adam: AdamConfig::default(),
            value_adam: AdamConfig::default(),
            snapshot_every: 1,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        self.gae.validate()?;
        if self.epochs == 0 || self.minibatches == 0 || self.snapshot_every == 0 {
            return Err(Error::Config(
                "ppo epochs, minibatches and snapshot_every must be positive".into(),
            ));
        }
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return Err(Error::Config(format!("clip_ratio {} outside (0, 1)", self.clip_ratio)));
        }
        if !(self.max_grad_norm > 0.0) || !(self.entropy_coef >= 0.0) {
            return Err(Error::Config(
                "max_grad_norm must be positive and entropy_coef non-negative".into(),
            ));
        }
        for adam in [&self.policy_adam, &self.value_adam] {
            if !(adam.learning_rate > 0.0) {
                return Err(Error::Config("learning rates must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Flattened training data for one update phase.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedBatch {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PreparedBatch {
    /// Runs GAE per lane and normalizes advantages over the whole batch.
    pub fn from_rollout(batch: &RolloutBatch, gae: GaeConfig) -> Result<Self> {
        let mut advantages = Vec::with_capacity(batch.len());
        let mut returns = Vec::with_capacity(batch.len());
        for lane in 0..batch.num_envs {
            let r = batch.lane_range(lane);
            let (adv, ret) = compute_gae(
                &batch.gae_rewards(r.clone(), gae),
                &batch.values[r.clone()],
                &batch.dones[r],
                batch.bootstrap_values[lane],
                gae,
            )?;
            advantages.extend(adv);
            returns.extend(ret);
        }
        normalize_advantages(&mut advantages);
        Ok(Self {
            observations: batch.observations.clone(),
            actions: batch.actions.clone(),
            old_log_probs: batch.log_probs.clone(),
            advantages,
            returns,
        })
    }

    pub fn len(&self) -> usize {
        self.advantages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.advantages.is_empty()
    }
}

/// Per-update diagnostics. `value_snapshots[s][j]` is the value network's
/// prediction for tracked observation `j` after recorded gradient step `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateLog {
    pub iteration: u64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub gradient_steps: usize,
    pub value_snapshots: Vec<Vec<f64>>,
}

impl UpdateLog {
    /// A copy whose snapshot matrix keeps only `columns`.
    pub fn restrict_columns(&self, columns: &[usize]) -> UpdateLog {
        let mut log = self.clone();
        log.value_snapshots = self
            .value_snapshots
            .iter()
            .map(|row| columns.iter().map(|&c| row[c]).collect())
            .collect();
        log
    }
}

/// Appends `log` as one JSON line.
pub fn append_update_log(path: impl AsRef<Path>, log: &UpdateLog) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let line = serde_json::to_string(log)?;
    writeln!(file, "{line}").map_err(|e| Error::io(path, e))
}

/// Loss term and its derivative with respect to the ratio for one sample of
/// the clipped surrogate `-min(r A, clip(r) A)`. The derivative is zero
/// whenever the clipped branch is the active minimum.
pub fn surrogate_term(ratio: f64, advantage: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (-unclipped, -advantage)
    } else {
        (-clipped, 0.0)
    }
}

/// Clipped-surrogate and value losses of the current networks on `batch`.
pub fn evaluate_losses(
    policy: &GaussianPolicy,
    value_net: &Mlp,
    batch: &PreparedBatch,
    clip: f64,
) -> Result<(f64, f64)> {
    let n = batch.len() as f64;
    let mut policy_loss = 0.0;
    let mut value_loss = 0.0;
    for i in 0..batch.len() {
        let lp = policy.log_prob(&batch.observations[i], &batch.actions[i])?;
        let ratio = (lp - batch.old_log_probs[i]).exp();
        policy_loss += surrogate_term(ratio, batch.advantages[i], clip).0 / n;
        let v = value_net.forward(&batch.observations[i])?[0];
        value_loss += 0.5 * (v - batch.returns[i]).powi(2) / n;
    }
    Ok((policy_loss, value_loss))
}

fn clip_by_global_norm<P: Parameters>(grad: &mut P, max_norm: f64) {
    let norm = grad
        .tensors()
        .iter()
        .flat_map(|(_, t)| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for t in grad.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= scale);
        }
    }
}

/// Optimizer state carried across update phases.
#[derive(Clone, Debug)]
pub struct PpoOptimizers {
    pub policy: AdamState<GaussianPolicy>,
    pub value: AdamState<Mlp>,
}

impl PpoOptimizers {
    pub fn new(policy: &GaussianPolicy, value_net: &Mlp, cfg: &PpoConfig) -> Self {
        Self {
            policy: AdamState::new(policy, cfg.policy_adam),
            value: AdamState::new(value_net, cfg.value_adam),
        }
    }
}

/// Clipped PPO on a prepared batch with separate Adam optimizers for the
/// policy and the value network. After every `snapshot_every` gradient
/// steps the value network is evaluated on `tracked` observations.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut GaussianPolicy,
    value_net: &mut Mlp,
    opt: &mut PpoOptimizers,
    batch: &PreparedBatch,
    cfg: &PpoConfig,
    tracked: &[Vec<f64>],
    rng: &mut R,
) -> Result<UpdateLog> {
    if batch.is_empty() {
        return Err(Error::Shape("empty training batch".into()));
    }
    let mut log = UpdateLog {
        iteration: 0,
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
        approx_kl: 0.0,
        clip_fraction: 0.0,
        gradient_steps: 0,
        value_snapshots: Vec::new(),
    };
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let chunk = batch.len().div_ceil(cfg.minibatches);
    let mut samples = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for mb in order.chunks(chunk) {
            let m = mb.len() as f64;
            let mut pgrad = policy.zeros_like();
            let mut vgrad = value_net.zeros_like();
            let mut policy_loss = 0.0;
            let mut value_loss = 0.0;
            for &i in mb {
                let obs = &batch.observations[i];
                let trace = policy.mean.forward_trace(obs)?;
                let lp = policy.log_prob_from_mean(trace.output(), &batch.actions[i])?;
                let log_ratio = lp - batch.old_log_probs[i];
                let ratio = log_ratio.exp();
                let (loss, dratio) = surrogate_term(ratio, batch.advantages[i], cfg.clip_ratio);
                policy_loss += loss / m;
                if dratio != 0.0 {
                    policy.accumulate_log_prob_grad(&trace, &batch.actions[i], dratio * ratio / m, &mut pgrad)?;
                }
                if (ratio - 1.0).abs() > cfg.clip_ratio {
                    log.clip_fraction += 1.0;
                }
                log.approx_kl += (ratio - 1.0) - log_ratio;

                let vtrace = value_net.forward_trace(obs)?;
                let err = vtrace.output()[0] - batch.returns[i];
                value_loss += 0.5 * err * err / m;
                value_net.accumulate_gradient(&vtrace, &[err / m], &mut vgrad)?;
            }
            let entropy = policy.entropy();
            pgrad.log_std.iter_mut().for_each(|g| *g -= cfg.entropy_coef);
            if !policy_loss.is_finite() || !value_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at gradient step {}: policy {policy_loss}, value {value_loss}",
                    log.gradient_steps
                )));
            }
            clip_by_global_norm(&mut pgrad, cfg.max_grad_norm);
            clip_by_global_norm(&mut vgrad, cfg.max_grad_norm);
            adam_step(policy, &pgrad, &mut opt.policy)?;
            adam_step(value_net, &vgrad, &mut opt.value)?;

            log.policy_loss += policy_loss;
            log.value_loss += value_loss;
            log.entropy += entropy;
            log.gradient_steps += 1;
            samples += mb.len();
            if !tracked.is_empty() && log.gradient_steps % cfg.snapshot_every == 0 {
                let row = tracked
                    .iter()
                    .map(|o| value_net.forward(o).map(|v| v[0]))
                    .collect::<Result<Vec<_>>>()?;
                log.value_snapshots.push(row);
            }
        }
    }
    let steps = log.gradient_steps as f64;
    log.policy_loss /= steps;
    log.value_loss /= steps;
    log.entropy /= steps;
    log.approx_kl /= samples as f64;
    log.clip_fraction /= samples as f64;
    Ok(log)
}
