use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaeConfig {
    pub gamma: f64,
    pub lam: f64,
    /// Treat time-limit endings as truncations: the reward of a step that
    /// times out gets `gamma * V(next observation)` added, so states are not
    /// valued by how much episode time they happen to have left.
    pub bootstrap_timeouts: bool,
}

impl Default for GaeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lam: 0.95,
            bootstrap_timeouts: true,
        }
    }
}

impl GaeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.lam) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lam)));
        }
        Ok(())
    }
}

/// Generalized advantage estimates for one lane. A `done` at step `t` cuts
/// both the bootstrap and the recursion there; `bootstrap_value` is the value
/// of the state following the last step. Returns `(advantages, returns)` with
/// `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    cfg: GaeConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::Shape(format!(
            "GAE inputs differ in length: {} rewards, {} values, {} dones",
            n,
            values.len(),
            dones.len()
        )));
    }
    if rewards
        .iter()
        .chain(values)
        .chain(std::iter::once(&bootstrap_value))
        .any(|v| !v.is_finite())
    {
        return Err(Error::Numeric("GAE inputs".into()));
    }
    let mut advantages = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 == n { bootstrap_value } else { values[t + 1] };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + cfg.gamma * next_value * live - values[t];
        running = delta + cfg.gamma * cfg.lam * live * running;
        advantages[t] = running;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// Shifts and scales to zero mean and unit (population) standard deviation.
/// A constant input is only centered.
pub fn normalize_advantages(advantages: &mut [f64]) {
    if advantages.is_empty() {
        return;
    }
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    advantages.iter_mut().for_each(|a| *a -= mean);
    let var = advantages.iter().map(|a| a * a).sum::<f64>() / n;
    let std = var.sqrt();
    if std > 1e-12 {
        advantages.iter_mut().for_each(|a| *a /= std);
    }
    // a second centering pass removes the residual rounding drift
    let drift = advantages.iter().sum::<f64>() / n;
    advantages.iter_mut().for_each(|a| *a -= drift);
}
