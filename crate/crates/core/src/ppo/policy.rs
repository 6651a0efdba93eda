use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mlp, Parameters, Trace};

const LOG_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Diagonal Gaussian policy: the network outputs the mean, the log standard
/// deviation is a free, state-independent parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        hidden: &[usize],
        action_dim: usize,
        init_log_std: f64,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        let mut mean = Mlp::new(&sizes, rng);
        // small output layer keeps initial actions near zero
        if let Some(last) = mean.layers.last_mut() {
            last.weights.iter_mut().for_each(|w| *w *= 0.01);
        }
        Self {
            mean,
            log_std: vec![init_log_std; action_dim],
        }
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.mean.forward(obs)
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64)> {
        let mu = self.mean.forward(obs)?;
        let action: Vec<f64> = mu
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let z: f64 = rng.sample(StandardNormal);
                m + ls.exp() * z
            })
            .collect();
        let lp = self.log_prob_from_mean(&mu, &action)?;
        Ok((action, lp))
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        let mu = self.mean.forward(obs)?;
        self.log_prob_from_mean(&mu, action)
    }

    pub fn log_prob_from_mean(&self, mu: &[f64], action: &[f64]) -> Result<f64> {
        if action.len() != mu.len() {
            return Err(Error::Shape(format!(
                "action has {} entries, policy produces {}",
                action.len(),
                mu.len()
            )));
        }
        Ok(mu
            .iter()
            .zip(action)
            .zip(&self.log_std)
            .map(|((m, a), ls)| {
                let z = (a - m) / ls.exp();
                -0.5 * z * z - ls - LOG_SQRT_2PI
            })
            .sum())
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 + LOG_SQRT_2PI).sum()
    }

    /// Accumulates `coef * d log_prob / d params` for one sample whose mean
    /// network trace is `trace`.
    pub(crate) fn accumulate_log_prob_grad(
        &self,
        trace: &Trace,
        action: &[f64],
        coef: f64,
        grad: &mut GaussianPolicy,
    ) -> Result<()> {
        let mu = trace.output();
        let mut out_grad = Vec::with_capacity(mu.len());
        for (j, ((m, a), ls)) in mu.iter().zip(action).zip(&self.log_std).enumerate() {
            let var = (2.0 * ls).exp();
            let d = a - m;
            out_grad.push(coef * d / var);
            grad.log_std[j] += coef * (d * d / var - 1.0);
        }
        self.mean.accumulate_gradient(trace, &out_grad, &mut grad.mean)?;
        Ok(())
    }
}

impl Parameters for GaussianPolicy {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut t = self.mean.tensors();
        t.push(("log_std".to_string(), self.log_std.as_slice()));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.mean.tensors_mut();
        t.push(self.log_std.as_mut_slice());
        t
    }

    fn zeros_like(&self) -> Self {
        Self {
            mean: self.mean.zeros_like(),
            log_std: vec![0.0; self.log_std.len()],
        }
    }
}
