use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bundle of named flat tensors an optimizer can walk in a fixed order.
pub trait Parameters: Clone {
    fn tensors(&self) -> Vec<(String, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
    fn zeros_like(&self) -> Self;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState<P> {
    pub first_moment: P,
    pub second_moment: P,
    pub step_count: u64,
    pub config: AdamConfig,
}

impl<P: Parameters> AdamState<P> {
    pub fn new(params: &P, config: AdamConfig) -> Self {
        Self {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step_count: 0,
            config,
        }
    }
}

fn shape_of<P: Parameters>(p: &P) -> Vec<usize> {
    p.tensors().iter().map(|(_, t)| t.len()).collect()
}

/// One bias-corrected Adam update. Gradients are validated before anything is
/// written, so a rejected step leaves both parameters and state untouched.
pub fn adam_step<P: Parameters>(params: &mut P, grads: &P, state: &mut AdamState<P>) -> Result<()> {
    let shape = shape_of(params);
    if shape != shape_of(grads) || shape != shape_of(&state.first_moment) || shape != shape_of(&state.second_moment) {
        return Err(Error::Shape(
            "gradient or optimizer state does not match parameters".into(),
        ));
    }
    for (name, t) in grads.tensors() {
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("gradient of {name}")));
        }
    }

    state.step_count += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step_count as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);

    let grads = grads.tensors();
    let params = params.tensors_mut();
    let m = state.first_moment.tensors_mut();
    let v = state.second_moment.tensors_mut();
    for (((p, (_, g)), m), v) in params.into_iter().zip(grads).zip(m).zip(v) {
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}
