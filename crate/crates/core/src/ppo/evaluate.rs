use serde::{Deserialize, Serialize};

use crate::envs::{Env, EnvState, Termination};
use crate::error::Result;

use super::GaussianPolicy;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitEvaluation {
    pub label: String,
    pub mean_return: f64,
    pub success_rate: f64,
}

/// Results grouped by start label in first-seen order, plus aggregates over
/// every episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub per_init: Vec<InitEvaluation>,
    pub mean_return: f64,
    pub success_rate: f64,
}

/// Whether an episode that ended with `termination` counts as a success:
/// completing the lap when racing, staying upright until timeout otherwise.
pub fn is_success(env: &Env, termination: Termination) -> bool {
    match env {
        Env::Racing(_) => termination == Termination::Goal,
        Env::Locomotion(_) => termination == Termination::Timeout,
    }
}

/// Rolls out the mean action from each labelled start `episodes` times and
/// reports undiscounted returns.
pub fn evaluate_policy(
    policy: &GaussianPolicy,
    env: &mut Env,
    inits: &[(String, EnvState)],
    episodes: usize,
) -> Result<Evaluation> {
    let mut groups: Vec<(String, Vec<f64>, Vec<bool>)> = Vec::new();
    for (label, init) in inits {
        for _ in 0..episodes {
            let mut obs = env.reset(Some(init))?;
            let mut total = 0.0;
            let termination = loop {
                let action = policy.mean_action(&obs)?;
                let step = env.step(&action)?;
                total += step.reward;
                if step.done {
                    break step.termination;
                }
                obs = step.observation;
            };
            let success = is_success(env, termination);
            match groups.iter_mut().find(|g| &g.0 == label) {
                Some(g) => {
                    g.1.push(total);
                    g.2.push(success);
                }
                None => groups.push((label.clone(), vec![total], vec![success])),
            }
        }
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let rate = |v: &[bool]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().filter(|s| **s).count() as f64 / v.len() as f64
        }
    };
    let all_returns: Vec<f64> = groups.iter().flat_map(|g| g.1.iter().copied()).collect();
    let all_success: Vec<bool> = groups.iter().flat_map(|g| g.2.iter().copied()).collect();
    Ok(Evaluation {
        per_init: groups
            .iter()
            .map(|(label, returns, success)| InitEvaluation {
                label: label.clone(),
                mean_return: mean(returns),
                success_rate: rate(success),
            })
            .collect(),
        mean_return: mean(&all_returns),
        success_rate: rate(&all_success),
    })
}
