//! Planar point-mass racing through an ordered loop of gates.
//!
//! The vehicle commands collective thrust along its heading and a yaw-rate
//! setpoint. Each step pays the distance closed toward the next gate; passing
//! a gate inside its extent pays a bonus. Leaving the corridor around the
//! center line, or crossing a gate plane outside the gate, is a crash. The
//! episode succeeds once every remaining gate of the lap has been passed.

use serde::{Deserialize, Serialize};

use super::{clip_action, EnvState, Observation, StepResult, Task, TaskDetail, Termination};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Upper bound on `|reward|` for a single racing step with default settings:
/// progress is at most `progress_coef * max_thrust / drag * dt`, plus one gate
/// bonus and one crash penalty.
pub const RACING_REWARD_BOUND: f64 = 16.0;

const ACTION_DIM: usize = 2;
const OBS_DIM: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub x: f64,
    pub y: f64,
    /// Direction of travel through the gate (radians). Derived from the
    /// neighbouring gates when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RacingConfig {
    pub gates: Vec<Gate>,
    pub gate_half_width: f64,
    pub corridor_half_width: f64,
    pub horizon: u32,
    pub dt: f64,
    pub max_thrust: f64,
    pub drag: f64,
    pub max_yaw_rate: f64,
    pub yaw_response: f64,
    /// Distance of the start pose behind the first gate (m).
    pub start_offset: f64,
    pub progress_coef: f64,
    pub gate_bonus: f64,
    pub crash_penalty: f64,
}

impl Default for RacingConfig {
    fn default() -> Self {
        let g = |x, y| Gate { x, y, angle: None };
        Self {
            gates: vec![
                g(0.0, 0.0),
                g(12.0, 2.0),
                g(18.0, 10.0),
                g(10.0, 16.0),
                g(0.0, 12.0),
                g(-6.0, 5.0),
            ],
            gate_half_width: 1.0,
            corridor_half_width: 2.5,
            horizon: 1024,
            dt: 0.05,
            max_thrust: 9.0,
            drag: 1.5,
            max_yaw_rate: 3.0,
            yaw_response: 10.0,
            start_offset: 3.0,
            progress_coef: 1.0,
            gate_bonus: 10.0,
            crash_penalty: 5.0,
        }
    }
}

impl RacingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gates.len() < 3 {
            return Err(Error::Config("a race track needs at least three gates".into()));
        }
        let positive = [
            ("gate_half_width", self.gate_half_width),
            ("corridor_half_width", self.corridor_half_width),
            ("dt", self.dt),
            ("max_thrust", self.max_thrust),
            ("drag", self.drag),
            ("max_yaw_rate", self.max_yaw_rate),
            ("yaw_response", self.yaw_response),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("racing {name} must be positive")));
            }
        }
        if self.horizon == 0 {
            return Err(Error::Config("racing horizon must be positive".into()));
        }
        for (i, w) in self.gates.windows(2).enumerate() {
            if w[0].x == w[1].x && w[0].y == w[1].y {
                return Err(Error::Config(format!("gates {i} and {} coincide", i + 1)));
            }
        }
        Ok(())
    }

    pub fn gate_center(&self, i: usize) -> [f64; 2] {
        let g = self.gates[i];
        [g.x, g.y]
    }

    /// Unit normal pointing in the direction of travel.
    pub fn gate_normal(&self, i: usize) -> [f64; 2] {
        let n = self.gates.len();
        let angle = self.gates[i].angle.unwrap_or_else(|| {
            let prev = self.gate_center((i + n - 1) % n);
            let next = self.gate_center((i + 1) % n);
            (next[1] - prev[1]).atan2(next[0] - prev[0])
        });
        [angle.cos(), angle.sin()]
    }

    /// Distance from `p` to the closed polyline through the gate centers.
    pub fn corridor_distance(&self, p: [f64; 2]) -> f64 {
        let n = self.gates.len();
        (0..n)
            .map(|i| segment_distance(p, self.gate_center(i), self.gate_center((i + 1) % n)))
            .fold(f64::INFINITY, f64::min)
    }
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0);
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[derive(Clone, Debug)]
pub struct RacingEnv {
    config: RacingConfig,
    state: EnvState,
    done: bool,
    // Unused by the fixed start pose; kept so every env owns its stream.
    #[allow(dead_code)]
    rng: Stream,
}

/// Outcome of a segment crossing a gate plane.
#[derive(Debug, PartialEq)]
pub(crate) enum Crossing {
    None,
    Inside,
    Outside,
}

impl RacingEnv {
    pub fn new(config: RacingConfig, rng: Stream) -> Self {
        let state = start_state(&config);
        Self {
            config,
            state,
            done: true,
            rng,
        }
    }

    pub fn config(&self) -> &RacingConfig {
        &self.config
    }

    pub fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    pub fn action_dim(&self) -> usize {
        ACTION_DIM
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn start_state(&self) -> EnvState {
        start_state(&self.config)
    }

    pub fn sample_nominal_start(&mut self) -> EnvState {
        self.start_state()
    }

    pub fn observe(&self) -> Observation {
        self.observation_of(&self.state)
    }

    pub fn snapshot(&self) -> EnvState {
        self.state.clone()
    }

    pub fn restore(&mut self, state: &EnvState) -> Result<()> {
        state.expect_task(Task::Racing)?;
        if let TaskDetail::Racing { next_gate, .. } = state.detail {
            if next_gate >= self.config.gates.len() {
                return Err(Error::Protocol(format!(
                    "gate index {next_gate} outside a {}-gate track",
                    self.config.gates.len()
                )));
            }
        }
        self.state = state.clone();
        self.done = false;
        Ok(())
    }

    pub fn observation_of(&self, state: &EnvState) -> Observation {
        let TaskDetail::Racing {
            heading,
            yaw_rate,
            next_gate,
            ..
        } = state.detail
        else {
            unreachable!("task checked by caller");
        };
        let (s, c) = heading.sin_cos();
        let to_body = |v: [f64; 2]| [c * v[0] + s * v[1], -s * v[0] + c * v[1]];
        let p = state.position;
        let n = self.config.gates.len();
        let center = self.config.gate_center(next_gate);
        let normal = self.config.gate_normal(next_gate);
        let tangent = [-normal[1], normal[0]];
        let w = self.config.gate_half_width;
        let mut obs = Vec::with_capacity(OBS_DIM);
        for side in [-1.0, 1.0] {
            let corner = [center[0] + side * w * tangent[0], center[1] + side * w * tangent[1]];
            let rel = to_body([corner[0] - p[0], corner[1] - p[1]]);
            obs.push(rel[0] / 10.0);
            obs.push(rel[1] / 10.0);
        }
        let v = to_body(state.velocity);
        obs.push(v[0] / 5.0);
        obs.push(v[1] / 5.0);
        obs.push(yaw_rate / self.config.max_yaw_rate);
        let after = self.config.gate_center((next_gate + 1) % n);
        let rel = to_body([after[0] - p[0], after[1] - p[1]]);
        obs.push(rel[0] / 10.0);
        obs.push(rel[1] / 10.0);
        obs
    }

    pub(crate) fn crossing(&self, gate: usize, from: [f64; 2], to: [f64; 2]) -> Crossing {
        let c = self.config.gate_center(gate);
        let n = self.config.gate_normal(gate);
        let side = |p: [f64; 2]| n[0] * (p[0] - c[0]) + n[1] * (p[1] - c[1]);
        let s0 = side(from);
        let s1 = side(to);
        if !(s0 <= 0.0 && s1 >= 0.0) || (s0 == 0.0 && s1 == 0.0) {
            return Crossing::None;
        }
        let t = if s0 == s1 { 0.0 } else { s0 / (s0 - s1) };
        let q = [from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1])];
        let lateral = -n[1] * (q[0] - c[0]) + n[0] * (q[1] - c[1]);
        if lateral.abs() <= self.config.gate_half_width {
            Crossing::Inside
        } else {
            Crossing::Outside
        }
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.done {
            return Err(Error::Protocol("step called on a finished episode; reset first".into()));
        }
        let a = clip_action(action, ACTION_DIM)?;
        let cfg = &self.config;
        let dt = cfg.dt;
        let TaskDetail::Racing {
            heading,
            yaw_rate,
            next_gate,
            gates_passed,
        } = self.state.detail
        else {
            unreachable!("racing env holds racing state");
        };

        let thrust = 0.5 * (a[0] + 1.0) * cfg.max_thrust;
        let yaw_rate_new = yaw_rate + dt * cfg.yaw_response * (a[1] * cfg.max_yaw_rate - yaw_rate);
        let heading_new = wrap_angle(heading + dt * yaw_rate_new);
        let (s, c) = heading_new.sin_cos();
        let v = self.state.velocity;
        let v_new = [
            v[0] + dt * (thrust * c - cfg.drag * v[0]),
            v[1] + dt * (thrust * s - cfg.drag * v[1]),
        ];
        let p = self.state.position;
        let p_new = [p[0] + dt * v_new[0], p[1] + dt * v_new[1]];

        let target = cfg.gate_center(next_gate);
        let mut reward = cfg.progress_coef * (dist(p, target) - dist(p_new, target));
        let mut next = next_gate;
        let mut passed = gates_passed;
        let mut termination = Termination::None;
        match self.crossing(next_gate, p, p_new) {
            Crossing::Inside => {
                reward += cfg.gate_bonus;
                next = (next_gate + 1) % cfg.gates.len();
                passed += 1;
                if passed >= cfg.gates.len() {
                    termination = Termination::Goal;
                }
            }
            Crossing::Outside => termination = Termination::Crash,
            Crossing::None => {}
        }
        if termination == Termination::None && cfg.corridor_distance(p_new) > cfg.corridor_half_width {
            termination = Termination::Crash;
        }
        if termination == Termination::Crash {
            reward -= cfg.crash_penalty;
        }

        self.state.position = p_new;
        self.state.velocity = v_new;
        self.state.detail = TaskDetail::Racing {
            heading: heading_new,
            yaw_rate: yaw_rate_new,
            next_gate: next,
            gates_passed: passed,
        };
        self.state.episode_step += 1;
        self.state.accumulated_reward += reward;
        if termination == Termination::None && self.state.episode_step >= cfg.horizon {
            termination = Termination::Timeout;
        }
        self.done = termination != Termination::None;
        Ok(StepResult::new(self.observation_of(&self.state), reward, termination))
    }
}

fn start_state(config: &RacingConfig) -> EnvState {
    let c = config.gate_center(0);
    let n = config.gate_normal(0);
    EnvState {
        position: [c[0] - config.start_offset * n[0], c[1] - config.start_offset * n[1]],
        velocity: [0.0, 0.0],
        detail: TaskDetail::Racing {
            heading: n[1].atan2(n[0]),
            yaw_rate: 0.0,
            next_gate: 0,
            gates_passed: 0,
        },
        episode_step: 0,
        accumulated_reward: 0.0,
    }
}

fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    if (-PI..PI).contains(&a) {
        a
    } else {
        (a + PI).rem_euclid(2.0 * PI) - PI
    }
}
