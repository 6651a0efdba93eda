//! Point-mass locomotion over a tiled heightfield.
//!
//! The body tracks a planar velocity command while a spring-damped "leg"
//! keeps it at nominal height above the ground. Terrain tiles change the
//! ground profile (bumps, hills, bowls, stairs) and friction, so each tile
//! demands different compensation. Leaving the height band or exceeding the
//! speed limit counts as a fall.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{clip_action, EnvState, Observation, StepResult, Task, TaskDetail, Termination};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Upper bound on `|reward|` for a single locomotion step.
pub const LOCOMOTION_REWARD_BOUND: f64 = 3.0;

const ACTION_DIM: usize = 3;
const SAMPLE_OFFSETS: [(f64, f64); 8] = [
    (-1.0, -1.0),
    (0.0, -1.0),
    (1.0, -1.0),
    (-1.0, 0.0),
    (1.0, 0.0),
    (-1.0, 1.0),
    (0.0, 1.0),
    (1.0, 1.0),
];
const OBS_DIM: usize = 6 + SAMPLE_OFFSETS.len();

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terrain {
    Flat,
    Rough,
    UpSlope,
    DownSlope,
    Steps,
}

impl Terrain {
    pub const ALL: [Terrain; 5] = [
        Terrain::Flat,
        Terrain::Rough,
        Terrain::UpSlope,
        Terrain::DownSlope,
        Terrain::Steps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Terrain::Flat => "flat",
            Terrain::Rough => "rough",
            Terrain::UpSlope => "up_slope",
            Terrain::DownSlope => "down_slope",
            Terrain::Steps => "steps",
        }
    }

    fn friction(self) -> f64 {
        match self {
            Terrain::Flat => 1.0,
            Terrain::Rough => 0.75,
            Terrain::UpSlope | Terrain::DownSlope | Terrain::Steps => 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocomotionConfig {
    /// Rows of tiles; row `r`, column `c` spans `[c*s, (c+1)*s] x [r*s, (r+1)*s]`.
    pub layout: Vec<Vec<Terrain>>,
    pub tile_size: f64,
    pub horizon: u32,
    pub dt: f64,
    /// Half-width of the uniform position noise around the nominal spawn (m).
    pub start_noise: f64,
    /// Commanded speed range (m/s); heading is uniform.
    pub command_speed: [f64; 2],
    /// Commands used at every validation start.
    pub validation_commands: Vec<[f64; 2]>,
    pub accel_gain: f64,
    pub drag: f64,
    pub slope_gravity: f64,
    pub leg_gain: f64,
    pub leg_stiffness: f64,
    pub leg_damping: f64,
    pub rough_amplitude: f64,
    pub rough_wavelength: f64,
    pub slope: f64,
    pub step_height: f64,
    pub step_width: f64,
    pub sample_spacing: f64,
    pub crash_height: f64,
    pub crash_speed: f64,
    pub crash_penalty: f64,
}

impl Default for LocomotionConfig {
    fn default() -> Self {
        use Terrain::*;
        Self {
            layout: vec![
                vec![Rough, UpSlope, Steps],
                vec![DownSlope, Flat, Rough],
                vec![Steps, UpSlope, DownSlope],
            ],
            tile_size: 4.0,
            horizon: 512,
            dt: 0.05,
            start_noise: 0.5,
            command_speed: [0.3, 1.0],
            validation_commands: vec![[0.6, 0.0], [0.0, 0.6], [-0.6, 0.0], [0.0, -0.6]],
            accel_gain: 3.0,
            drag: 1.0,
            slope_gravity: 5.0,
            leg_gain: 10.0,
            leg_stiffness: 20.0,
            leg_damping: 4.0,
            rough_amplitude: 0.05,
            rough_wavelength: 0.8,
            slope: 0.25,
            step_height: 0.08,
            step_width: 0.5,
            sample_spacing: 0.4,
            crash_height: 0.3,
            crash_speed: 3.0,
            crash_penalty: 2.0,
        }
    }
}

impl LocomotionConfig {
    pub fn validate(&self) -> Result<()> {
        let rows = self.layout.len();
        if rows == 0
            || self
                .layout
                .iter()
                .any(|r| r.len() != self.layout[0].len() || r.is_empty())
        {
            return Err(Error::Config("terrain layout must be a non-empty rectangle".into()));
        }
        let positive = [
            ("tile_size", self.tile_size),
            ("dt", self.dt),
            ("rough_wavelength", self.rough_wavelength),
            ("step_width", self.step_width),
            ("crash_height", self.crash_height),
            ("crash_speed", self.crash_speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("locomotion {name} must be positive")));
            }
        }
        if self.horizon == 0 {
            return Err(Error::Config("locomotion horizon must be positive".into()));
        }
        if !(self.command_speed[0] >= 0.0 && self.command_speed[0] <= self.command_speed[1]) {
            return Err(Error::Config(
                "command_speed must be an ordered non-negative range".into(),
            ));
        }
        if self.start_noise < 0.0 || self.start_noise > self.tile_size / 2.0 {
            return Err(Error::Config("start_noise must lie within the spawn tile".into()));
        }
        Ok(())
    }

    fn rows(&self) -> usize {
        self.layout.len()
    }

    fn cols(&self) -> usize {
        self.layout[0].len()
    }

    /// Spawn point: center of the middle tile.
    pub fn spawn_point(&self) -> [f64; 2] {
        self.tile_center(self.rows() / 2, self.cols() / 2)
    }

    pub fn tile_center(&self, row: usize, col: usize) -> [f64; 2] {
        [(col as f64 + 0.5) * self.tile_size, (row as f64 + 0.5) * self.tile_size]
    }

    /// `(row, col)` of the tile containing `p`, if it lies inside the layout.
    pub fn tile_at(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let c = (p[0] / self.tile_size).floor();
        let r = (p[1] / self.tile_size).floor();
        if c < 0.0 || r < 0.0 || c as usize >= self.cols() || r as usize >= self.rows() {
            return None;
        }
        Some((r as usize, c as usize))
    }

    pub fn terrain_at(&self, p: [f64; 2]) -> Terrain {
        self.tile_at(p).map(|(r, c)| self.layout[r][c]).unwrap_or(Terrain::Flat)
    }

    /// Ground height and its gradient at `p`. Every tile profile is zero on
    /// its border, so the heightfield is continuous across tiles.
    pub fn ground(&self, p: [f64; 2]) -> (f64, [f64; 2]) {
        let Some((r, c)) = self.tile_at(p) else {
            return (0.0, [0.0, 0.0]);
        };
        let half = self.tile_size / 2.0;
        let center = self.tile_center(r, c);
        let dx = p[0] - center[0];
        let dy = p[1] - center[1];
        let inf_norm = dx.abs().max(dy.abs());
        // d(inf_norm)/dp, zero exactly at the center
        let inf_grad = if dx == 0.0 && dy == 0.0 {
            [0.0, 0.0]
        } else if dx.abs() >= dy.abs() {
            [dx.signum(), 0.0]
        } else {
            [0.0, dy.signum()]
        };
        match self.layout[r][c] {
            Terrain::Flat => (0.0, [0.0, 0.0]),
            Terrain::Rough => {
                let m = (2.0 * self.tile_size / self.rough_wavelength).round().max(1.0);
                let k = PI * m / self.tile_size;
                let u = dx + half;
                let v = dy + half;
                let a = self.rough_amplitude;
                (
                    a * (k * u).sin() * (k * v).sin(),
                    [
                        a * k * (k * u).cos() * (k * v).sin(),
                        a * k * (k * u).sin() * (k * v).cos(),
                    ],
                )
            }
            Terrain::UpSlope => (
                self.slope * (half - inf_norm),
                [-self.slope * inf_grad[0], -self.slope * inf_grad[1]],
            ),
            Terrain::DownSlope => (
                -self.slope * (half - inf_norm),
                [self.slope * inf_grad[0], self.slope * inf_grad[1]],
            ),
            Terrain::Steps => {
                // The top level is a plateau around the center rather than a point.
                let top = ((half / self.step_width).floor() - 1.0).max(0.0);
                let level = ((half - inf_norm) / self.step_width).floor().clamp(0.0, top);
                (self.step_height * level, [0.0, 0.0])
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct LocomotionEnv {
    config: LocomotionConfig,
    state: EnvState,
    done: bool,
    rng: Stream,
}

impl LocomotionEnv {
    pub fn new(config: LocomotionConfig, rng: Stream) -> Self {
        let spawn = config.spawn_point();
        Self {
            state: EnvState {
                position: spawn,
                velocity: [0.0, 0.0],
                detail: TaskDetail::Locomotion {
                    command: [0.0, 0.0],
                    height_offset: 0.0,
                    vertical_velocity: 0.0,
                },
                episode_step: 0,
                accumulated_reward: 0.0,
            },
            config,
            done: true,
            rng,
        }
    }

    pub fn config(&self) -> &LocomotionConfig {
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

    fn sample_command(&mut self) -> [f64; 2] {
        let [lo, hi] = self.config.command_speed;
        let speed = if hi > lo { self.rng.gen_range(lo..=hi) } else { lo };
        let angle = self.rng.gen_range(-PI..PI);
        [speed * angle.cos(), speed * angle.sin()]
    }

    fn standing_state(position: [f64; 2], command: [f64; 2]) -> EnvState {
        EnvState {
            position,
            velocity: [0.0, 0.0],
            detail: TaskDetail::Locomotion {
                command,
                height_offset: 0.0,
                vertical_velocity: 0.0,
            },
            episode_step: 0,
            accumulated_reward: 0.0,
        }
    }

    pub fn sample_nominal_start(&mut self) -> EnvState {
        let spawn = self.config.spawn_point();
        let n = self.config.start_noise;
        let offset = if n > 0.0 {
            [self.rng.gen_range(-n..=n), self.rng.gen_range(-n..=n)]
        } else {
            [0.0, 0.0]
        };
        let command = self.sample_command();
        Self::standing_state([spawn[0] + offset[0], spawn[1] + offset[1]], command)
    }

    pub fn sample_prior_start(&mut self) -> EnvState {
        let centers = self.terrain_centers();
        let i = self.rng.gen_range(0..centers.len());
        let mut state = centers[i].clone();
        let command = self.sample_command();
        if let TaskDetail::Locomotion { command: c, .. } = &mut state.detail {
            *c = command;
        }
        state
    }

    /// One standing start at the center of the first tile of every terrain
    /// type present in the layout, in [`Terrain::ALL`] order.
    pub fn terrain_centers(&self) -> Vec<EnvState> {
        self.terrain_center_tiles()
            .into_iter()
            .map(|(_, r, c)| {
                Self::standing_state(
                    self.config.tile_center(r, c),
                    self.config.validation_commands.first().copied().unwrap_or([0.0, 0.0]),
                )
            })
            .collect()
    }

    pub fn terrain_center_tiles(&self) -> Vec<(Terrain, usize, usize)> {
        Terrain::ALL
            .iter()
            .filter_map(|t| {
                self.config
                    .layout
                    .iter()
                    .enumerate()
                    .find_map(|(r, row)| row.iter().position(|x| x == t).map(|c| (*t, r, c)))
            })
            .collect()
    }

    pub fn validation_starts(&self) -> Vec<(String, EnvState)> {
        let mut out = Vec::new();
        for (terrain, r, c) in self.terrain_center_tiles() {
            for cmd in &self.config.validation_commands {
                out.push((
                    terrain.name().to_string(),
                    Self::standing_state(self.config.tile_center(r, c), *cmd),
                ));
            }
        }
        out
    }

    pub fn observe(&self) -> Observation {
        self.observation_of(&self.state)
    }

    pub fn snapshot(&self) -> EnvState {
        self.state.clone()
    }

    pub fn restore(&mut self, state: &EnvState) -> Result<()> {
        state.expect_task(Task::Locomotion)?;
        let finite = state.position.iter().chain(&state.velocity).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numeric("restored locomotion state".into()));
        }
        self.state = state.clone();
        self.done = false;
        Ok(())
    }

    pub fn observation_of(&self, state: &EnvState) -> Observation {
        let TaskDetail::Locomotion {
            command,
            height_offset,
            vertical_velocity,
        } = state.detail
        else {
            unreachable!("task checked by caller");
        };
        let p = state.position;
        let (g0, _) = self.config.ground(p);
        let mut obs = Vec::with_capacity(OBS_DIM);
        obs.extend_from_slice(&command);
        obs.extend_from_slice(&state.velocity);
        obs.push(height_offset / self.config.crash_height);
        obs.push(vertical_velocity);
        let s = self.config.sample_spacing;
        for (ox, oy) in SAMPLE_OFFSETS {
            let (g, _) = self.config.ground([p[0] + ox * s, p[1] + oy * s]);
            obs.push((g - g0) / self.config.crash_height);
        }
        obs
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.done {
            return Err(Error::Protocol("step called on a finished episode; reset first".into()));
        }
        let a = clip_action(action, ACTION_DIM)?;
        let cfg = &self.config;
        let dt = cfg.dt;
        let TaskDetail::Locomotion {
            command,
            height_offset,
            vertical_velocity,
        } = self.state.detail
        else {
            unreachable!("locomotion env holds locomotion state");
        };

        let p = self.state.position;
        let v = self.state.velocity;
        let (g0, grad) = cfg.ground(p);
        let mu = cfg.terrain_at(p).friction();
        let mut v_new = [0.0; 2];
        for i in 0..2 {
            v_new[i] = v[i] + dt * (mu * cfg.accel_gain * a[i] - cfg.drag * v[i] - cfg.slope_gravity * grad[i]);
        }
        let p_new = [p[0] + dt * v_new[0], p[1] + dt * v_new[1]];
        let (g1, _) = cfg.ground(p_new);
        let w_new = vertical_velocity
            + dt * (cfg.leg_gain * a[2] - cfg.leg_stiffness * height_offset - cfg.leg_damping * vertical_velocity);
        let z_new = height_offset + dt * w_new - (g1 - g0);

        let err2 = (v_new[0] - command[0]).powi(2) + (v_new[1] - command[1]).powi(2);
        let speed = (v_new[0] * v_new[0] + v_new[1] * v_new[1]).sqrt();
        let fell = z_new.abs() > cfg.crash_height || speed > cfg.crash_speed;
        let mut reward = tracking_reward(err2) - 2.0 * z_new * z_new - 0.01 * (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
        if fell {
            reward -= cfg.crash_penalty;
        }

        self.state.position = p_new;
        self.state.velocity = v_new;
        self.state.detail = TaskDetail::Locomotion {
            command,
            height_offset: z_new,
            vertical_velocity: w_new,
        };
        self.state.episode_step += 1;
        self.state.accumulated_reward += reward;

        let termination = if fell {
            Termination::Crash
        } else if self.state.episode_step >= cfg.horizon {
            Termination::Timeout
        } else {
            Termination::None
        };
        self.done = termination != Termination::None;
        Ok(StepResult::new(self.observation_of(&self.state), reward, termination))
    }
}

/// Velocity-tracking term: 0.75 at perfect tracking, -0.25 far from it.
pub(crate) fn tracking_reward(squared_error: f64) -> f64 {
    (-squared_error / 0.25).exp() - 0.25
}
