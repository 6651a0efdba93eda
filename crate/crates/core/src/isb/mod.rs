//! Initial state buffers.
//!
//! Visited states flow from each rollout into a [`VisitedStatesBuffer`]
//! through admission filters. After every phase a selection strategy picks
//! a batch of them for the [`InitialStateBuffer`], from which new episodes
//! start with probability `p`.

mod kmeans;
mod select;

pub use kmeans::{kmeans_cosine, normalized, KMeans};
pub use select::{select_by_clusters, select_obs, select_random, select_terminal, select_value};

use std::cell::Cell;
use std::collections::VecDeque;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Env, EnvState, Observation, Task};
use crate::error::{Error, Result};
use crate::ppo::{Provenance, ResetSampler, RolloutBatch};
use crate::rng::Stream;

/// A visited state with the bookkeeping needed by filters and selectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub env_state: EnvState,
    pub observation: Observation,
    pub episode_step: u32,
    pub accumulated_reward: f64,
    pub provenance: Provenance,
    /// The step taken from this state ended the episode.
    pub is_terminal: bool,
    /// Steps until the episode's done flag, when it fell inside the phase.
    pub steps_to_end: Option<u32>,
    pub phase: u64,
    pub lane: usize,
    pub t: usize,
    /// Flat index into the phase's rollout batch.
    pub batch_index: usize,
}

/// One record per transition of `batch`, in lane-major order.
pub fn records_from_batch(batch: &RolloutBatch, phase: u64) -> Vec<StateRecord> {
    let mut records = Vec::with_capacity(batch.len());
    for lane in 0..batch.num_envs {
        let range = batch.lane_range(lane);
        let mut steps_to_end: Option<u32> = None;
        let mut lane_records = Vec::with_capacity(batch.horizon);
        for i in range.clone().rev() {
            steps_to_end = if batch.dones[i] {
                Some(0)
            } else {
                steps_to_end.map(|s| s + 1)
            };
            lane_records.push(StateRecord {
                env_state: batch.states[i].clone(),
                observation: batch.observations[i].clone(),
                episode_step: batch.episode_steps[i],
                accumulated_reward: batch.accumulated_rewards[i],
                provenance: batch.provenance[i],
                is_terminal: batch.dones[i],
                steps_to_end,
                phase,
                lane,
                t: i - range.start,
                batch_index: i,
            });
        }
        lane_records.reverse();
        records.extend(lane_records);
    }
    records
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_episode_step: u32,
    pub require_nonneg_reward: bool,
    pub require_nominal_start_trajectory: bool,
}

impl FilterConfig {
    /// Locomotion drops early and negatively rewarded states; racing keeps
    /// only states from episodes that began at the nominal start.
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Locomotion => Self {
                min_episode_step: 15,
                require_nonneg_reward: true,
                require_nominal_start_trajectory: false,
            },
            Task::Racing => Self {
                min_episode_step: 15,
                require_nonneg_reward: false,
                require_nominal_start_trajectory: true,
            },
        }
    }

    pub fn disabled() -> Self {
        Self {
            min_episode_step: 0,
            require_nonneg_reward: false,
            require_nominal_start_trajectory: false,
        }
    }

    pub fn admits(&self, rec: &StateRecord) -> bool {
        rec.episode_step >= self.min_episode_step
            && !(self.require_nonneg_reward && rec.accumulated_reward < 0.0)
            && !(self.require_nominal_start_trajectory && rec.provenance != Provenance::Nominal)
    }
}

thread_local! {
    static BUFFERS_CONSTRUCTED: Cell<u64> = const { Cell::new(0) };
}

/// Number of state buffers constructed on this thread so far.
pub fn buffers_constructed() -> u64 {
    BUFFERS_CONSTRUCTED.with(|c| c.get())
}

fn count_construction() {
    BUFFERS_CONSTRUCTED.with(|c| c.set(c.get() + 1));
}

/// Bounded FIFO of records shared by both buffer kinds.
#[derive(Clone, Debug, PartialEq)]
struct Fifo {
    capacity: usize,
    records: VecDeque<StateRecord>,
}

impl Fifo {
    fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("buffer capacity must be positive".into()));
        }
        count_construction();
        Ok(Self {
            capacity,
            records: VecDeque::with_capacity(capacity),
        })
    }

    fn push(&mut self, rec: StateRecord) {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(rec);
    }
}

/// Rolling store of admitted visited states, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct VisitedStatesBuffer(Fifo);

impl VisitedStatesBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        Fifo::new(capacity).map(Self)
    }

    pub fn capacity(&self) -> usize {
        self.0.capacity
    }

    pub fn len(&self) -> usize {
        self.0.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.records.is_empty()
    }

    pub fn records(&self) -> &VecDeque<StateRecord> {
        &self.0.records
    }

    /// Appends `rec` if `filt` admits it, evicting the oldest when full.
    pub fn push_visited(&mut self, rec: StateRecord, filt: &FilterConfig) -> bool {
        if !filt.admits(&rec) {
            return false;
        }
        self.0.push(rec);
        true
    }

    pub fn clear(&mut self) {
        self.0.records.clear();
    }
}

/// Candidate reset states, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialStateBuffer(Fifo);

impl InitialStateBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        Fifo::new(capacity).map(Self)
    }

    pub fn capacity(&self) -> usize {
        self.0.capacity
    }

    pub fn len(&self) -> usize {
        self.0.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.records.is_empty()
    }

    pub fn entries(&self) -> &VecDeque<StateRecord> {
        &self.0.records
    }

    /// Appends every selected record in order, evicting the oldest.
    pub fn refresh(&mut self, selected: Vec<StateRecord>) {
        for rec in selected {
            self.0.push(rec);
        }
    }
}

/// Free-function form of [`InitialStateBuffer::refresh`].
pub fn refresh_isb(isb: &mut InitialStateBuffer, selected: Vec<StateRecord>) {
    isb.refresh(selected);
}

/// With probability `p` and a non-empty buffer, a uniformly drawn entry;
/// otherwise the result of `nominal_reset`.
pub fn sample_initial<R: Rng + ?Sized>(
    isb: Option<&InitialStateBuffer>,
    p: f64,
    rng: &mut R,
    nominal_reset: impl FnOnce() -> Result<EnvState>,
) -> Result<(EnvState, Provenance)> {
    if let Some(isb) = isb.filter(|b| !b.is_empty()) {
        if rng.gen_bool(p.clamp(0.0, 1.0)) {
            let i = rng.gen_range(0..isb.len());
            return Ok((isb.entries()[i].env_state.clone(), Provenance::Isb));
        }
    }
    Ok((nominal_reset()?, Provenance::Nominal))
}

/// Which distribution stands in for the nominal start.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartMode {
    Nominal,
    /// Uniform over terrain centers (locomotion only).
    Prior,
}

/// Reset sampler over a read-only buffer snapshot.
pub struct IsbReset<'a> {
    pub isb: Option<&'a InitialStateBuffer>,
    pub p: f64,
    pub start: StartMode,
    pub rng: &'a mut Stream,
}

impl ResetSampler for IsbReset<'_> {
    fn initial_state(&mut self, env: &mut Env) -> Result<(EnvState, Provenance)> {
        let start = self.start;
        sample_initial(self.isb, self.p, self.rng, || match start {
            StartMode::Nominal => Ok(env.sample_nominal_start()),
            StartMode::Prior => env.sample_prior_start(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Vanilla,
    Random,
    Obs,
    Cl,
    Terminal,
    Value,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Vanilla,
        Strategy::Random,
        Strategy::Obs,
        Strategy::Cl,
        Strategy::Terminal,
        Strategy::Value,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Vanilla => "vanilla",
            Strategy::Random => "random",
            Strategy::Obs => "obs",
            Strategy::Cl => "cl",
            Strategy::Terminal => "terminal",
            Strategy::Value => "value",
        }
    }

    pub fn uses_buffer(self) -> bool {
        self != Strategy::Vanilla
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown strategy {s:?}; expected one of vanilla, random, obs, cl, terminal, value"
            ))
        })
    }
}

pub fn write_records<'a>(path: impl AsRef<Path>, records: impl IntoIterator<Item = &'a StateRecord>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<StateRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            records.push(serde_json::from_str(&line)?);
        }
    }
    Ok(records)
}
