use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::clbuffer::{assign_delta_v, select_cl, track_states, tracking_plan, train_embedding, TrainReport};
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::isb::{
    records_from_batch, select_obs, select_random, select_terminal, select_value, write_records, InitialStateBuffer,
    IsbReset, StartMode, StateRecord, Strategy, VisitedStatesBuffer,
};
use crate::nn::{save_checkpoint, AdamState, Mlp};
use crate::ppo::{
    collect_rollout, evaluate_policy, is_success, ppo_update, GaussianPolicy, PpoOptimizers, PreparedBatch, Provenance,
    VecEnv,
};
use crate::rng::seeded_rng;

use super::ExperimentConfig;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";
pub const RUN_FILE: &str = "run.json";
pub const UPDATES_FILE: &str = "updates.jsonl";
pub const CL_FILE: &str = "cl.jsonl";
pub const BUFFER_DIR: &str = "buffers";

/// One line of `metrics.jsonl`. Validation fields are `null` except at
/// multiples of the validation interval. Wall-clock time lives in
/// `timing.jsonl` so that this file is reproducible bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u64,
    /// Mean undiscounted return of episodes that ended during the phase.
    pub train_return: Option<f64>,
    pub episodes_completed: u64,
    pub train_success_rate: Option<f64>,
    /// Episodes started during the phase, by start provenance.
    pub resets: BTreeMap<Provenance, u64>,
    pub isb_occupancy: usize,
    pub visited_occupancy: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub validation_return: Option<f64>,
    /// Mean validation return per start label (terrain, or track start).
    pub validation: Option<BTreeMap<String, f64>>,
    pub success_rate: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimingRow {
    pub iteration: u64,
    pub wall_clock_seconds: f64,
}

/// Contents of `run.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub method: String,
    pub seed: u64,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, Serialize)]
struct ClRow<'a> {
    iteration: u64,
    tracked: usize,
    degenerate: usize,
    #[serde(flatten)]
    report: &'a TrainReport,
    cluster_sizes: Vec<usize>,
}

/// Everything a caller may want to inspect after a run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub metrics_path: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub episodes_started: BTreeMap<Provenance, u64>,
    pub episodes_finished: u64,
    pub episodes_in_progress: u64,
    pub visited: Option<Vec<StateRecord>>,
    pub isb: Option<Vec<StateRecord>>,
    pub policy: GaussianPolicy,
}

struct JsonLines {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonLines {
    fn create(path: PathBuf) -> Result<Self> {
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            out: BufWriter::new(file),
            path,
        })
    }

    fn write<T: Serialize>(&mut self, row: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, row)?;
        self.out.write_all(b"\n").map_err(|e| Error::io(&self.path, e))?;
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Runs the full train/validate loop and writes its artifacts to `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<RunOutcome> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref().to_path_buf();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    write_json(
        &out_dir.join(RUN_FILE),
        &RunInfo {
            method: cfg.method_name(),
            seed: cfg.seed,
            config: cfg.clone(),
        },
    )?;
    let metrics_path = out_dir.join(METRICS_FILE);
    let mut metrics = JsonLines::create(metrics_path.clone())?;
    let mut timing = JsonLines::create(out_dir.join(TIMING_FILE))?;
    let mut updates = if cfg.output.write_updates {
        Some(JsonLines::create(out_dir.join(UPDATES_FILE))?)
    } else {
        None
    };
    let strategy = cfg.isb.strategy;
    let mut cl_log = if strategy == Strategy::Cl {
        Some(JsonLines::create(out_dir.join(CL_FILE))?)
    } else {
        None
    };
    if cfg.output.dump_every > 0 && strategy.uses_buffer() {
        let dir = out_dir.join(BUFFER_DIR);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let result = train(cfg, &out_dir, &mut metrics, &mut timing, &mut updates, &mut cl_log);
    if let Err(e) = &result {
        warn!("run aborted: {e}");
    }
    let mut outcome = result?;
    outcome.out_dir = out_dir;
    outcome.metrics_path = metrics_path;
    Ok(outcome)
}

fn train(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    metrics: &mut JsonLines,
    timing: &mut JsonLines,
    updates: &mut Option<JsonLines>,
    cl_log: &mut Option<JsonLines>,
) -> Result<RunOutcome> {
    let seed = cfg.seed;
    let strategy = cfg.isb.strategy;
    let env_cfg = cfg.env_config();
    let filters = cfg.filters();
    let start = if cfg.prior_init {
        StartMode::Prior
    } else {
        StartMode::Nominal
    };
    let started = Instant::now();

    let mut sampler_rng = seeded_rng(seed, "sampler");
    let mut select_rng = seeded_rng(seed, "select");
    let mut kmeans_rng = seeded_rng(seed, "kmeans");
    let mut minibatch_rng = seeded_rng(seed, "ppo/minibatch");

    let mut visited = if strategy.uses_buffer() {
        Some(VisitedStatesBuffer::new(cfg.visited_capacity())?)
    } else {
        None
    };
    let mut isb = if strategy.uses_buffer() {
        Some(InitialStateBuffer::new(cfg.isb.capacity)?)
    } else {
        None
    };

    let mut venv = VecEnv::new(
        &env_cfg,
        cfg.num_envs,
        seed,
        &mut IsbReset {
            isb: isb.as_ref(),
            p: cfg.isb.p,
            start,
            rng: &mut sampler_rng,
        },
    )?;
    let obs_dim = venv.obs_dim();
    let mut policy = GaussianPolicy::new(
        obs_dim,
        &cfg.policy_hidden,
        venv.action_dim(),
        cfg.init_log_std,
        &mut seeded_rng(seed, "init/policy"),
    );
    let mut value_sizes = vec![obs_dim];
    value_sizes.extend_from_slice(&cfg.value_hidden);
    value_sizes.push(1);
    let mut value_net = Mlp::new(&value_sizes, &mut seeded_rng(seed, "init/value"));
    let mut opt = PpoOptimizers::new(&policy, &value_net, &cfg.ppo);

    let mut cl = if strategy == Strategy::Cl {
        let net = cfg
            .contrastive
            .build_net(obs_dim, &mut seeded_rng(seed, "init/embedding"));
        let adam = AdamState::new(&net, cfg.contrastive.adam);
        Some((net, adam, seeded_rng(seed, "cl/track"), seeded_rng(seed, "cl/anchor")))
    } else {
        None
    };

    let mut eval_env = Env::new(&env_cfg, seeded_rng(seed, "env/eval"))?;
    let validation_starts = eval_env.validation_starts();
    let mut rows = Vec::with_capacity(cfg.iterations as usize);

    for iteration in 1..=cfg.iterations {
        let batch = collect_rollout(
            &policy,
            &value_net,
            &mut venv,
            cfg.rollout_length,
            &mut IsbReset {
                isb: isb.as_ref(),
                p: cfg.isb.p,
                start,
                rng: &mut sampler_rng,
            },
        )?;

        let mut cluster_sizes = Vec::new();
        if let (Some(visited), Some(isb)) = (visited.as_mut(), isb.as_mut()) {
            for rec in records_from_batch(&batch, iteration) {
                visited.push_visited(rec, &filters);
            }
            let n = cfg.isb.n;
            let selected = match strategy {
                Strategy::Random => select_random(visited, n, &mut select_rng),
                Strategy::Obs => select_obs(visited, n, cfg.isb.k, &mut kmeans_rng),
                Strategy::Terminal => select_terminal(visited, n, cfg.isb.terminal_window, &mut select_rng),
                Strategy::Value => select_value(visited, n, &value_net),
                Strategy::Cl => {
                    let (net, ..) = cl.as_ref().expect("cl state exists for the cl strategy");
                    select_cl(visited, n, cfg.isb.k, net, &mut kmeans_rng).map(|(sel, km)| {
                        cluster_sizes = km.members().iter().map(Vec::len).collect();
                        sel
                    })
                }
                Strategy::Vanilla => unreachable!("vanilla runs hold no buffers"),
            };
            match selected {
                Ok(sel) => isb.refresh(sel),
                Err(Error::EmptySelection(msg)) => info!("iteration {iteration}: {msg}"),
                Err(e) => return Err(e),
            }
        }

        let mut tracked = Vec::new();
        let mut plan = None;
        if let (Some((_, _, track_rng, _)), Some(visited)) = (cl.as_mut(), visited.as_ref()) {
            tracked = track_states(visited, &batch, iteration, cfg.contrastive.tracked_count, track_rng);
            plan = Some(tracking_plan(&tracked, &batch));
        }
        let tracked_obs: &[Vec<f64>] = plan.as_ref().map_or(&[], |p| &p.observations);

        let prepared = PreparedBatch::from_rollout(&batch, cfg.ppo.gae)?;
        let mut log = ppo_update(
            &mut policy,
            &mut value_net,
            &mut opt,
            &prepared,
            &cfg.ppo,
            tracked_obs,
            &mut minibatch_rng,
        )
        .map_err(|e| Error::Numeric(format!("iteration {iteration}: {e}")))?;
        log.iteration = iteration;

        if let (Some((net, adam, _, anchor_rng)), Some(plan)) = (cl.as_mut(), plan.as_ref()) {
            assign_delta_v(
                &mut tracked,
                plan,
                &log.value_snapshots,
                &batch,
                cfg.ppo.gae,
                cfg.contrastive.aggregation,
            )?;
            let report = if tracked.len() >= 4 {
                train_embedding(net, adam, &tracked, &cfg.contrastive, anchor_rng)?
            } else {
                TrainReport::default()
            };
            if let Some(out) = cl_log.as_mut() {
                out.write(&ClRow {
                    iteration,
                    tracked: tracked.len(),
                    degenerate: tracked.iter().filter(|t| t.degenerate).count(),
                    report: &report,
                    cluster_sizes,
                })?;
            }
        }
        if let Some(out) = updates.as_mut() {
            let heads = plan.as_ref().map(|p| p.head_columns.clone()).unwrap_or_default();
            out.write(&log.restrict_columns(&heads))?;
        }

        let completed = batch.completed_returns.len() as u64;
        let successes = batch
            .completed_terminations
            .iter()
            .filter(|t| is_success(&eval_env, **t))
            .count();
        let mut row = MetricsRow {
            iteration,
            train_return: (completed > 0).then(|| batch.completed_returns.iter().sum::<f64>() / completed as f64),
            episodes_completed: completed,
            train_success_rate: (completed > 0).then(|| successes as f64 / completed as f64),
            resets: batch.resets.clone(),
            isb_occupancy: isb.as_ref().map_or(0, InitialStateBuffer::len),
            visited_occupancy: visited.as_ref().map_or(0, VisitedStatesBuffer::len),
            policy_loss: log.policy_loss,
            value_loss: log.value_loss,
            entropy: log.entropy,
            validation_return: None,
            validation: None,
            success_rate: None,
        };
        if iteration % cfg.validation_interval == 0 {
            let eval = evaluate_policy(&policy, &mut eval_env, &validation_starts, cfg.validation_episodes)?;
            row.validation_return = Some(eval.mean_return);
            row.validation = Some(eval.per_init.iter().map(|e| (e.label.clone(), e.mean_return)).collect());
            row.success_rate = Some(eval.success_rate);
        }
        metrics.write(&row)?;
        timing.write(&TimingRow {
            iteration,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        })?;
        rows.push(row);

        if cfg.output.dump_every > 0 && iteration % cfg.output.dump_every == 0 {
            if let (Some(visited), Some(isb)) = (visited.as_ref(), isb.as_ref()) {
                let dir = out_dir.join(BUFFER_DIR);
                write_records(dir.join(buffer_file("isb", iteration)), isb.entries())?;
                write_records(dir.join(buffer_file("visited", iteration)), visited.records())?;
            }
        }
    }

    save_checkpoint(&policy.mean, out_dir.join("policy.ckpt.json"))?;
    save_checkpoint(&value_net, out_dir.join("value.ckpt.json"))?;
    if let Some((net, ..)) = cl.as_ref() {
        save_checkpoint(net, out_dir.join("embedding.ckpt.json"))?;
    }
    write_json(&out_dir.join("log_std.json"), &policy.log_std)?;

    Ok(RunOutcome {
        out_dir: PathBuf::new(),
        metrics_path: PathBuf::new(),
        rows,
        episodes_started: venv.episodes_started().clone(),
        episodes_finished: venv.episodes_finished(),
        episodes_in_progress: venv.episodes_in_progress(),
        visited: visited.map(|b| b.records().iter().cloned().collect()),
        isb: isb.map(|b| b.entries().iter().cloned().collect()),
        policy,
    })
}

/// File name of a buffer dump, e.g. `isb-00020.jsonl`.
pub fn buffer_file(kind: &str, iteration: u64) -> String {
    format!("{kind}-{iteration:05}.jsonl")
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Schema(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}
