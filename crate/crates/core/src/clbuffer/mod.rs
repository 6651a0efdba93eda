//! Contrastive selection of initial states.
//!
//! A handful of visited states from the latest rollout are tracked through
//! one PPO update. Each gradient step changes the value network, and the
//! change in a tracked state's value is estimated from its trajectory tail.
//! States whose value rose most form the positive set, those whose value
//! fell most the negative set, and an embedding network is trained so that
//! positives cluster together. Reset states are then picked by clustering
//! the visited buffer in embedding space.

use std::collections::BTreeMap;
use std::ops::Range;

use log::warn;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isb::{select_by_clusters, KMeans, StateRecord, VisitedStatesBuffer};
use crate::nn::{adam_step, dot, AdamConfig, AdamState, Mlp};
use crate::ppo::{compute_gae, GaeConfig, RolloutBatch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Mean,
    Last,
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveConfig {
    pub top_k: usize,
    pub temperature: f64,
    pub embedding_dim: usize,
    pub hidden: Vec<usize>,
    pub train_steps_per_update: usize,
    pub tracked_count: usize,
    pub aggregation: Aggregation,
    pub adam: AdamConfig,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            top_k: 16,
            temperature: 0.1,
            embedding_dim: 32,
            hidden: vec![64, 64],
            train_steps_per_update: 8,
            tracked_count: 128,
            aggregation: Aggregation::Mean,
            adam: AdamConfig::default(),
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 || self.embedding_dim == 0 || self.tracked_count == 0 {
            return Err(Error::Config(
                "top_k, embedding_dim and tracked_count must be positive".into(),
            ));
        }
        if self.top_k > self.tracked_count / 2 {
            return Err(Error::Config(format!(
                "top_k {} exceeds half of tracked_count {}",
                self.top_k, self.tracked_count
            )));
        }
        if !(self.temperature > 0.0) || !(self.adam.learning_rate > 0.0) {
            return Err(Error::Config("temperature and learning rate must be positive".into()));
        }
        Ok(())
    }

    /// Projection network from observations to the embedding space.
    pub fn build_net<R: Rng + ?Sized>(&self, obs_dim: usize, rng: &mut R) -> Mlp {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(&self.hidden);
        sizes.push(self.embedding_dim);
        Mlp::new(&sizes, rng)
    }
}

/// A visited state followed through one update phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackedState {
    pub record: StateRecord,
    /// Flat batch indices from the state's occurrence to its episode end.
    pub tail: Range<usize>,
    pub delta_v: f64,
    /// Set when no estimate could be formed and `delta_v` defaulted to zero.
    pub degenerate: bool,
}

/// Uniformly picks up to `count` buffered records that occurred in `batch`
/// (collected during `phase`) and attaches their trajectory tails.
pub fn track_states<R: Rng + ?Sized>(
    buf: &VisitedStatesBuffer,
    batch: &RolloutBatch,
    phase: u64,
    count: usize,
    rng: &mut R,
) -> Vec<TrackedState> {
    let eligible: Vec<&StateRecord> = buf
        .records()
        .iter()
        .filter(|r| r.phase == phase && r.batch_index < batch.len())
        .collect();
    let picks: Vec<usize> = if count >= eligible.len() {
        (0..eligible.len()).collect()
    } else {
        index::sample(rng, eligible.len(), count).into_vec()
    };
    picks
        .into_iter()
        .map(|i| {
            let record = eligible[i].clone();
            TrackedState {
                tail: batch.tail(record.batch_index),
                record,
                delta_v: 0.0,
                degenerate: false,
            }
        })
        .collect()
}

/// Change-in-value estimate for a tail given the updated value network's
/// predictions on it: `V_after(s_0)` minus the lambda-return of the sampled
/// tail under `V_after`, which is `-A_0` of GAE on the tail.
pub fn delta_v_from_values(
    rewards: &[f64],
    values_after: &[f64],
    dones: &[bool],
    bootstrap_after: f64,
    cfg: GaeConfig,
) -> Result<Option<f64>> {
    if rewards.is_empty() {
        return Ok(None);
    }
    let (adv, _) = compute_gae(rewards, values_after, dones, bootstrap_after, cfg)?;
    Ok(Some(-adv[0]))
}

/// [`delta_v_from_values`] with the predictions computed from `value_net_after`.
/// An empty tail yields `(0.0, true)`.
pub fn estimate_delta_v(
    tracked: &TrackedState,
    value_net_after: &Mlp,
    batch: &RolloutBatch,
    cfg: GaeConfig,
) -> Result<(f64, bool)> {
    let tail = tracked.tail.clone();
    let values = batch.observations[tail.clone()]
        .iter()
        .map(|o| value_net_after.forward(o).map(|v| v[0]))
        .collect::<Result<Vec<_>>>()?;
    let bootstrap = match bootstrap_observation(batch, &tail) {
        Some(o) => value_net_after.forward(o)?[0],
        None => 0.0,
    };
    Ok(
        match delta_v_from_values(
            &batch.gae_rewards(tail.clone(), cfg),
            &values,
            &batch.dones[tail],
            bootstrap,
            cfg,
        )? {
            Some(d) => (d, false),
            None => (0.0, true),
        },
    )
}

/// Observation to bootstrap from when a tail runs into the batch horizon.
fn bootstrap_observation<'a>(batch: &'a RolloutBatch, tail: &Range<usize>) -> Option<&'a Vec<f64>> {
    if tail.is_empty() || batch.dones[tail.end - 1] {
        return None;
    }
    let lane = (tail.end - 1) / batch.horizon;
    Some(&batch.final_observations[lane])
}

/// Deduplicated observations whose values must be recorded during an update
/// so that every tracked state's estimate can be formed afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingPlan {
    pub observations: Vec<Vec<f64>>,
    /// Per tracked state: snapshot columns of its tail observations.
    pub tail_columns: Vec<Vec<usize>>,
    /// Per tracked state: snapshot column of its bootstrap observation.
    pub bootstrap_columns: Vec<Option<usize>>,
    /// Per tracked state: snapshot column of the state itself.
    pub head_columns: Vec<usize>,
}

pub fn tracking_plan(tracked: &[TrackedState], batch: &RolloutBatch) -> TrackingPlan {
    let mut observations = Vec::new();
    let mut batch_cols: BTreeMap<usize, usize> = BTreeMap::new();
    let mut final_cols: BTreeMap<usize, usize> = BTreeMap::new();
    let mut plan = TrackingPlan {
        observations: Vec::new(),
        tail_columns: Vec::with_capacity(tracked.len()),
        bootstrap_columns: Vec::with_capacity(tracked.len()),
        head_columns: Vec::with_capacity(tracked.len()),
    };
    for tr in tracked {
        let cols: Vec<usize> = tr
            .tail
            .clone()
            .map(|i| {
                *batch_cols.entry(i).or_insert_with(|| {
                    observations.push(batch.observations[i].clone());
                    observations.len() - 1
                })
            })
            .collect();
        plan.head_columns.push(cols.first().copied().unwrap_or(0));
        plan.tail_columns.push(cols);
        let boot = bootstrap_observation(batch, &tr.tail).map(|o| {
            let lane = (tr.tail.end - 1) / batch.horizon;
            *final_cols.entry(lane).or_insert_with(|| {
                observations.push(o.clone());
                observations.len() - 1
            })
        });
        plan.bootstrap_columns.push(boot);
    }
    plan.observations = observations;
    plan
}

pub fn aggregate(estimates: &[f64], how: Aggregation) -> Option<f64> {
    if estimates.is_empty() {
        return None;
    }
    Some(match how {
        Aggregation::Mean => estimates.iter().sum::<f64>() / estimates.len() as f64,
        Aggregation::Last => *estimates.last().expect("non-empty"),
        Aggregation::Sum => estimates.iter().sum(),
    })
}

/// Fills every tracked state's `delta_v` from the per-step value snapshots
/// recorded on `plan.observations`.
pub fn assign_delta_v(
    tracked: &mut [TrackedState],
    plan: &TrackingPlan,
    snapshots: &[Vec<f64>],
    batch: &RolloutBatch,
    gae: GaeConfig,
    how: Aggregation,
) -> Result<()> {
    for (j, tr) in tracked.iter_mut().enumerate() {
        let mut estimates = Vec::with_capacity(snapshots.len());
        for row in snapshots {
            let values: Vec<f64> = plan.tail_columns[j].iter().map(|&c| row[c]).collect();
            let bootstrap = plan.bootstrap_columns[j].map_or(0.0, |c| row[c]);
            let tail = tr.tail.clone();
            if let Some(d) = delta_v_from_values(
                &batch.gae_rewards(tail.clone(), gae),
                &values,
                &batch.dones[tail],
                bootstrap,
                gae,
            )? {
                estimates.push(d);
            }
        }
        match aggregate(&estimates, how) {
            Some(d) => {
                tr.delta_v = d;
                tr.degenerate = false;
            }
            None => {
                tr.delta_v = 0.0;
                tr.degenerate = true;
            }
        }
    }
    Ok(())
}

/// Indices of the `k` highest and `k` lowest `delta_v`, newest first among
/// ties. `k` shrinks to half the tracked count when too large.
pub fn build_pos_neg(tracked: &[TrackedState], top_k: usize) -> (Vec<usize>, Vec<usize>) {
    let keys: Vec<(f64, (u64, usize))> = tracked
        .iter()
        .map(|t| (t.delta_v, (t.record.phase, t.record.batch_index)))
        .collect();
    rank_extremes(&keys, top_k)
}

/// [`build_pos_neg`] on raw `(value, recency)` pairs; larger recency is newer.
pub fn rank_extremes<K: Ord + Copy>(keys: &[(f64, K)], top_k: usize) -> (Vec<usize>, Vec<usize>) {
    let mut k = top_k;
    if 2 * k > keys.len() {
        k = keys.len() / 2;
        warn!(
            "only {} tracked states; using top_k = {k} instead of {top_k}",
            keys.len()
        );
    }
    let mut desc: Vec<usize> = (0..keys.len()).collect();
    desc.sort_by(|&a, &b| {
        keys[b]
            .0
            .partial_cmp(&keys[a].0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(keys[b].1.cmp(&keys[a].1))
    });
    let mut asc: Vec<usize> = (0..keys.len()).collect();
    asc.sort_by(|&a, &b| {
        keys[a]
            .0
            .partial_cmp(&keys[b].0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(keys[b].1.cmp(&keys[a].1))
    });
    let pos = desc[..k].to_vec();
    let neg = asc.into_iter().filter(|i| !pos.contains(i)).take(k).collect();
    (pos, neg)
}

/// Soft-nearest-neighbour loss from anchor distances:
/// `-log(sum_P exp(-d/t) / sum_{P and N} exp(-d/t))`.
pub fn snn_loss_from_distances(positive: &[f64], negative: &[f64], temperature: f64) -> f64 {
    let logits = |d: &[f64]| d.iter().map(|x| -x / temperature).collect::<Vec<_>>();
    let pos = logits(positive);
    let all: Vec<f64> = pos.iter().copied().chain(logits(negative)).collect();
    log_sum_exp(&all) - log_sum_exp(&pos)
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveLoss {
    pub loss: f64,
    pub grad: Mlp,
    /// Number of positive terms in the numerator, `|P| - 1`.
    pub numerator_terms: usize,
}

/// Loss for the anchor `positives[anchor]` against the other positives and
/// all negatives, with cosine distance between embeddings, and its
/// gradient with respect to every parameter of `net`.
pub fn contrastive_loss(
    net: &Mlp,
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    anchor: usize,
    temperature: f64,
) -> Result<ContrastiveLoss> {
    if anchor >= positives.len() {
        return Err(Error::Shape(format!(
            "anchor {anchor} outside {} positives",
            positives.len()
        )));
    }
    if positives.len() < 2 {
        return Err(Error::Degenerate(
            "the positive set needs a member besides the anchor".into(),
        ));
    }
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("temperature {temperature} must be positive")));
    }
    // anchor first, then the remaining positives, then negatives
    let inputs: Vec<&Vec<f64>> = std::iter::once(&positives[anchor])
        .chain(
            positives
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != anchor)
                .map(|(_, o)| o),
        )
        .chain(negatives)
        .collect();
    let n_pos = positives.len() - 1;
    let traces = inputs
        .iter()
        .map(|o| net.forward_trace(o))
        .collect::<Result<Vec<_>>>()?;
    let mut units = Vec::with_capacity(traces.len());
    let mut norms = Vec::with_capacity(traces.len());
    for tr in &traces {
        let x = tr.output();
        let norm = dot(x, x).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Degenerate("embedding with zero or non-finite norm".into()));
        }
        units.push(x.iter().map(|v| v / norm).collect::<Vec<_>>());
        norms.push(norm);
    }
    let logits: Vec<f64> = (1..units.len())
        .map(|j| (dot(&units[0], &units[j]) - 1.0) / temperature)
        .collect();
    let lse_all = log_sum_exp(&logits);
    let lse_pos = log_sum_exp(&logits[..n_pos]);
    let loss = lse_all - lse_pos;

    // dL/dlogit_j: softmax over everything minus softmax over positives
    let coef: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let den = (s - lse_all).exp();
            if j < n_pos {
                den - (s - lse_pos).exp()
            } else {
                den
            }
        })
        .collect();
    let dim = units[0].len();
    let mut unit_grads = vec![vec![0.0; dim]; units.len()];
    for (j, &c) in coef.iter().enumerate() {
        let other = j + 1;
        for d in 0..dim {
            unit_grads[0][d] += c * units[other][d] / temperature;
            unit_grads[other][d] += c * units[0][d] / temperature;
        }
    }
    let mut grad = net.zeros_like();
    for (i, tr) in traces.iter().enumerate() {
        let g = &unit_grads[i];
        let radial = dot(g, &units[i]);
        let out_grad: Vec<f64> = g
            .iter()
            .zip(&units[i])
            .map(|(gv, u)| (gv - radial * u) / norms[i])
            .collect();
        net.accumulate_gradient(tr, &out_grad, &mut grad)?;
    }
    Ok(ContrastiveLoss {
        loss,
        grad,
        numerator_terms: n_pos,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub top_k: usize,
    pub positive_range: Option<(f64, f64)>,
    pub negative_range: Option<(f64, f64)>,
}

/// Builds the positive and negative sets from `tracked` and takes
/// `cfg.train_steps_per_update` Adam steps, each on a freshly drawn anchor.
pub fn train_embedding<R: Rng + ?Sized>(
    net: &mut Mlp,
    opt: &mut AdamState<Mlp>,
    tracked: &[TrackedState],
    cfg: &ContrastiveConfig,
    rng: &mut R,
) -> Result<TrainReport> {
    let (pos, neg) = build_pos_neg(tracked, cfg.top_k);
    let range = |idx: &[usize]| {
        idx.iter()
            .map(|&i| tracked[i].delta_v)
            .fold(None, |acc: Option<(f64, f64)>, v| {
                Some(acc.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v))))
            })
    };
    let mut report = TrainReport {
        losses: Vec::new(),
        top_k: pos.len(),
        positive_range: range(&pos),
        negative_range: range(&neg),
    };
    if pos.len() < 2 || cfg.train_steps_per_update == 0 {
        return Ok(report);
    }
    let p_obs: Vec<Vec<f64>> = pos.iter().map(|&i| tracked[i].record.observation.clone()).collect();
    let n_obs: Vec<Vec<f64>> = neg.iter().map(|&i| tracked[i].record.observation.clone()).collect();
    report.losses = train_on_sets(
        net,
        opt,
        &p_obs,
        &n_obs,
        cfg.temperature,
        cfg.train_steps_per_update,
        rng,
    )?;
    Ok(report)
}

/// Adam steps on the contrastive loss of given observation sets.
pub fn train_on_sets<R: Rng + ?Sized>(
    net: &mut Mlp,
    opt: &mut AdamState<Mlp>,
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    temperature: f64,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let anchor = rng.gen_range(0..positives.len());
        let out = contrastive_loss(net, positives, negatives, anchor, temperature)?;
        adam_step(net, &out.grad, opt)?;
        losses.push(out.loss);
    }
    Ok(losses)
}

/// Cluster-based selection in the embedding space of `net`.
pub fn select_cl<R: Rng + ?Sized>(
    buf: &VisitedStatesBuffer,
    n: usize,
    k: usize,
    net: &Mlp,
    rng: &mut R,
) -> Result<(Vec<StateRecord>, KMeans)> {
    if buf.is_empty() {
        return Err(Error::EmptySelection("cl selection: no eligible records".into()));
    }
    let records: Vec<&StateRecord> = buf.records().iter().collect();
    let embeddings = records
        .iter()
        .map(|r| net.forward(&r.observation))
        .collect::<Result<Vec<_>>>()?;
    select_by_clusters(&records, &embeddings, n, k, rng)
}
