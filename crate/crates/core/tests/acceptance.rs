//! Acceptance checks. Each test prints one `[Cnn] PASS|FAIL` line straight to
//! stdout (bypassing the test harness capture) and then asserts.
//!
//! The learning checks (C08 to C10) train many agents. Their configs live in
//! `configs/acceptance/` at the repository root.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use rand::Rng;

use isb_lab::clbuffer::{contrastive_loss, estimate_delta_v, TrackedState};
use isb_lab::envs::{Env, EnvConfig, EnvState, LocomotionConfig, Task, TaskDetail, Termination};
use isb_lab::harness::{run_experiment, ExperimentConfig, MetricsRow, BUFFER_DIR, CL_FILE, METRICS_FILE, UPDATES_FILE};
use isb_lab::isb::{
    kmeans_cosine, normalized, read_records, records_from_batch, InitialStateBuffer, IsbReset, StartMode, StateRecord,
    Strategy,
};
use isb_lab::nn::{dot, Dense, Mlp};
use isb_lab::ppo::{
    collect_rollout, compute_gae, GaeConfig, GaussianPolicy, NominalReset, Provenance, ResetSampler, RolloutBatch,
    VecEnv,
};
use isb_lab::rng::seeded_rng;

fn report(id: u32, name: &str, pass: bool, detail: impl AsRef<str>) {
    let line = format!(
        "[C{id:02}] {} {name}: {}\n",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "{}", line.trim_end());
}

// ---------------------------------------------------------------- C01

/// Advantage as an explicit double sum over TD residuals, cut at dones.
fn gae_oracle(r: &[f64], v: &[f64], d: &[bool], bootstrap: f64, gamma: f64, lam: f64) -> Vec<f64> {
    let n = r.len();
    let next_value = |t: usize| if t + 1 < n { v[t + 1] } else { bootstrap };
    let delta: Vec<f64> = (0..n)
        .map(|t| r[t] + if d[t] { 0.0 } else { gamma * next_value(t) } - v[t])
        .collect();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            for l in 0..n - t {
                sum += (gamma * lam).powi(l as i32) * delta[t + l];
                if d[t + l] {
                    break;
                }
            }
            sum
        })
        .collect()
}

#[test]
fn c01_gae_matches_nested_sum_oracle() {
    let start = Instant::now();
    let mut rng = seeded_rng(1, "acceptance/gae");
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=32);
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.2)).collect();
        let bootstrap = rng.gen_range(-5.0..5.0);
        let gamma = rng.gen_range(0.5..=1.0);
        let lam = rng.gen_range(0.0..=1.0);
        let cfg = GaeConfig {
            gamma,
            lam,
            bootstrap_timeouts: false,
        };
        let (adv, ret) = compute_gae(&r, &v, &d, bootstrap, cfg).unwrap();
        let oracle = gae_oracle(&r, &v, &d, bootstrap, gamma, lam);
        for t in 0..n {
            worst = worst.max((adv[t] - oracle[t]).abs());
            worst = worst.max((ret[t] - (oracle[t] + v[t])).abs());
        }
    }
    let elapsed = start.elapsed();
    report(
        1,
        "GAE oracle equivalence",
        worst < 1e-9 && elapsed < Duration::from_secs(5),
        format!(
            "1000 trajectories, max abs error {worst:.2e} (< 1e-9), {:.3} s (< 5 s)",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- C02

fn params(net: &Mlp) -> Vec<f64> {
    net.layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
        .collect()
}

fn with_param(net: &Mlp, mut k: usize, delta: f64) -> Mlp {
    let mut out = net.clone();
    for l in out.layers.iter_mut() {
        if k < l.weights.len() {
            l.weights[k] += delta;
            return out;
        }
        k -= l.weights.len();
        if k < l.bias.len() {
            l.bias[k] += delta;
            return out;
        }
        k -= l.bias.len();
    }
    panic!("parameter index out of range");
}

fn sample(rng: &mut impl Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect())
        .collect()
}

fn rel_err(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-6)
}

#[test]
fn c02_gradients_match_central_differences() {
    let start = Instant::now();
    let mut rng = seeded_rng(2, "acceptance/grad");
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for instance in 0..100u64 {
        let dim = rng.gen_range(2..6);
        let hidden = rng.gen_range(2..8);
        let out_dim = rng.gen_range(1..5);
        let net = Mlp::new(
            &[dim, hidden, hidden, out_dim],
            &mut seeded_rng(instance, "acceptance/net"),
        );
        if instance % 2 == 0 {
            let x = sample(&mut rng, 1, dim).remove(0);
            let g = sample(&mut rng, 1, out_dim).remove(0);
            let objective = |m: &Mlp, x: &[f64]| dot(&m.forward(x).unwrap(), &g);
            let grads = net.backward(&x, &g).unwrap();
            for (k, an) in params(&grads.params).into_iter().enumerate() {
                let fd = (objective(&with_param(&net, k, h), &x) - objective(&with_param(&net, k, -h), &x)) / (2.0 * h);
                worst = worst.max(rel_err(fd, an));
                checked += 1;
            }
            for i in 0..dim {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[i] += h;
                xm[i] -= h;
                let fd = (objective(&net, &xp) - objective(&net, &xm)) / (2.0 * h);
                worst = worst.max(rel_err(fd, grads.input[i]));
                checked += 1;
            }
        } else {
            let np = rng.gen_range(2..6);
            let p = sample(&mut rng, np, dim);
            let nn = rng.gen_range(1..6);
            let n = sample(&mut rng, nn, dim);
            let anchor = rng.gen_range(0..p.len());
            let tau = rng.gen_range(0.1..1.0);
            let out = contrastive_loss(&net, &p, &n, anchor, tau).unwrap();
            let loss = |m: &Mlp| contrastive_loss(m, &p, &n, anchor, tau).unwrap().loss;
            for (k, an) in params(&out.grad).into_iter().enumerate() {
                let fd = (loss(&with_param(&net, k, h)) - loss(&with_param(&net, k, -h))) / (2.0 * h);
                worst = worst.max(rel_err(fd, an));
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        2,
        "gradient fidelity",
        worst < 1e-4 && elapsed < Duration::from_secs(30),
        format!(
            "100 instances (50 mlp_backward, 50 contrastive_loss), {checked} partials, max relative error {worst:.2e} (< 1e-4), {:.2} s (< 30 s)",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- C03

/// s0 -> s1 -> s2 -> end. Action `a` (false) walks right, action `b` (true)
/// jumps to s2; leaving s2 ends the episode.
fn chain_step(s: usize, b: bool) -> (usize, f64, bool) {
    match (s, b) {
        (0, false) => (1, 1.0, false),
        (0, true) => (2, 0.5, false),
        (1, false) => (2, 2.0, false),
        (1, true) => (2, -1.0, false),
        _ => (0, 3.0, true),
    }
}

/// Exact policy evaluation by iterating the Bellman equation to its fixed point.
fn policy_values(pi: [bool; 3], gamma: f64) -> [f64; 3] {
    let mut v = [0.0; 3];
    loop {
        let mut next = [0.0; 3];
        for s in 0..3 {
            let (s2, r, done) = chain_step(s, pi[s]);
            next[s] = r + if done { 0.0 } else { gamma * v[s2] };
        }
        if next == v {
            return v;
        }
        v = next;
    }
}

fn one_hot(s: usize) -> Vec<f64> {
    (0..3).map(|i| if i == s { 1.0 } else { 0.0 }).collect()
}

fn standing() -> EnvState {
    EnvState {
        position: [0.0, 0.0],
        velocity: [0.0, 0.0],
        detail: TaskDetail::Locomotion {
            command: [0.0, 0.0],
            height_offset: 0.0,
            vertical_velocity: 0.0,
        },
        episode_step: 0,
        accumulated_reward: 0.0,
    }
}

fn chain_batch(pi0: [bool; 3], start: usize) -> RolloutBatch {
    let (mut s, mut states, mut rewards, mut dones) = (start, Vec::new(), Vec::new(), Vec::new());
    loop {
        let (next, r, done) = chain_step(s, pi0[s]);
        states.push(s);
        rewards.push(r);
        dones.push(done);
        if done {
            break;
        }
        s = next;
    }
    let t = states.len();
    RolloutBatch {
        num_envs: 1,
        horizon: t,
        observations: states.iter().map(|&s| one_hot(s)).collect(),
        actions: vec![vec![0.0]; t],
        log_probs: vec![0.0; t],
        rewards,
        terminations: dones
            .iter()
            .map(|&d| if d { Termination::Goal } else { Termination::None })
            .collect(),
        dones,
        values: vec![0.0; t],
        states: vec![standing(); t],
        episode_steps: (0..t as u32).collect(),
        accumulated_rewards: vec![0.0; t],
        provenance: vec![Provenance::Nominal; t],
        timeout_values: vec![0.0; t],
        final_observations: vec![one_hot(0)],
        bootstrap_values: vec![0.0],
        completed_returns: Vec::new(),
        completed_terminations: Vec::new(),
        resets: BTreeMap::new(),
    }
}

#[test]
fn c03_delta_v_is_exact_on_a_chain_mdp() {
    let gamma = 0.9;
    let cfg = GaeConfig {
        gamma,
        lam: 1.0,
        bootstrap_timeouts: false,
    };
    // The action in s2 does not matter, so four distinct deterministic policies.
    let policies: Vec<[bool; 3]> = (0..4).map(|m| [m & 1 == 1, m & 2 == 2, false]).collect();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for &pi0 in &policies {
        for &pi1 in &policies {
            let v0 = policy_values(pi0, gamma);
            let v1 = policy_values(pi1, gamma);
            let tabular = Mlp::from_layers(vec![Dense {
                inputs: 3,
                outputs: 1,
                weights: v1.to_vec(),
                bias: vec![0.0],
            }])
            .unwrap();
            for start in 0..3 {
                let batch = chain_batch(pi0, start);
                let tracked = TrackedState {
                    record: StateRecord {
                        env_state: standing(),
                        observation: one_hot(start),
                        episode_step: 0,
                        accumulated_reward: 0.0,
                        provenance: Provenance::Nominal,
                        is_terminal: false,
                        steps_to_end: None,
                        phase: 0,
                        lane: 0,
                        t: 0,
                        batch_index: 0,
                    },
                    tail: batch.tail(0),
                    delta_v: 0.0,
                    degenerate: false,
                };
                let (dv, _) = estimate_delta_v(&tracked, &tabular, &batch, cfg).unwrap();
                worst = worst.max((dv - (v1[start] - v0[start])).abs());
                cases += 1;
            }
        }
    }
    report(
        3,
        "delta-V exactness",
        worst < 1e-9,
        format!("{cases} (pi0, pi1, start) cases, gamma 0.9, lambda 1, max |error| vs dynamic programming {worst:.2e} (< 1e-9)"),
    );
}

// ---------------------------------------------------------------- C04

#[test]
fn c04_contrastive_loss_closed_forms() {
    let mut rng = seeded_rng(4, "acceptance/contrastive");
    let mut worst: f64 = 0.0;
    let mut counts_ok = true;
    for size in 2..=9usize {
        let dim = 4;
        let mut net = Mlp::new(&[dim, 8, 5], &mut seeded_rng(size as u64, "acceptance/net"));
        for l in net.layers.iter_mut() {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        net.layers.last_mut().unwrap().bias = vec![0.3, -0.2, 0.5, 0.1, 0.7];
        let obs = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect()
        };
        // |P'| = |P| - 1 = |N|
        let p = obs(size + 1, &mut rng);
        let n = obs(size, &mut rng);
        let out = contrastive_loss(&net, &p, &n, size / 2, 0.1).unwrap();
        worst = worst.max((out.loss - std::f64::consts::LN_2).abs());
        counts_ok &= out.numerator_terms == p.len() - 1;
    }
    report(
        4,
        "contrastive-loss closed forms",
        worst < 1e-12 && counts_ok,
        format!("identical embeddings, |P'| = |N| in 2..=9: max |loss - ln 2| {worst:.2e} (< 1e-12); numerator terms = |P| - 1: {counts_ok}"),
    );
}

// ---------------------------------------------------------------- C05

#[test]
fn c05_spherical_kmeans_invariants() {
    let mut rng = seeded_rng(5, "acceptance/kmeans");
    let mut assignment_ok = true;
    let mut monotone = true;
    let mut worst_norm: f64 = 0.0;
    for trial in 0..50u64 {
        let dim = rng.gen_range(2..8);
        let n = rng.gen_range(5..200);
        let k = rng.gen_range(1..12);
        let vectors: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let km = kmeans_cosine(&vectors, k, 50, &mut seeded_rng(trial, "kmeans")).unwrap();
        for c in &km.centers {
            worst_norm = worst_norm.max((dot(c, c).sqrt() - 1.0).abs());
        }
        for (i, v) in vectors.iter().enumerate() {
            let u = normalized(v).unwrap();
            let best = km.centers.iter().map(|c| dot(&u, c)).fold(f64::NEG_INFINITY, f64::max);
            let mine = dot(&u, &km.centers[km.assignments[i]]);
            assignment_ok &= mine >= best - 1e-12;
        }
        // Objective recorded as total similarity, so total cosine distance
        // n - similarity must never increase.
        let distances: Vec<f64> = km.objective_history.iter().map(|s| n as f64 - s).collect();
        monotone &= distances.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    }
    report(
        5,
        "spherical k-means invariants",
        assignment_ok && monotone && worst_norm < 1e-12,
        format!(
            "50 random problems: nearest-center by exhaustive scan {assignment_ok}, distance non-increasing {monotone}, max | |c| - 1 | {worst_norm:.2e} (< 1e-12)"
        ),
    );
}

// ---------------------------------------------------------------- C06

#[test]
fn c06_reset_mixture_statistics() {
    let config = EnvConfig::Locomotion(LocomotionConfig::default());
    let mut venv = VecEnv::new(&config, 4, 6, &mut NominalReset).unwrap();
    let policy = GaussianPolicy::new(14, &[8], 3, -0.5, &mut seeded_rng(6, "init/policy"));
    let value = Mlp::new(&[14, 8, 1], &mut seeded_rng(6, "init/value"));
    let batch = collect_rollout(&policy, &value, &mut venv, 32, &mut NominalReset).unwrap();
    let mut isb = InitialStateBuffer::new(256).unwrap();
    isb.refresh(records_from_batch(&batch, 1));
    assert!(!isb.is_empty());

    let mut env = Env::new(&config, seeded_rng(6, "env/0")).unwrap();
    let mut sampler_rng = seeded_rng(6, "sampler");
    let mut sampler = IsbReset {
        isb: Some(&isb),
        p: 0.8,
        start: StartMode::Nominal,
        rng: &mut sampler_rng,
    };
    let episodes = 10_000;
    let mut from_isb = 0;
    for _ in 0..episodes {
        let (state, provenance) = sampler.initial_state(&mut env).unwrap();
        env.reset(Some(&state)).unwrap();
        if provenance == Provenance::Isb {
            from_isb += 1;
        }
    }
    let fraction = from_isb as f64 / episodes as f64;
    report(
        6,
        "reset-mixture statistics",
        (0.77..=0.83).contains(&fraction),
        format!("p = 0.8, {episodes} episodes: ISB-origin fraction {fraction:.4} (in [0.77, 0.83])"),
    );
}

// ---------------------------------------------------------------- C07, C11

fn small_config(task: Task, strategy: Strategy, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        task,
        seed,
        num_envs: 8,
        rollout_length: 64,
        iterations: 12,
        validation_interval: 4,
        policy_hidden: vec![16, 16],
        value_hidden: vec![16, 16],
        ..ExperimentConfig::default()
    };
    cfg.isb.strategy = strategy;
    cfg.isb.n = 64;
    cfg.isb.k = 8;
    cfg.isb.capacity = 256;
    cfg.contrastive.hidden = vec![16];
    cfg.contrastive.embedding_dim = 8;
    cfg.contrastive.tracked_count = 32;
    cfg.contrastive.top_k = 8;
    cfg.output.dump_every = 1;
    cfg
}

fn dumped_records(dir: &Path) -> Vec<StateRecord> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir.join(BUFFER_DIR)).unwrap() {
        out.extend(read_records(entry.unwrap().path()).unwrap());
    }
    out
}

#[test]
fn c07_filter_soundness() {
    let mut scanned = 0usize;
    let mut violations = Vec::new();
    for (task, strategy) in [
        (Task::Locomotion, Strategy::Cl),
        (Task::Locomotion, Strategy::Random),
        (Task::Racing, Strategy::Obs),
    ] {
        let cfg = small_config(task, strategy, 7);
        let filters = cfg.filters();
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_experiment(&cfg, dir.path()).unwrap();
        let mut records = dumped_records(dir.path());
        records.extend(outcome.visited.unwrap());
        records.extend(outcome.isb.unwrap());
        for r in &records {
            scanned += 1;
            let bad_step = r.episode_step < 15;
            let bad_reward = filters.require_nonneg_reward && r.accumulated_reward < 0.0;
            let bad_start = filters.require_nominal_start_trajectory && r.provenance != Provenance::Nominal;
            if bad_step || bad_reward || bad_start {
                violations.push(format!(
                    "{task}/{strategy}: step {} reward {:.3}",
                    r.episode_step, r.accumulated_reward
                ));
            }
        }
    }
    report(
        7,
        "filter soundness",
        violations.is_empty() && scanned > 0,
        format!(
            "{scanned} buffered records scanned over locomotion (cl, random) and racing (obs) runs, {} violations of step >= 15 / non-negative reward / nominal-start filters{}",
            violations.len(),
            violations.first().map(|v| format!("; first: {v}")).unwrap_or_default()
        ),
    );
}

#[test]
fn c11_reproducibility() {
    let mut identical = true;
    let mut compared = Vec::new();
    for (task, strategy) in [(Task::Locomotion, Strategy::Cl), (Task::Racing, Strategy::Vanilla)] {
        let cfg = small_config(task, strategy, 11);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_experiment(&cfg, a.path()).unwrap();
        run_experiment(&cfg, b.path()).unwrap();
        for file in [METRICS_FILE, UPDATES_FILE, CL_FILE] {
            let bytes = |d: &Path| std::fs::read(d.join(file)).ok();
            if let Some(first) = bytes(a.path()) {
                identical &= Some(&first) == bytes(b.path()).as_ref();
                compared.push(format!("{task}/{strategy} {file} {} bytes", first.len()));
            }
        }
    }
    report(
        11,
        "reproducibility",
        identical,
        format!(
            "two runs per config, output files bit-identical: {identical} ({})",
            compared.join(", ")
        ),
    );
}

// ---------------------------------------------------------------- C08 to C10

fn acceptance_config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/acceptance")
        .join(name);
    ExperimentConfig::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

struct Run {
    rows: Vec<MetricsRow>,
    seconds: f64,
}

type RunKey = (&'static str, Strategy, u64, u64);
type RunCell = Arc<OnceLock<Arc<Run>>>;

/// Trains each (config, strategy, seed, iterations) once per test binary.
fn trained(config: &'static str, strategy: Strategy, seed: u64, iterations: u64) -> Arc<Run> {
    static RUNS: OnceLock<Mutex<HashMap<RunKey, RunCell>>> = OnceLock::new();
    let cell = {
        let mut map = RUNS.get_or_init(Default::default).lock().unwrap();
        map.entry((config, strategy, seed, iterations)).or_default().clone()
    };
    cell.get_or_init(|| {
        // One training run at a time, so each timing reflects a whole core.
        static TRAINING: Mutex<()> = Mutex::new(());
        let _serial = TRAINING.lock().unwrap_or_else(|e| e.into_inner());
        let mut cfg = acceptance_config(config);
        cfg.isb.strategy = strategy;
        cfg.seed = seed;
        cfg.iterations = iterations;
        cfg.output.dump_every = 0;
        cfg.output.write_updates = false;
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let outcome = run_experiment(&cfg, dir.path()).unwrap();
        Arc::new(Run {
            rows: outcome.rows,
            seconds: start.elapsed().as_secs_f64(),
        })
    })
    .clone()
}

fn validation_at(run: &Run, iteration: u64) -> f64 {
    run.rows
        .iter()
        .find(|r| r.iteration == iteration)
        .and_then(|r| r.validation_return)
        .unwrap_or_else(|| panic!("no validation row at iteration {iteration}"))
}

fn final_validation(run: &Run) -> f64 {
    run.rows.iter().rev().find_map(|r| r.validation_return).unwrap()
}

/// Area under the validation curve, as the mean of all validation returns.
fn auc(run: &Run) -> f64 {
    let v: Vec<f64> = run.rows.iter().filter_map(|r| r.validation_return).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

const LOCOMOTION: &str = "locomotion.toml";
const RACING: &str = "racing.toml";
const LOCOMOTION_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const LOCOMOTION_BUDGET: u64 = 300;

#[test]
fn c08_cl_beats_vanilla_on_locomotion() {
    let mut final_wins = 0;
    let mut auc_wins = 0;
    let mut seconds = 0.0;
    let mut pairs = Vec::new();
    for seed in LOCOMOTION_SEEDS {
        let vanilla = trained(LOCOMOTION, Strategy::Vanilla, seed, LOCOMOTION_BUDGET);
        let cl = trained(LOCOMOTION, Strategy::Cl, seed, LOCOMOTION_BUDGET);
        seconds += vanilla.seconds + cl.seconds;
        final_wins += (final_validation(&cl) > final_validation(&vanilla)) as usize;
        auc_wins += (auc(&cl) > auc(&vanilla)) as usize;
        pairs.push(format!(
            "s{seed} final {:.1}/{:.1} auc {:.1}/{:.1}",
            final_validation(&cl),
            final_validation(&vanilla),
            auc(&cl),
            auc(&vanilla)
        ));
    }
    report(
        8,
        "locomotion, CL-Buffer vs Vanilla",
        final_wins >= 4 && auc_wins >= 4 && seconds < 1800.0,
        format!(
            "{LOCOMOTION_BUDGET} iterations, CL wins final {final_wins}/5 and AUC {auc_wins}/5 (need >= 4 each), {seconds:.0} s of training (< 1800 s); cl/vanilla per seed: {}",
            pairs.join("; ")
        ),
    );
}

const RACING_SEEDS: std::ops::Range<u64> = 0..10;

fn laps(run: &Run) -> (bool, usize) {
    let last = run.rows.iter().rev().find_map(|r| r.success_rate).unwrap();
    let total = run
        .rows
        .iter()
        .filter_map(|r| r.success_rate)
        .filter(|&s| s > 0.0)
        .count();
    (last > 0.0, total)
}

#[test]
fn c09_cl_laps_at_least_as_often_as_vanilla_on_racing() {
    let budget = acceptance_config(RACING).iterations;
    let (mut cl_final, mut vanilla_final, mut cl_total, mut vanilla_total) = (0, 0, 0, 0);
    for seed in RACING_SEEDS {
        let (f, t) = laps(&trained(RACING, Strategy::Cl, seed, budget));
        cl_final += f as usize;
        cl_total += t;
        let (f, t) = laps(&trained(RACING, Strategy::Vanilla, seed, budget));
        vanilla_final += f as usize;
        vanilla_total += t;
    }
    let checkpoints = budget / acceptance_config(RACING).validation_interval;
    report(
        9,
        "racing, CL-Buffer vs Vanilla lap completion",
        cl_final >= vanilla_final && cl_total > vanilla_total,
        format!(
            "10 seeds, {budget} iterations: final-policy lap rate CL {:.1} vs Vanilla {:.1} (need >=); laps over all {checkpoints} checkpoints CL {cl_total} vs Vanilla {vanilla_total} (need >)",
            cl_final as f64 / 10.0,
            vanilla_final as f64 / 10.0
        ),
    );
}

#[test]
fn c10_every_buffer_beats_vanilla_early() {
    let checkpoint = LOCOMOTION_BUDGET / 3;
    let mean_at = |strategy: Strategy| -> f64 {
        let iterations = if matches!(strategy, Strategy::Vanilla | Strategy::Cl) {
            // Shared with C08; rows before the checkpoint do not depend on the budget.
            LOCOMOTION_BUDGET
        } else {
            checkpoint
        };
        LOCOMOTION_SEEDS
            .iter()
            .map(|&s| validation_at(&trained(LOCOMOTION, strategy, s, iterations), checkpoint))
            .sum::<f64>()
            / LOCOMOTION_SEEDS.len() as f64
    };
    let vanilla = mean_at(Strategy::Vanilla);
    let mut all_ok = true;
    let mut parts = Vec::new();
    for strategy in Strategy::ALL.into_iter().filter(|s| s.uses_buffer()) {
        let m = mean_at(strategy);
        all_ok &= m >= vanilla;
        parts.push(format!("{strategy} {m:.1}"));
    }
    report(
        10,
        "early-training strategy ordering",
        all_ok,
        format!(
            "mean validation return over 5 seeds at iteration {checkpoint} of {LOCOMOTION_BUDGET}: vanilla {vanilla:.1}; {}",
            parts.join(", ")
        ),
    );
}
