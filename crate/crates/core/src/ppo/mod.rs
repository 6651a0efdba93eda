//! PPO with a diagonal Gaussian policy, GAE, and per-step value snapshots.

mod evaluate;
mod gae;
mod policy;
mod rollout;
mod update;

pub use evaluate::{evaluate_policy, is_success, Evaluation, InitEvaluation};
pub use gae::{compute_gae, normalize_advantages, GaeConfig};
pub use policy::GaussianPolicy;
pub use rollout::{collect_rollout, NominalReset, Provenance, ResetSampler, RolloutBatch, VecEnv};
pub use update::{
    append_update_log, evaluate_losses, ppo_update, surrogate_term, PpoConfig, PpoOptimizers, PreparedBatch, UpdateLog,
};
