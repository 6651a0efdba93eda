//! Initial state buffers for on-policy reinforcement learning.
//!
//! The crate bundles a small dense-network stack ([`nn`]), two restorable
//! toy tasks ([`envs`]), a PPO trainer ([`ppo`]), the initial-state-buffer
//! strategies ([`isb`]), the contrastive selection strategy ([`clbuffer`]) and
//! an experiment runner ([`harness`]).

pub mod clbuffer;
pub mod envs;
pub mod error;
pub mod harness;
pub mod isb;
pub mod nn;
pub mod ppo;
pub mod rng;

pub use error::{Error, Result};
