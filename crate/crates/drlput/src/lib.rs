//! drlput: policy-gradient tuning of ad ranking hyperparameters.
//!
//! The library covers the full offline loop: a deterministic auction
//! simulator logs (state, action, reward) triplets under a known behavior
//! policy, a softmax policy network is trained on those logs with REINFORCE,
//! and offline gates (prediction diversity, reward-weighted relative gain)
//! decide whether a checkpoint is fit to serve.

pub mod action;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod logio;
pub mod net;
pub mod ranking;
pub mod reward;
pub mod rng;
pub mod simenv;
pub mod train;

pub use action::{Action, ActionGrid, UtilityParams};
pub use error::{Error, Result};
pub use net::{ArchConfig, Mode, PolicyNet};
pub use reward::{RewardConfig, RewardVariant};
pub use simenv::{BehaviorPolicy, LoggedTriplet, SimConfig};
pub use train::TrainConfig;
