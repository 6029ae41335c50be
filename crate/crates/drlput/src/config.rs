//! Run configuration: one TOML file drives collection, training and
//! evaluation. A single top-level seed feeds every seeded component.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::ActionGrid;
use crate::error::{Error, Result};
use crate::net::ArchConfig;
use crate::reward::{RewardConfig, RewardVariant};
use crate::simenv::{BehaviorPolicy, SimConfig};
use crate::train::TrainConfig;

fn default_lr_decay() -> f64 {
    1.0
}

fn default_values_per_group() -> usize {
    10
}

fn default_diversity_threshold() -> f64 {
    0.1
}

fn default_buckets() -> usize {
    4
}

fn default_bucket_key() -> String {
    "ctr".into()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BehaviorSection {
    /// "uniform" or "gaussian".
    pub kind: String,
    /// Per-group standard deviation in hyperparameter units; only meaningful
    /// for the gaussian policy. Defaults to (max - min) / 4 per group.
    #[serde(default)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub step_size: f64,
    #[serde(default = "default_lr_decay")]
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RewardSection {
    pub variant: String,
    #[serde(default)]
    pub impression_revenue_scale: Option<f64>,
    #[serde(default)]
    pub normalization: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_diversity_threshold")]
    pub diversity_threshold: f64,
    /// Logged triplets to collect for training.
    pub triplets: u64,
    /// Fresh simulator requests used when measuring a served policy.
    pub eval_requests: u64,
    #[serde(default = "default_buckets")]
    pub buckets: usize,
    #[serde(default = "default_bucket_key")]
    pub bucket_key: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_values_per_group")]
    pub values_per_group: usize,
    pub behavior: BehaviorSection,
    pub sim: SimConfig,
    pub train: TrainSection,
    pub reward: RewardSection,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("run config parse: {e}")))?;
        cfg.sim.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.grid()?.validate()?;
        self.reward_config()?.validate()?;
        self.train_config().validate()?;
        self.behavior_policy(&self.grid()?)?;
        if self.eval.triplets == 0 || self.eval.eval_requests == 0 {
            return Err(Error::Config("eval: triplets and eval_requests must be >= 1".into()));
        }
        if self.eval.buckets < 2 {
            return Err(Error::Config("eval: buckets must be >= 2".into()));
        }
        self.eval.bucket_key.parse::<crate::eval::BucketKey>()?;
        if !(self.eval.diversity_threshold >= 0.0 && self.eval.diversity_threshold <= 1.0) {
            return Err(Error::Config("eval: diversity_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<ActionGrid> {
        if self.values_per_group < 2 {
            return Err(Error::Config("values_per_group must be >= 2".into()));
        }
        Ok(ActionGrid::default_grid(self.values_per_group))
    }

    pub fn arch(&self) -> ArchConfig {
        ArchConfig { embed_dim: self.train.embed_dim, hidden: self.train.hidden.clone() }
    }

    pub fn reward_config(&self) -> Result<RewardConfig> {
        let variant: RewardVariant = self.reward.variant.parse()?;
        let mut cfg = RewardConfig::preset(variant);
        if let Some(s) = self.reward.impression_revenue_scale {
            cfg.impression_revenue_scale = s;
        }
        if let Some(n) = self.reward.normalization {
            cfg.normalization = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            step_size: self.train.step_size,
            lr_decay: self.train.lr_decay,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            seed: self.seed,
            reward: self.reward_config().unwrap_or_else(|_| RewardConfig::r0()),
            shuffle: true,
        }
    }

    /// Gaussian behavior centers on the grid midpoint — the stand-in for the
    /// hyperparameters a production system would already be serving.
    pub fn behavior_policy(&self, grid: &ActionGrid) -> Result<BehaviorPolicy> {
        match self.behavior.kind.as_str() {
            "uniform" => Ok(BehaviorPolicy::Uniform),
            "gaussian" => {
                let mu = grid.midpoint_action();
                let sigma: Vec<f64> = (0..grid.num_groups())
                    .map(|g| {
                        let (min, max) = grid.group_bounds(g);
                        self.behavior.sigma.unwrap_or((max - min) / 4.0)
                    })
                    .collect();
                if sigma.iter().any(|s| *s <= 0.0) {
                    return Err(Error::Config("behavior: gaussian sigma must be > 0".into()));
                }
                Ok(BehaviorPolicy::DiscreteGaussian { mu, sigma })
            }
            other => Err(Error::Config(format!("behavior: unknown kind '{other}' (expected uniform|gaussian)"))),
        }
    }
}

/// A small, fast configuration meant for local runs and the test suite.
pub const DESK_PRESET: &str = r#"# drlput run configuration (desk preset)
# Small synthetic marketplace: four user segments spanning low/high CTR and
# low/high CVR, full-traffic exploration, quick training.

seed = 7
values_per_group = 10

[behavior]
kind = "uniform"

[sim]
candidates_per_request = 30
noise_sigma = 0.1
ad_heterogeneity = 0.6
bid_quality_exponent = 1.8
conversion_click_scale = 0.10
exploration_fraction = 100.0

[[sim.segments]]
name = "buyer"
ctr = 0.12
ctr30 = 0.108
cvr = 0.30
bid_scale = 1.0
feature_noise = 0.01

[[sim.segments]]
name = "browser"
ctr = 0.18
ctr30 = 0.126
cvr = 0.22
bid_scale = 1.0
feature_noise = 0.01

[[sim.segments]]
name = "clicker"
ctr = 0.26
ctr30 = 0.12
cvr = 0.22
bid_scale = 1.0
feature_noise = 0.01

[[sim.segments]]
name = "whale"
ctr = 0.38
ctr30 = 0.02
cvr = 0.01
bid_scale = 1.0
feature_noise = 0.01

[sim.campaign_mix]
clickthrough = 0.5
conversion = 0.3
impression = 0.2

[sim.bid_distributions.clickthrough]
min = 0.3
max = 0.9

[sim.bid_distributions.conversion]
min = 0.5
max = 1.0

[sim.bid_distributions.impression]
min = 0.02
max = 0.08

[train]
step_size = 0.05
batch_size = 256
epochs = 60
lr_decay = 0.99
embed_dim = 8
hidden = [64, 32]

[reward]
variant = "r0"
normalization = false

[eval]
diversity_threshold = 0.1
triplets = 50000
eval_requests = 10000
buckets = 4
bucket_key = "ctr"
"#;

/// Production-shaped settings: tight exploration budget, gaussian behavior
/// around the currently served hyperparameters.
pub const PAPERLIKE_PRESET: &str = r#"# drlput run configuration (paperlike preset)
# Production-shaped: only 0.5% of traffic is logged for exploration and the
# behavior policy is a discrete gaussian around the served hyperparameters.

seed = 7
values_per_group = 10

[behavior]
kind = "gaussian"

[sim]
candidates_per_request = 50
noise_sigma = 0.2
ad_heterogeneity = 0.6
bid_quality_exponent = 1.8
conversion_click_scale = 0.10
exploration_fraction = 0.5

[[sim.segments]]
name = "buyer"
ctr = 0.05
ctr30 = 0.03
cvr = 0.35
bid_scale = 1.0
feature_noise = 0.03

[[sim.segments]]
name = "browser"
ctr = 0.16
ctr30 = 0.10
cvr = 0.03
bid_scale = 1.0
feature_noise = 0.03

[[sim.segments]]
name = "clicker"
ctr = 0.32
ctr30 = 0.20
cvr = 0.04
bid_scale = 1.1
feature_noise = 0.03

[[sim.segments]]
name = "whale"
ctr = 0.45
ctr30 = 0.30
cvr = 0.40
bid_scale = 1.2
feature_noise = 0.03

[sim.campaign_mix]
clickthrough = 0.5
conversion = 0.3
impression = 0.2

[sim.bid_distributions.clickthrough]
min = 0.3
max = 0.9

[sim.bid_distributions.conversion]
min = 0.5
max = 1.0

[sim.bid_distributions.impression]
min = 0.02
max = 0.08

[train]
step_size = 0.1
batch_size = 256
epochs = 15
embed_dim = 8
hidden = [64, 32]

[reward]
variant = "r0"

[eval]
diversity_threshold = 0.1
triplets = 50000
eval_requests = 10000
buckets = 4
bucket_key = "ctr"
"#;

pub fn preset(name: &str) -> Result<&'static str> {
    match name {
        "desk" => Ok(DESK_PRESET),
        "paperlike" => Ok(PAPERLIKE_PRESET),
        other => Err(Error::Config(format!("unknown preset '{other}' (expected desk|paperlike)"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for name in ["desk", "paperlike"] {
            let cfg = RunConfig::from_toml(preset(name).unwrap()).unwrap();
            assert_eq!(cfg.sim.seed, cfg.seed);
            assert_eq!(cfg.grid().unwrap().num_actions(), 1000);
        }
    }

    #[test]
    fn desk_preset_round_trips_through_toml() {
        let cfg = RunConfig::from_toml(DESK_PRESET).unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let again = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_field_rejected() {
        let bad = DESK_PRESET.replace("seed = 7", "seed = 7\nbogus_field = 1");
        let err = RunConfig::from_toml(&bad).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn top_level_seed_wins() {
        // The sim section never carries its own seed; the run seed is copied in.
        let cfg = RunConfig::from_toml(&DESK_PRESET.replace("seed = 7", "seed = 99")).unwrap();
        assert_eq!(cfg.sim.seed, 99);
    }

    #[test]
    fn gaussian_behavior_defaults() {
        let cfg = RunConfig::from_toml(PAPERLIKE_PRESET).unwrap();
        let grid = cfg.grid().unwrap();
        match cfg.behavior_policy(&grid).unwrap() {
            BehaviorPolicy::DiscreteGaussian { mu, sigma } => {
                assert_eq!(mu.group_indices, grid.midpoint_action().group_indices);
                assert_eq!(sigma.len(), grid.num_groups());
                assert!((sigma[0] - 0.5).abs() < 1e-12); // (2 - 0) / 4
                assert!((sigma[2] - 0.25).abs() < 1e-12); // (1 - 0) / 4
            }
            other => panic!("expected gaussian, got {other:?}"),
        }
    }

    #[test]
    fn bad_variant_and_bad_kind_rejected() {
        assert!(RunConfig::from_toml(&DESK_PRESET.replace("variant = \"r0\"", "variant = \"r9\"")).is_err());
        assert!(RunConfig::from_toml(&DESK_PRESET.replace("kind = \"uniform\"", "kind = \"thompson\"")).is_err());
    }
}
