//! Offline REINFORCE training over logged triplets.
//!
//! Episodes are single-step and the discount is fixed at zero: each batch
//! contributes `L = -(1/B) sum_i r_i * log pi(a_i | s_i)`, and the descent
//! step on `L` with rate `eta` is exactly the reward-weighted log-likelihood
//! ascent step with the same rate.

use serde::{Deserialize, Serialize};

use crate::action::ActionGrid;
use crate::error::{Error, Result};
use crate::features::{FeatureSchema, RequestState};
use crate::logio::check_schema;
use crate::net::{ArchConfig, Mode, PolicyNet};
use crate::reward::{compute_reward, normalize_batch, Engagement, RewardConfig};
use crate::rng::stream;
use crate::simenv::LoggedTriplet;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub step_size: f64,
    /// Per-epoch multiplicative decay of the step size; 1 keeps it constant.
    #[serde(default = "default_lr_decay")]
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub reward: RewardConfig,
    pub shuffle: bool,
}

fn default_lr_decay() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            step_size: 0.01,
            lr_decay: 1.0,
            batch_size: 256,
            epochs: 5,
            seed: 0,
            reward: RewardConfig::r0(),
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(Error::Config("train: step_size must be > 0".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config("train: lr_decay must lie in (0, 1]".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("train: batch_size must be >= 2".into()));
        }
        if self.epochs < 1 {
            return Err(Error::Config("train: epochs must be >= 1".into()));
        }
        self.reward.validate()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub mean_loss: f64,
    pub mean_reward: f64,
    pub gradient_norm: f64,
}

/// Per-step telemetry plus totals. Deliberately excludes wall-clock time so
/// the report is a pure function of the log and the config.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainReport {
    pub steps: Vec<StepRecord>,
    pub total_steps: u64,
}

/// Recomputes rewards for one batch from the stored winner quantities.
///
/// With normalization on, each engagement-probability channel is min-max
/// normalized across the batch's winners before the user-value term;
/// estimated revenue is never normalized. Gated triplets get reward 0 but
/// stay in the batch.
pub fn batch_rewards(batch: &[&LoggedTriplet], config: &RewardConfig) -> Result<Vec<f64>> {
    let mut rewards = vec![0.0f64; batch.len()];
    let winners: Vec<(usize, &crate::simenv::WinnerRaw)> = batch
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.w.as_ref().map(|w| (i, w)))
        .collect();
    if winners.is_empty() {
        return Ok(rewards);
    }
    if config.normalization {
        let clicks = normalize_batch(&winners.iter().map(|(_, w)| w.p_click).collect::<Vec<_>>());
        let clicks30 = normalize_batch(&winners.iter().map(|(_, w)| w.p_click30).collect::<Vec<_>>());
        let convs = normalize_batch(&winners.iter().map(|(_, w)| w.p_conversion).collect::<Vec<_>>());
        for (k, (i, w)) in winners.iter().enumerate() {
            let norm = Engagement { p_click: clicks[k], p_click30: clicks30[k], p_conversion: convs[k] };
            rewards[*i] = compute_reward(&w.to_candidate(), config, Some(&norm))?.value;
        }
    } else {
        for (i, w) in &winners {
            rewards[*i] = compute_reward(&w.to_candidate(), config, None)?.value;
        }
    }
    Ok(rewards)
}

/// One gradient step; aborts on non-finite loss or gradients.
pub fn train_step(
    net: &mut PolicyNet<f32>,
    states: &[RequestState],
    actions: &[usize],
    rewards: &[f64],
    step_size: f64,
    step: u64,
) -> Result<StepRecord> {
    if states.len() != rewards.len() || states.len() != actions.len() {
        return Err(Error::Config("train: rewards not aligned with batch".into()));
    }
    let cache = net.forward_cache(states, Mode::Train)?;
    let mean_loss = net.loss(&cache, actions, rewards);
    let grads = net.backward(&cache, states, actions, rewards)?;
    let sq_norm: f64 = grads.iter().map(|g| g * g).sum();
    if !mean_loss.is_finite() || !sq_norm.is_finite() {
        return Err(Error::Numeric(format!("train: non-finite loss or gradient at step {step}")));
    }
    net.apply_gradients(&grads, step_size);
    net.update_running_stats(&cache);
    let mean_reward = rewards.iter().sum::<f64>() / rewards.len() as f64;
    Ok(StepRecord { step, mean_loss, mean_reward, gradient_norm: sq_norm.sqrt() })
}

/// Full training run: seeded shuffling per epoch, batches of `batch_size`
/// (a trailing batch smaller than 2 is dropped), rewards recomputed per
/// batch. Deterministic given (log, config).
pub fn train(
    log: &[LoggedTriplet],
    grid: &ActionGrid,
    schema: &FeatureSchema,
    arch: &ArchConfig,
    config: &TrainConfig,
) -> Result<(PolicyNet<f32>, TrainReport)> {
    config.validate()?;
    if log.is_empty() {
        return Err(Error::Schema("train: empty log".into()));
    }
    check_schema(log, schema)?;
    let n_actions = grid.num_actions();
    if let Some(t) = log.iter().find(|t| t.a >= n_actions) {
        return Err(Error::Schema(format!("train: rid {} action {} out of grid range", t.rid, t.a)));
    }

    let mut net = PolicyNet::<f32>::init(schema.clone(), grid.clone(), arch.clone(), config.seed)?;
    let states: Vec<RequestState> = log.iter().map(|t| t.state()).collect();

    let mut report = TrainReport { steps: Vec::new(), total_steps: 0 };
    let mut order: Vec<usize> = (0..log.len()).collect();
    let mut step = 0u64;
    for epoch in 0..config.epochs {
        let step_size = config.step_size * config.lr_decay.powi(epoch as i32);
        if config.shuffle {
            let mut rng = stream(config.seed, epoch as u64, "shuffle");
            // Fisher-Yates
            for i in (1..order.len()).rev() {
                let j = rand::Rng::gen_range(&mut rng, 0..=i);
                order.swap(i, j);
            }
        }
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let batch: Vec<&LoggedTriplet> = chunk.iter().map(|&i| &log[i]).collect();
            let batch_states: Vec<RequestState> = chunk.iter().map(|&i| states[i].clone()).collect();
            let actions: Vec<usize> = batch.iter().map(|t| t.a).collect();
            let rewards = batch_rewards(&batch, &config.reward)?;
            let record = train_step(&mut net, &batch_states, &actions, &rewards, step_size, step)?;
            report.steps.push(record);
            step += 1;
        }
    }
    report.total_steps = step;
    Ok((net, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ActionGrid;
    use crate::simenv::{
        collect, BehaviorPolicy, BidDistributions, BidRange, CampaignMix, LoggedTriplet, Realized, SimConfig,
        UserSegment, WinnerRaw,
    };
    use crate::ranking::CampaignType;

    fn sim_config() -> SimConfig {
        SimConfig {
            seed: 9,
            segments: vec![
                UserSegment { name: "a".into(), ctr: 0.1, ctr30: 0.05, cvr: 0.02, bid_scale: 1.0, feature_noise: 0.02 },
                UserSegment { name: "b".into(), ctr: 0.4, ctr30: 0.2, cvr: 0.3, bid_scale: 1.0, feature_noise: 0.02 },
            ],
            candidates_per_request: 8,
            noise_sigma: 0.1,
            ad_heterogeneity: 0.3,
            bid_quality_exponent: 0.0,
            conversion_click_scale: 1.0,
            campaign_mix: CampaignMix { clickthrough: 0.5, conversion: 0.3, impression: 0.2 },
            bid_distributions: BidDistributions {
                clickthrough: BidRange { min: 0.8, max: 1.6 },
                conversion: BidRange { min: 1.0, max: 2.0 },
                impression: BidRange { min: 0.05, max: 0.15 },
            },
            exploration_fraction: 100.0,
        }
    }

    fn triplet(rid: u64, a: usize, winner: Option<WinnerRaw>) -> LoggedTriplet {
        LoggedTriplet {
            version: 1,
            rid,
            cat: vec![0, 0, 0, 0, 0],
            num: vec![0.1, 0.1, 1.0],
            dense: vec![vec![0.0; 4]],
            a,
            bp: 0.001,
            w: winner,
            rz: Realized::default(),
        }
    }

    fn winner(p_click: f64, bid: f64) -> WinnerRaw {
        WinnerRaw { campaign: CampaignType::ClickThrough, p_click, p_click30: p_click / 2.0, p_conversion: 0.0, bid }
    }

    #[test]
    fn batch_rewards_pass_through_without_normalization() {
        let cfg = RewardConfig { normalization: false, ..RewardConfig::r0() };
        let ts = vec![triplet(0, 1, Some(winner(0.2, 1.5))), triplet(1, 2, None)];
        let refs: Vec<&LoggedTriplet> = ts.iter().collect();
        let r = batch_rewards(&refs, &cfg).unwrap();
        // 0.3 revenue + 1.0*0.2 + 0.5*0.1 user value
        assert!((r[0] - 0.55).abs() < 1e-12);
        assert_eq!(r[1], 0.0); // gated
    }

    #[test]
    fn constant_channel_contributes_zero_under_normalization() {
        let cfg = RewardConfig::r0();
        let ts = vec![
            triplet(0, 1, Some(winner(0.3, 1.0))),
            triplet(1, 2, Some(winner(0.3, 2.0))),
        ];
        let refs: Vec<&LoggedTriplet> = ts.iter().collect();
        let r = batch_rewards(&refs, &cfg).unwrap();
        // Identical p_click and p_click30 across the batch normalize to 0,
        // leaving revenue only.
        assert!((r[0] - 0.3).abs() < 1e-12);
        assert!((r[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn r1_ignores_normalization() {
        let on = RewardConfig::r1();
        let off = RewardConfig { normalization: false, ..RewardConfig::r1() };
        let ts = vec![triplet(0, 1, Some(winner(0.1, 1.0))), triplet(1, 2, Some(winner(0.9, 2.0)))];
        let refs: Vec<&LoggedTriplet> = ts.iter().collect();
        assert_eq!(batch_rewards(&refs, &on).unwrap(), batch_rewards(&refs, &off).unwrap());
    }

    fn training_inputs() -> (Vec<LoggedTriplet>, ActionGrid, FeatureSchema) {
        let cfg = sim_config();
        let grid = ActionGrid::default_grid(10);
        let log = collect(&cfg, &grid, &BehaviorPolicy::Uniform, 600).unwrap();
        let schema = cfg.feature_schema();
        (log, grid, schema)
    }

    #[test]
    fn zero_rewards_leave_learnable_parameters_unchanged() {
        let (log, grid, schema) = training_inputs();
        let arch = ArchConfig { embed_dim: 4, hidden: vec![16] };
        let mut net = PolicyNet::<f32>::init(schema.clone(), grid.clone(), arch, 1).unwrap();
        let before = net.params.clone();
        let states: Vec<RequestState> = log[..8].iter().map(|t| t.state()).collect();
        let actions: Vec<usize> = log[..8].iter().map(|t| t.a).collect();
        train_step(&mut net, &states, &actions, &[0.0; 8], 0.1, 0).unwrap();
        assert_eq!(before, net.params);
    }

    #[test]
    fn positive_reward_raises_action_probability() {
        let (log, grid, schema) = training_inputs();
        let arch = ArchConfig { embed_dim: 4, hidden: vec![16] };
        let mut net = PolicyNet::<f32>::init(schema.clone(), grid.clone(), arch, 1).unwrap();
        let states: Vec<RequestState> = log[..4].iter().map(|t| t.state()).collect();
        let actions: Vec<usize> = log[..4].iter().map(|t| t.a).collect();
        // Train-mode forward on the same batch isolates the parameter update
        // from running-statistic changes.
        let before = net.forward(&states, Mode::Train).unwrap();
        let mut rewards = vec![0.0; 4];
        rewards[0] = 1.0;
        train_step(&mut net, &states, &actions, &rewards, 1e-3, 0).unwrap();
        let after = net.forward(&states, Mode::Train).unwrap();
        assert!(after[0][actions[0]] > before[0][actions[0]]);
    }

    #[test]
    fn training_is_deterministic() {
        let (log, grid, schema) = training_inputs();
        let arch = ArchConfig { embed_dim: 4, hidden: vec![16] };
        let cfg = TrainConfig { epochs: 2, batch_size: 64, ..TrainConfig::default() };
        let (net_a, rep_a) = train(&log, &grid, &schema, &arch, &cfg).unwrap();
        let (net_b, rep_b) = train(&log, &grid, &schema, &arch, &cfg).unwrap();
        assert_eq!(rep_a, rep_b);
        let bits = |n: &PolicyNet<f32>| n.params.iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&net_a), bits(&net_b));
    }

    #[test]
    fn empty_log_rejected() {
        let (_, grid, schema) = training_inputs();
        let err = train(&[], &grid, &schema, &ArchConfig::default(), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn config_guards() {
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 1, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { step_size: 0.0, ..TrainConfig::default() }.validate().is_err());
    }

    #[test]
    fn schema_mismatch_rejected() {
        let (log, grid, mut schema) = training_inputs();
        schema.numerical.pop();
        let err = train(&log, &grid, &schema, &ArchConfig::default(), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }
}
