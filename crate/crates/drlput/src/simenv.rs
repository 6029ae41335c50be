//! Deterministic synthetic ad-request environment.
//!
//! Requests come from latent user segments with known ground-truth
//! engagement rates, so the best grid action per segment is computable by
//! brute force. Every random draw is keyed by `(seed, request_id, purpose)`,
//! making collection output a pure function of the configuration.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::action::{Action, ActionGrid};
use crate::error::{Error, Result};
use crate::features::{CategoricalSpec, DenseSpec, FeatureSchema, RequestState};
use crate::ranking::{rank, AdCandidate, CampaignType};
use crate::reward::{compute_reward, RewardConfig};
use crate::rng::stream;

/// A latent user population with ground-truth engagement rates. The
/// observable features are noisy functions of these rates.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct UserSegment {
    pub name: String,
    pub ctr: f64,
    pub ctr30: f64,
    pub cvr: f64,
    /// Multiplier on sampled bids; also the segment's CPM proxy.
    pub bid_scale: f64,
    /// Stddev of the observation noise on historical-rate features.
    pub feature_noise: f64,
}

impl UserSegment {
    fn validate(&self) -> Result<()> {
        let rates_ok = [self.ctr, self.ctr30, self.cvr].iter().all(|r| (0.0..=1.0).contains(r));
        if !rates_ok || self.ctr30 > self.ctr {
            return Err(Error::Config(format!(
                "segment '{}': rates must lie in [0,1] with ctr30 <= ctr",
                self.name
            )));
        }
        if self.bid_scale < 0.0 || self.feature_noise < 0.0 {
            return Err(Error::Config(format!("segment '{}': negative scale or noise", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CampaignMix {
    pub clickthrough: f64,
    pub conversion: f64,
    pub impression: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BidRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BidDistributions {
    pub clickthrough: BidRange,
    pub conversion: BidRange,
    pub impression: BidRange,
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Filled from the run-level seed when loaded through a run config.
    #[serde(default)]
    pub seed: u64,
    pub segments: Vec<UserSegment>,
    pub candidates_per_request: usize,
    /// Multiplicative log-normal noise turning true rates into predictions.
    pub noise_sigma: f64,
    /// Per-ad spread of true rates around the segment rates (log-normal sigma).
    pub ad_heterogeneity: f64,
    /// Anti-correlation between bids and engagement quality: an ad whose true
    /// rates sit at `factor` above the segment baseline bids
    /// `factor^-bid_quality_exponent` of its base bid. Zero decouples them.
    #[serde(default)]
    pub bid_quality_exponent: f64,
    /// Click-rate multiplier for conversion-campaign inventory relative to the
    /// segment baseline. Conversion-optimized creatives typically attract
    /// fewer clicks; 1 leaves them at the segment rate.
    #[serde(default = "default_one")]
    pub conversion_click_scale: f64,
    pub campaign_mix: CampaignMix,
    pub bid_distributions: BidDistributions,
    /// Percent of traffic reserved for exploration logging, in (0, 100].
    pub exploration_fraction: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Config("sim: at least one segment required".into()));
        }
        for s in &self.segments {
            s.validate()?;
        }
        if self.candidates_per_request == 0 {
            return Err(Error::Config("sim: candidates_per_request must be >= 1".into()));
        }
        let mix_sum = self.campaign_mix.clickthrough + self.campaign_mix.conversion + self.campaign_mix.impression;
        if (mix_sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("sim: campaign_mix must sum to 1, got {mix_sum}")));
        }
        if !(self.exploration_fraction > 0.0 && self.exploration_fraction <= 100.0) {
            return Err(Error::Config("sim: exploration_fraction must lie in (0, 100]".into()));
        }
        if self.noise_sigma < 0.0 || self.ad_heterogeneity < 0.0 {
            return Err(Error::Config("sim: noise parameters must be >= 0".into()));
        }
        if self.bid_quality_exponent < 0.0 {
            return Err(Error::Config("sim: bid_quality_exponent must be >= 0".into()));
        }
        if !(self.conversion_click_scale >= 0.0 && self.conversion_click_scale <= 1.0) {
            return Err(Error::Config("sim: conversion_click_scale must lie in [0, 1]".into()));
        }
        for (name, r) in [
            ("clickthrough", self.bid_distributions.clickthrough),
            ("conversion", self.bid_distributions.conversion),
            ("impression", self.bid_distributions.impression),
        ] {
            if r.min < 0.0 || r.max < r.min {
                return Err(Error::Config(format!("sim: bad {name} bid range [{}, {}]", r.min, r.max)));
            }
        }
        Ok(())
    }

    /// The feature layout this simulator emits.
    pub fn feature_schema(&self) -> FeatureSchema {
        FeatureSchema {
            categorical: vec![
                CategoricalSpec { name: "segment_bucket".into(), cardinality: self.segments.len().max(2) },
                CategoricalSpec { name: "metro".into(), cardinality: 8 },
                CategoricalSpec { name: "hour_of_day".into(), cardinality: 24 },
                CategoricalSpec { name: "day_of_week".into(), cardinality: 7 },
                CategoricalSpec { name: "country".into(), cardinality: 4 },
            ],
            numerical: vec!["hist_ctr".into(), "hist_cvr".into(), "hist_cpm".into()],
            dense: vec![DenseSpec { name: "activity_summary".into(), dimension: 4 }],
        }
    }
}

/// One candidate with both predictions (visible to ranking) and ground-truth
/// rates (used only to sample realized events).
#[derive(Debug, Clone, PartialEq)]
pub struct SimAd {
    pub ad: AdCandidate,
    pub true_ctr: f64,
    pub true_ctr30: f64,
    pub true_cvr: f64,
}

/// Raw quantities of the winning ad, stored so every reward variant can be
/// recomputed offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinnerRaw {
    pub campaign: CampaignType,
    pub p_click: f64,
    pub p_click30: f64,
    pub p_conversion: f64,
    pub bid: f64,
}

impl WinnerRaw {
    pub fn from_candidate(ad: &AdCandidate) -> WinnerRaw {
        WinnerRaw {
            campaign: ad.campaign,
            p_click: ad.p_click,
            p_click30: ad.p_click30,
            p_conversion: ad.p_conversion,
            bid: ad.bid,
        }
    }

    pub fn to_candidate(&self) -> AdCandidate {
        AdCandidate {
            ad_id: 0,
            campaign: self.campaign,
            p_click: self.p_click,
            p_click30: self.p_click30,
            p_conversion: self.p_conversion,
            bid: self.bid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Realized {
    pub clicked: bool,
    pub clicked30: bool,
    pub converted: bool,
    pub revenue: f64,
}

/// One `<state, action, raw outcome>` record of the exploration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedTriplet {
    #[serde(rename = "v")]
    pub version: u32,
    pub rid: u64,
    pub cat: Vec<usize>,
    pub num: Vec<f64>,
    pub dense: Vec<Vec<f64>>,
    /// Flat action index.
    pub a: usize,
    /// Behavior-policy probability of the logged action.
    pub bp: f64,
    pub w: Option<WinnerRaw>,
    pub rz: Realized,
}

pub const LOG_FORMAT_VERSION: u32 = 1;

impl LoggedTriplet {
    pub fn state(&self) -> RequestState {
        RequestState { categorical: self.cat.clone(), numerical: self.num.clone(), dense: self.dense.clone() }
    }
}

/// Exploratory action distribution used on reserved traffic.
#[derive(Debug, Clone, PartialEq)]
pub enum BehaviorPolicy {
    Uniform,
    DiscreteGaussian {
        mu: Action,
        /// Per-group stddev in value units.
        sigma: Vec<f64>,
    },
}

fn sample_standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; one draw per call keeps the stream layout simple.
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

pub fn sample_request_for_segment<R: Rng>(
    config: &SimConfig,
    segment_id: usize,
    rng: &mut R,
) -> (RequestState, Vec<SimAd>) {
    let seg = &config.segments[segment_id];
    let noise = |rng: &mut R, base: f64| base + seg.feature_noise * sample_standard_normal(rng);

    let categorical = vec![
        segment_id,
        rng.gen_range(0..8),
        rng.gen_range(0..24),
        rng.gen_range(0..7),
        rng.gen_range(0..4),
    ];
    let numerical = vec![
        clamp01(noise(rng, seg.ctr)),
        clamp01(noise(rng, seg.cvr)),
        noise(rng, seg.bid_scale).max(0.0),
    ];
    let dense = vec![vec![
        noise(rng, seg.ctr),
        noise(rng, seg.ctr30),
        noise(rng, seg.cvr),
        noise(rng, seg.bid_scale),
    ]];
    let state = RequestState { categorical, numerical, dense };

    let mix = &config.campaign_mix;
    let mut ads = Vec::with_capacity(config.candidates_per_request);
    for i in 0..config.candidates_per_request {
        let u: f64 = rng.gen();
        let (campaign, range) = if u < mix.clickthrough {
            (CampaignType::ClickThrough, config.bid_distributions.clickthrough)
        } else if u < mix.clickthrough + mix.conversion {
            (CampaignType::Conversion, config.bid_distributions.conversion)
        } else {
            (CampaignType::Impression, config.bid_distributions.impression)
        };
        let base_bid = (range.min + (range.max - range.min) * rng.gen::<f64>()) * seg.bid_scale;

        // Per-ad true rates: segment rates spread by a shared log-normal
        // factor for click channels (keeps ctr30 <= ctr) and an
        // independent one for conversions.
        let click_factor = (config.ad_heterogeneity * sample_standard_normal(rng)).exp();
        let conv_factor = (config.ad_heterogeneity * sample_standard_normal(rng)).exp();

        // High-quality inventory bids lower: this puts estimated revenue in
        // genuine tension with user value instead of tracking it.
        let quality = match campaign {
            CampaignType::ClickThrough => click_factor,
            CampaignType::Conversion => conv_factor,
            CampaignType::Impression => 1.0,
        };
        let bid = base_bid * quality.powf(-config.bid_quality_exponent);
        let click_scale = match campaign {
            CampaignType::Conversion => config.conversion_click_scale,
            _ => 1.0,
        };
        let true_ctr = clamp01(seg.ctr * click_factor * click_scale);
        let true_ctr30 = clamp01(seg.ctr30 * click_factor * click_scale).min(true_ctr);
        let true_cvr = clamp01(seg.cvr * conv_factor);

        // Predictions: true rates under multiplicative log-normal noise.
        let pn = |rng: &mut R, v: f64| clamp01(v * (config.noise_sigma * sample_standard_normal(rng)).exp());
        let p_click = pn(rng, true_ctr);
        let p_click30 = pn(rng, true_ctr30).min(p_click);
        let p_conversion = pn(rng, true_cvr);

        ads.push(SimAd {
            ad: AdCandidate { ad_id: i as u64, campaign, p_click, p_click30, p_conversion, bid },
            true_ctr,
            true_ctr30,
            true_cvr,
        });
    }
    (state, ads)
}

/// Samples one request: a segment, its features, and the candidate ads.
pub fn generate_request(config: &SimConfig, request_id: u64) -> (RequestState, Vec<SimAd>, usize) {
    let mut rng = stream(config.seed, request_id, "request");
    let segment_id = rng.gen_range(0..config.segments.len());
    let (state, ads) = sample_request_for_segment(config, segment_id, &mut rng);
    (state, ads, segment_id)
}

/// Per-index probability masses of a discretized Gaussian over one group's
/// grid values, with endpoint clamping absorbing the tails.
pub fn discrete_gaussian_probs(grid: &ActionGrid, group: usize, mu: f64, sigma: f64) -> Vec<f64> {
    let m = grid.values_per_group;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let cdf = |x: f64| normal.cdf((x - mu) / sigma);
    let mut probs = Vec::with_capacity(m);
    for k in 0..m {
        let lo = if k == 0 {
            0.0
        } else {
            cdf((grid.grid_value(group, k - 1) + grid.grid_value(group, k)) / 2.0)
        };
        let hi = if k == m - 1 {
            1.0
        } else {
            cdf((grid.grid_value(group, k) + grid.grid_value(group, k + 1)) / 2.0)
        };
        probs.push(hi - lo);
    }
    probs
}

/// Draws one action from the behavior policy, returning the exact
/// probability mass of the sample.
pub fn behavior_sample<R: Rng>(
    policy: &BehaviorPolicy,
    grid: &ActionGrid,
    rng: &mut R,
) -> Result<(Action, f64)> {
    match policy {
        BehaviorPolicy::Uniform => {
            let n = grid.num_actions();
            let flat = rng.gen_range(0..n);
            Ok((grid.action_from_flat(flat)?, 1.0 / n as f64))
        }
        BehaviorPolicy::DiscreteGaussian { mu, sigma } => {
            let g = grid.num_groups();
            if mu.group_indices.len() != g || sigma.len() != g {
                return Err(Error::Config("behavior: mu/sigma do not match the grid".into()));
            }
            let mut indices = Vec::with_capacity(g);
            let mut prob = 1.0;
            for j in 0..g {
                if sigma[j] <= 0.0 {
                    return Err(Error::Config("behavior: sigma must be > 0".into()));
                }
                let mu_v = grid.grid_value(j, mu.group_indices[j]);
                let x = mu_v + sigma[j] * sample_standard_normal(rng);
                let idx = grid.nearest_index(j, x);
                prob *= discrete_gaussian_probs(grid, j, mu_v, sigma[j])[idx];
                indices.push(idx);
            }
            Ok((grid.action_from_indices(indices)?, prob))
        }
    }
}

/// Probability of a given action under the behavior policy.
pub fn behavior_prob(policy: &BehaviorPolicy, grid: &ActionGrid, action: &Action) -> Result<f64> {
    match policy {
        BehaviorPolicy::Uniform => Ok(1.0 / grid.num_actions() as f64),
        BehaviorPolicy::DiscreteGaussian { mu, sigma } => {
            let mut prob = 1.0;
            for j in 0..grid.num_groups() {
                let mu_v = grid.grid_value(j, mu.group_indices[j]);
                prob *= discrete_gaussian_probs(grid, j, mu_v, sigma[j])[action.group_indices[j]];
            }
            Ok(prob)
        }
    }
}

/// Applies one action to one request: ranks the candidates, records the
/// winner's raw quantities, and samples realized engagement from the winning
/// ad's ground-truth rates.
pub fn step(
    config: &SimConfig,
    grid: &ActionGrid,
    request_id: u64,
    state: &RequestState,
    ads: &[SimAd],
    action: &Action,
    behavior_prob: f64,
) -> Result<LoggedTriplet> {
    let params = grid.decode(action)?;
    let candidates: Vec<AdCandidate> = ads.iter().map(|a| a.ad.clone()).collect();
    let winner = rank(&candidates, &params);

    let (w, rz) = match winner {
        None => (None, Realized::default()),
        Some(win) => {
            let sim_ad = &ads[win.ad_id as usize];
            let mut rng = stream(config.seed, request_id, "realize");
            let clicked = rng.gen::<f64>() < sim_ad.true_ctr;
            let clicked30 = clicked
                && sim_ad.true_ctr > 0.0
                && rng.gen::<f64>() < sim_ad.true_ctr30 / sim_ad.true_ctr;
            let converted = rng.gen::<f64>() < sim_ad.true_cvr;
            let revenue = match win.campaign {
                CampaignType::ClickThrough => {
                    if clicked {
                        win.bid
                    } else {
                        0.0
                    }
                }
                CampaignType::Conversion => {
                    if converted {
                        win.bid
                    } else {
                        0.0
                    }
                }
                CampaignType::Impression => win.bid,
            };
            (
                Some(WinnerRaw::from_candidate(win)),
                Realized { clicked, clicked30, converted, revenue },
            )
        }
    };

    Ok(LoggedTriplet {
        version: LOG_FORMAT_VERSION,
        rid: request_id,
        cat: state.categorical.clone(),
        num: state.numerical.clone(),
        dense: state.dense.clone(),
        a: action.flat_index,
        bp: behavior_prob,
        w,
        rz,
    })
}

/// True on the `ceil(N * x / 100)` request ids reserved for exploration,
/// spread evenly over `0..n`.
fn is_exploration(rid: u64, n: u64, fraction_percent: f64) -> bool {
    let target = ((n as f64) * fraction_percent / 100.0).ceil() as u128;
    let rid = rid as u128;
    let n = n as u128;
    (rid * target) / n < ((rid + 1) * target) / n
}

/// Simulates `count` requests and returns the exploration triplets, exactly
/// `ceil(count * x / 100)` of them. Non-exploration traffic serves the
/// production-default midpoint action and is excluded from the log.
pub fn collect(
    config: &SimConfig,
    grid: &ActionGrid,
    policy: &BehaviorPolicy,
    count: u64,
) -> Result<Vec<LoggedTriplet>> {
    config.validate()?;
    grid.validate()?;
    if count == 0 {
        return Err(Error::Config("collect: count must be >= 1".into()));
    }
    let mut out = Vec::new();
    for rid in 0..count {
        if !is_exploration(rid, count, config.exploration_fraction) {
            continue;
        }
        let (state, ads, _segment) = generate_request(config, rid);
        let mut rng = stream(config.seed, rid, "behavior");
        let (action, bp) = behavior_sample(policy, grid, &mut rng)?;
        out.push(step(config, grid, rid, &state, &ads, &action, bp)?);
    }
    Ok(out)
}

/// Expected (probability-weighted, not sampled) reward of applying decoded
/// params to one request, under a variant with normalization off.
pub fn expected_reward(
    ads: &[SimAd],
    params: &crate::action::UtilityParams,
    reward_config: &RewardConfig,
) -> f64 {
    let raw = RewardConfig { normalization: false, ..*reward_config };
    let candidates: Vec<AdCandidate> = ads.iter().map(|a| a.ad.clone()).collect();
    match rank(&candidates, params) {
        None => 0.0,
        Some(winner) => compute_reward(winner, &raw, None).expect("raw reward").value,
    }
}

const ORACLE_ACTION_GUARD: usize = 1_000_000;

/// Brute-force best action for a segment: evaluates every grid action on
/// `n_eval` fresh requests using expected rewards. Ties break to the lowest
/// flat index.
pub fn oracle_best_action(
    config: &SimConfig,
    grid: &ActionGrid,
    segment_id: usize,
    reward_config: &RewardConfig,
    n_eval: usize,
) -> Result<(Action, f64)> {
    config.validate()?;
    grid.validate()?;
    if grid.num_actions() > ORACLE_ACTION_GUARD {
        return Err(Error::Config(format!(
            "oracle: {} actions exceed the enumeration guard of {ORACLE_ACTION_GUARD}",
            grid.num_actions()
        )));
    }
    if segment_id >= config.segments.len() {
        return Err(Error::Config(format!("oracle: segment {segment_id} out of range")));
    }
    if n_eval == 0 {
        return Err(Error::Config("oracle: n_eval must be >= 1".into()));
    }

    let decoded: Vec<crate::action::UtilityParams> = (0..grid.num_actions())
        .map(|k| grid.decode(&grid.action_from_flat(k).unwrap()).unwrap())
        .collect();
    let mut totals = vec![0.0f64; grid.num_actions()];
    for i in 0..n_eval {
        let mut rng = stream(config.seed, i as u64, "oracle");
        let (_state, ads) = sample_request_for_segment(config, segment_id, &mut rng);
        for (k, params) in decoded.iter().enumerate() {
            totals[k] += expected_reward(&ads, params, reward_config);
        }
    }
    let mut best = 0usize;
    for k in 1..totals.len() {
        if totals[k] > totals[best] {
            best = k;
        }
    }
    Ok((grid.action_from_flat(best)?, totals[best] / n_eval as f64))
}
