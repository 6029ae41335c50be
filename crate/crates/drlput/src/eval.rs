//! Offline gates and simulator-based policy measurement.
//!
//! `diversity` and `relative_gain` are the pass/fail gates over a logged
//! dataset; `simulate_policy` measures realized business metrics by serving
//! the greedy policy inside the simulator; `bucket_report` averages decoded
//! hyperparameters across populations bucketed by historical CTR/CVR/CPM.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::ActionGrid;
use crate::error::{Error, Result};
use crate::features::{FeatureSchema, RequestState};
use crate::logio::check_schema;
use crate::net::{ArchConfig, Mode, PolicyNet, SelectMode};
use crate::reward::{RewardConfig, RewardVariant};
use crate::rng::stream;
use crate::simenv::{expected_reward, generate_request, step, LoggedTriplet, SimConfig};
use crate::train::{batch_rewards, train, TrainConfig};

const FORWARD_CHUNK: usize = 256;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub diversity: f64,
    pub relative_gain: f64,
    pub diversity_threshold: f64,
    pub verdict: bool,
    /// Trained-policy mean expected reward over oracle mean, when a
    /// simulator config is supplied.
    pub oracle_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SimMetrics {
    pub revenue: f64,
    pub impressions: u64,
    pub ctr: f64,
    pub ctr30: f64,
    pub cvr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Bucket {
    pub key_min: f64,
    pub key_max: f64,
    pub mean_w_click: f64,
    pub mean_w_conversion: f64,
    pub mean_reserve: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BucketKey {
    Ctr,
    Cvr,
    Cpm,
}

impl BucketKey {
    /// Index into the simulator's numerical features.
    pub fn feature_index(self) -> usize {
        match self {
            BucketKey::Ctr => 0,
            BucketKey::Cvr => 1,
            BucketKey::Cpm => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BucketKey::Ctr => "ctr",
            BucketKey::Cvr => "cvr",
            BucketKey::Cpm => "cpm",
        }
    }
}

impl std::str::FromStr for BucketKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ctr" => Ok(BucketKey::Ctr),
            "cvr" => Ok(BucketKey::Cvr),
            "cpm" => Ok(BucketKey::Cpm),
            other => Err(Error::Config(format!("unknown bucket key '{other}' (expected ctr|cvr|cpm)"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BucketReport {
    pub key: BucketKey,
    pub buckets: Vec<Bucket>,
}

/// `1 - N_mode / N_total`: zero when every prediction is the same action.
pub fn diversity(predicted_actions: &[usize]) -> f64 {
    assert!(!predicted_actions.is_empty(), "diversity needs at least one prediction");
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for a in predicted_actions {
        *counts.entry(*a).or_insert(0) += 1;
    }
    let mode = counts.values().copied().max().unwrap();
    1.0 - mode as f64 / predicted_actions.len() as f64
}

/// Greedy action per state, eval mode, chunked.
pub fn greedy_actions(net: &PolicyNet<f32>, states: &[RequestState]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(states.len());
    let mut rng = stream(0, 0, "greedy"); // unused by greedy selection
    for chunk in states.chunks(FORWARD_CHUNK) {
        for dist in net.forward(chunk, Mode::Eval)? {
            out.push(crate::net::select_action(&dist, SelectMode::Greedy, &mut rng));
        }
    }
    Ok(out)
}

/// Reward-weighted sum of probability differences between the candidate
/// policy and the logged behavior policy. An unnormalized sum, so the value
/// scales with log size.
pub fn relative_gain(log: &[LoggedTriplet], net: &PolicyNet<f32>, reward_config: &RewardConfig) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::Schema("relative_gain: empty log".into()));
    }
    check_schema(log, &net.schema)?;
    let refs: Vec<&LoggedTriplet> = log.iter().collect();
    let rewards = batch_rewards(&refs, reward_config)?;
    let states: Vec<RequestState> = log.iter().map(|t| t.state()).collect();
    let mut gain = 0.0;
    let mut i = 0;
    for chunk in states.chunks(FORWARD_CHUNK) {
        for dist in net.forward(chunk, Mode::Eval)? {
            let t = &log[i];
            gain += rewards[i] * (dist[t.a] - t.bp);
            i += 1;
        }
    }
    Ok(gain)
}

/// The offline gate: diversity over greedy predictions plus relative gain.
/// Passes iff `diversity >= t` and `relative_gain > 0`.
pub fn gate(net: &PolicyNet<f32>, log: &[LoggedTriplet], t: f64, reward_config: &RewardConfig) -> Result<EvalReport> {
    if log.is_empty() {
        return Err(Error::Schema("gate: empty log".into()));
    }
    let states: Vec<RequestState> = log.iter().map(|t| t.state()).collect();
    let d = diversity(&greedy_actions(net, &states)?);
    let rg = relative_gain(log, net, reward_config)?;
    Ok(EvalReport {
        diversity: d,
        relative_gain: rg,
        diversity_threshold: t,
        verdict: d >= t && rg > 0.0,
        oracle_ratio: None,
    })
}

struct SimTally {
    revenue: f64,
    impressions: u64,
    clicks: u64,
    clicks30: u64,
    conversions: u64,
    expected_reward_total: f64,
    requests: u64,
}

impl SimTally {
    fn new() -> Self {
        SimTally {
            revenue: 0.0,
            impressions: 0,
            clicks: 0,
            clicks30: 0,
            conversions: 0,
            expected_reward_total: 0.0,
            requests: 0,
        }
    }

    fn metrics(&self) -> Result<(SimMetrics, f64)> {
        if self.requests == 0 {
            return Err(Error::Config("simulate: zero traffic produces empty metrics".into()));
        }
        let imp = self.impressions.max(1) as f64;
        Ok((
            SimMetrics {
                revenue: self.revenue,
                impressions: self.impressions,
                ctr: self.clicks as f64 / imp,
                ctr30: self.clicks30 as f64 / imp,
                cvr: self.conversions as f64 / imp,
            },
            self.expected_reward_total / self.requests as f64,
        ))
    }
}

fn simulate_with<F>(
    sim_config: &SimConfig,
    grid: &ActionGrid,
    n_requests: u64,
    reward_config: &RewardConfig,
    mut choose: F,
) -> Result<(SimMetrics, f64)>
where
    F: FnMut(&[RequestState]) -> Result<Vec<usize>>,
{
    if n_requests == 0 {
        return Err(Error::Config("simulate: zero traffic produces empty metrics".into()));
    }
    sim_config.validate()?;
    let mut tally = SimTally::new();
    let mut rid = 0u64;
    while rid < n_requests {
        let chunk = FORWARD_CHUNK.min((n_requests - rid) as usize);
        let mut states = Vec::with_capacity(chunk);
        let mut adsets = Vec::with_capacity(chunk);
        for k in 0..chunk {
            let (state, ads, _) = generate_request(sim_config, rid + k as u64);
            states.push(state);
            adsets.push(ads);
        }
        let actions = choose(&states)?;
        for (k, flat) in actions.iter().enumerate() {
            let r = rid + k as u64;
            let action = grid.action_from_flat(*flat)?;
            let t = step(sim_config, grid, r, &states[k], &adsets[k], &action, 1.0)?;
            if t.w.is_some() {
                tally.impressions += 1;
                tally.clicks += t.rz.clicked as u64;
                tally.clicks30 += t.rz.clicked30 as u64;
                tally.conversions += t.rz.converted as u64;
                tally.revenue += t.rz.revenue;
            }
            let params = grid.decode(&action)?;
            tally.expected_reward_total += expected_reward(&adsets[k], &params, reward_config);
            tally.requests += 1;
        }
        rid += chunk as u64;
    }
    tally.metrics()
}

/// Serves the greedy policy on `n_requests` simulated requests and returns
/// realized metrics plus the mean expected reward.
pub fn simulate_policy(
    net: &PolicyNet<f32>,
    sim_config: &SimConfig,
    grid: &ActionGrid,
    n_requests: u64,
    reward_config: &RewardConfig,
) -> Result<(SimMetrics, f64)> {
    simulate_with(sim_config, grid, n_requests, reward_config, |states| greedy_actions(net, states))
}

/// Same measurement for a fixed action; used for oracle and collapse checks.
pub fn simulate_constant_action(
    sim_config: &SimConfig,
    grid: &ActionGrid,
    n_requests: u64,
    reward_config: &RewardConfig,
    flat_action: usize,
) -> Result<(SimMetrics, f64)> {
    simulate_with(sim_config, grid, n_requests, reward_config, |states| Ok(vec![flat_action; states.len()]))
}

/// Same measurement with actions drawn uniformly from the grid.
pub fn simulate_uniform_policy(
    sim_config: &SimConfig,
    grid: &ActionGrid,
    n_requests: u64,
    reward_config: &RewardConfig,
) -> Result<(SimMetrics, f64)> {
    let n = grid.num_actions();
    let mut counter = 0u64;
    simulate_with(sim_config, grid, n_requests, reward_config, move |states| {
        let mut out = Vec::with_capacity(states.len());
        for _ in states {
            let mut rng = stream(sim_config.seed, counter, "uniform_eval");
            out.push(rand::Rng::gen_range(&mut rng, 0..n));
            counter += 1;
        }
        Ok(out)
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: RewardVariant,
    pub metrics: SimMetrics,
    pub mean_expected_reward: f64,
}

/// Trains one policy per reward variant from the same log with identical
/// seeds, then measures each in the simulator. Per-variant failures are
/// reported without aborting the other variants.
#[allow(clippy::too_many_arguments)]
pub fn ablation_run(
    variants: &[RewardConfig],
    log: &[LoggedTriplet],
    grid: &ActionGrid,
    schema: &FeatureSchema,
    arch: &ArchConfig,
    train_base: &TrainConfig,
    sim_config: &SimConfig,
    n_eval_requests: u64,
) -> Result<Vec<(RewardVariant, Result<AblationRow>)>> {
    if variants.len() < 2 {
        return Err(Error::Config("ablate: at least two reward variants required".into()));
    }
    let mut rows = Vec::with_capacity(variants.len());
    for reward in variants {
        let variant = reward.variant;
        let outcome = (|| {
            let cfg = TrainConfig { reward: *reward, ..train_base.clone() };
            let (net, _report) = train(log, grid, schema, arch, &cfg)?;
            // Measured under the shared R0 raw reward so variants are comparable.
            let (metrics, mean_expected_reward) =
                simulate_policy(&net, sim_config, grid, n_eval_requests, &RewardConfig::r0())?;
            Ok(AblationRow { variant, metrics, mean_expected_reward })
        })();
        rows.push((variant, outcome));
    }
    Ok(rows)
}

/// Equal-population bucketing of a state population by one historical key,
/// with the mean decoded hyperparameters of the greedy action per bucket.
pub fn bucket_report(
    net: &PolicyNet<f32>,
    population: &[RequestState],
    grid: &ActionGrid,
    key: BucketKey,
    n_buckets: usize,
) -> Result<BucketReport> {
    if n_buckets < 2 {
        return Err(Error::Config("report: n_buckets must be >= 2".into()));
    }
    if population.len() < n_buckets {
        return Err(Error::Config(format!(
            "report: population of {} is smaller than {n_buckets} buckets",
            population.len()
        )));
    }
    let ki = key.feature_index();
    let actions = greedy_actions(net, population)?;
    let mut order: Vec<usize> = (0..population.len()).collect();
    order.sort_by(|a, b| {
        population[*a].numerical[ki]
            .partial_cmp(&population[*b].numerical[ki])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let n = order.len();
    let mut buckets = Vec::with_capacity(n_buckets);
    for b in 0..n_buckets {
        let lo = b * n / n_buckets;
        let hi = (b + 1) * n / n_buckets;
        let members = &order[lo..hi];
        let mut w_click = 0.0;
        let mut w_conv = 0.0;
        let mut reserve = 0.0;
        for &i in members {
            let params = grid.decode(&grid.action_from_flat(actions[i])?)?;
            w_click += params.weights.get("w_click").copied().unwrap_or(0.0);
            w_conv += params.weights.get("w_conversion").copied().unwrap_or(0.0);
            reserve += params.reserve;
        }
        let c = members.len() as f64;
        buckets.push(Bucket {
            key_min: population[members[0]].numerical[ki],
            key_max: population[*members.last().unwrap()].numerical[ki],
            mean_w_click: w_click / c,
            mean_w_conversion: w_conv / c,
            mean_reserve: reserve / c,
            count: members.len(),
        });
    }
    Ok(BucketReport { key, buckets })
}

/// CSV artifact: one row per bucket, fixed column order.
pub fn write_bucket_csv(report: &BucketReport, path: &Path) -> Result<()> {
    let mut out = String::from("bucket,key_min,key_max,mean_w_click,mean_w_conversion,mean_reserve,count\n");
    for (i, b) in report.buckets.iter().enumerate() {
        out.push_str(&format!(
            "{i},{},{},{},{},{},{}\n",
            b.key_min, b.key_max, b.mean_w_click, b.mean_w_conversion, b.mean_reserve, b.count
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::Io(format!("report write {}: {e}", path.display())))
}

/// SVG artifact: one line per decoded hyperparameter across buckets.
pub fn write_bucket_svg(report: &BucketReport, path: &Path) -> Result<()> {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 48.0;
    let n = report.buckets.len();
    let series: [(&str, &str, Vec<f64>); 3] = [
        ("w_click", "#1f77b4", report.buckets.iter().map(|b| b.mean_w_click).collect()),
        ("w_conversion", "#d62728", report.buckets.iter().map(|b| b.mean_w_conversion).collect()),
        ("reserve_b", "#2ca02c", report.buckets.iter().map(|b| b.mean_reserve).collect()),
    ];
    let y_max = series.iter().flat_map(|(_, _, v)| v.iter()).cloned().fold(0.0f64, f64::max).max(1e-9);
    let sx = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (n.max(2) - 1) as f64;
    let sy = |v: f64| H - PAD - (H - 2.0 * PAD) * v / y_max;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n<text x=\"{}\" y=\"24\" font-family=\"monospace\" font-size=\"14\">mean decoded hyperparameters by {} bucket</text>\n",
        PAD, report.key.name()
    ));
    svg.push_str(&format!(
        "<line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n<line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD
    ));
    for (si, (name, color, values)) in series.iter().enumerate() {
        let points: Vec<String> = values.iter().enumerate().map(|(i, v)| format!("{},{}", sx(i), sy(*v))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" fill=\"{color}\">{name}</text>\n",
            W - PAD + 4.0,
            sy(*values.last().unwrap()) + 4.0 + si as f64
        ));
    }
    for i in 0..n {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">b{i}</text>\n",
            sx(i),
            H - PAD + 16.0
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| Error::Io(format!("report write {}: {e}", path.display())))
}
