//! Scratch sweep: train desk defaults at a seed, print bucket means only.
use drlput::config::{preset, RunConfig};
use drlput::eval::{bucket_report, diversity, BucketKey};
use drlput::net::Mode;
use drlput::simenv::{collect, generate_request};
use drlput::train::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args[1].parse().unwrap();
    let triplets: u64 = args.get(2).map(|v| v.parse().unwrap()).unwrap_or(0);
    let epochs: usize = args.get(3).map(|v| v.parse().unwrap()).unwrap_or(0);

    let mut cfg = RunConfig::from_toml(preset("desk").unwrap()).unwrap();
    cfg.seed = seed;
    cfg.sim.seed = seed;
    if triplets > 0 {
        cfg.eval.triplets = triplets;
    }
    if let Some(m) = args.get(4) {
        cfg.values_per_group = m.parse().unwrap();
    }
    // continuum mode: replace the 4 desk segments with a 16-step ctr ladder
    // interpolating the same economy (conversion anchor fading with ctr).
    if args.get(5).map(|v| v == "c").unwrap_or(false) {
        let n = 16usize;
        cfg.sim.segments = (0..n)
            .map(|k| {
                let t = k as f64 / (n - 1) as f64;
                let ctr = 0.10 + 0.30 * t;
                drlput::simenv::UserSegment {
                    name: format!("seg{k:02}"),
                    ctr,
                    ctr30: (0.9 - 0.85 * t) * ctr,
                    cvr: 0.32 * (1.0 - t) * (1.0 - t) + 0.01,
                    bid_scale: 1.0,
                    feature_noise: 0.01,
                }
            })
            .collect();
    }
    let grid = cfg.grid().unwrap();
    let policy = cfg.behavior_policy(&grid).unwrap();
    let log = collect(&cfg.sim, &grid, &policy, cfg.eval.triplets).unwrap();
    let schema = cfg.sim.feature_schema();
    let mut tc = TrainConfig { reward: cfg.reward_config().unwrap(), ..cfg.train_config() };
    if epochs > 0 {
        tc.epochs = epochs;
    }
    let (net, _) = train(&log, &grid, &schema, &cfg.arch(), &tc).unwrap();

    let mut fresh = cfg.sim.clone();
    fresh.seed = cfg.seed.wrapping_add(0x9e3779b97f4a7c15);
    let states: Vec<_> = (0..4000).map(|rid| generate_request(&fresh, rid).0).collect();
    let rep = bucket_report(&net, &states, &grid, BucketKey::Ctr, 4).unwrap();
    let w: Vec<f64> = rep.buckets.iter().map(|b| b.mean_w_click).collect();
    let probs = net.forward(&states, Mode::Eval).unwrap();
    let greedy: Vec<usize> = probs
        .iter()
        .map(|row| {
            row.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0
        })
        .collect();
    let div = diversity(&greedy);
    let monotone = w.windows(2).all(|p| p[1] >= p[0] - 1e-12);
    let spread = w[3] >= 1.1 * w[0];
    println!(
        "seed={seed} buckets={w:?} div={div:.3} monotone={monotone} spread={spread} pass={}",
        monotone && spread
    );
}
