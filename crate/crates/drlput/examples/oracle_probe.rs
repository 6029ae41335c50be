use drlput::config::{preset, RunConfig};
use drlput::eval::{bucket_report, diversity, greedy_actions, simulate_policy, simulate_uniform_policy, BucketKey};
use drlput::features::RequestState;
use drlput::reward::RewardConfig;
use drlput::simenv::{collect, generate_request, expected_reward, oracle_best_action};
use drlput::train::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(5);
    let batch: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(256);
    let triplets: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0);
    let seed: u64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(7);
    let decay: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(1.0);

    let mut cfg = RunConfig::from_toml(preset("desk").unwrap()).unwrap();
    cfg.seed = seed;
    cfg.sim.seed = seed;
    let grid = cfg.grid().unwrap();
    let raw = RewardConfig { normalization: false, ..RewardConfig::r0() };

    let policy = cfg.behavior_policy(&grid).unwrap();
    let n_log = if triplets > 0 { triplets } else { cfg.eval.triplets };
    let log = collect(&cfg.sim, &grid, &policy, n_log).unwrap();
    let schema = cfg.sim.feature_schema();
    let norm: bool = std::env::args().nth(7).map(|v| v == "1").unwrap_or(false);
    let tc = TrainConfig { step_size: lr, lr_decay: decay, epochs, batch_size: batch, reward: RewardConfig { normalization: norm, ..RewardConfig::r0() }, ..cfg.train_config() };
    let t0 = std::time::Instant::now();
    let (net, _) = train(&log, &grid, &schema, &cfg.arch(), &tc).unwrap();
    println!("train_secs={:.1}", t0.elapsed().as_secs_f64());

    let mut fresh = cfg.sim.clone();
    fresh.seed = cfg.seed.wrapping_add(0x9e3779b97f4a7c15);
    let n_eval = cfg.eval.eval_requests;
    let (_, policy_mean) = simulate_policy(&net, &fresh, &grid, n_eval, &raw).unwrap();
    let (_, uniform_mean) = simulate_uniform_policy(&fresh, &grid, n_eval, &raw).unwrap();
    let oracle: Vec<_> = (0..cfg.sim.segments.len())
        .map(|s| oracle_best_action(&fresh, &grid, s, &raw, 64).unwrap().0)
        .collect();
    let mut oracle_mean = 0.0;
    for rid in 0..n_eval {
        let (_, ads, seg) = generate_request(&fresh, rid);
        oracle_mean += expected_reward(&ads, &grid.decode(&oracle[seg]).unwrap(), &raw);
    }
    oracle_mean /= n_eval as f64;

    for s in 0..cfg.sim.segments.len() {
        let mut st = Vec::new();
        let mut adsv = Vec::new();
        for rep in 0..500u64 {
            let mut rng = drlput::rng::stream(fresh.seed, rep, "segprobe");
            let (state, ads) = drlput::simenv::sample_request_for_segment(&fresh, s, &mut rng);
            st.push(state);
            adsv.push(ads);
        }
        let acts = greedy_actions(&net, &st).unwrap();
        let mut wsum = 0.0;
        let mut rsum = 0.0;
        for (a, ads) in acts.iter().zip(&adsv) {
            let action = grid.action_from_flat(*a).unwrap();
            let p = grid.decode(&action).unwrap();
            wsum += p.weights["w_click"];
            rsum += expected_reward(ads, &p, &raw);
        }
        let (oa, ov) = oracle_best_action(&fresh, &grid, s, &raw, 192).unwrap();
        let op = grid.decode(&oa).unwrap();
        println!(
            "seg={} trained_w={:.3} trained_r={:.4} oracle_w={:.3} oracle_r={:.4} seg_ratio={:.3}",
            cfg.sim.segments[s].name,
            wsum / 500.0,
            rsum / 500.0,
            op.weights["w_click"],
            ov,
            rsum / 500.0 / ov
        );
    }
    let states: Vec<RequestState> = (0..4000).map(|rid| generate_request(&fresh, rid).0).collect();
    let acts = greedy_actions(&net, &states).unwrap();
    let div = diversity(&acts);
    let rep = bucket_report(&net, &states, &grid, BucketKey::Ctr, 4).unwrap();
    let w: Vec<f64> = rep.buckets.iter().map(|b| b.mean_w_click).collect();
    for (i, b) in rep.buckets.iter().enumerate() {
        println!("bucket={i} w_click={:.3} w_conv={:.3} reserve={:.3}", b.mean_w_click, b.mean_w_conversion, b.mean_reserve);
    }
    for (s, a) in oracle.iter().enumerate() {
        let p = grid.decode(a).unwrap();
        println!("oracle seg={s} w={:?} reserve={:.3}", p.weights, p.reserve);
    }
    println!(
        "lr={lr} epochs={epochs} batch={batch} policy={policy_mean:.4} oracle={oracle_mean:.4} uniform={uniform_mean:.4} ratio={:.3} vs_unif={:.3} diversity={div:.3} w_click_buckets={w:?}",
        policy_mean / oracle_mean, policy_mean / uniform_mean
    );
}
