//! Acceptance suite: one test per release criterion, each printing a single
//! `criterion=<n> status=<pass|fail>` line. Run with `--nocapture` to see the
//! lines; every assertion is also a hard test failure.

use std::time::Instant;

use drlput::action::ActionGrid;
use drlput::checkpoint::{self, TrainMeta};
use drlput::config::{preset, RunConfig};
use drlput::error::Error;
use drlput::eval::{
    diversity, gate, relative_gain, simulate_policy, simulate_uniform_policy,
};
use drlput::features::{CategoricalSpec, FeatureSchema, RequestState};
use drlput::logio::{check_schema, read_log, write_log};
use drlput::net::{ArchConfig, Mode, PolicyNet};
use drlput::reward::{normalize_batch, RewardConfig};
use drlput::simenv::{collect, expected_reward, generate_request, oracle_best_action, BehaviorPolicy};
use drlput::train::{train, TrainConfig};

fn desk_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::from_toml(preset("desk").unwrap()).unwrap();
    cfg.seed = seed;
    cfg.sim.seed = seed;
    cfg
}

fn fresh_sim(cfg: &RunConfig) -> drlput::SimConfig {
    let mut sim = cfg.sim.clone();
    sim.seed = cfg.seed.wrapping_add(0x9e3779b97f4a7c15);
    sim
}

fn train_desk(cfg: &RunConfig, reward: RewardConfig) -> (PolicyNet<f32>, Vec<drlput::LoggedTriplet>) {
    let grid = cfg.grid().unwrap();
    let policy = cfg.behavior_policy(&grid).unwrap();
    let log = collect(&cfg.sim, &grid, &policy, cfg.eval.triplets).unwrap();
    let schema = cfg.sim.feature_schema();
    let tc = TrainConfig { reward, ..cfg.train_config() };
    let (net, _) = train(&log, &grid, &schema, &cfg.arch(), &tc).unwrap();
    (net, log)
}

fn report(criterion: u32, pass: bool) {
    println!("criterion={criterion} status={}", if pass { "pass" } else { "fail" });
    assert!(pass, "criterion {criterion} failed");
}

#[test]
fn criterion_1_gradient_correctness() {
    let started = Instant::now();
    let schema = FeatureSchema {
        categorical: vec![
            CategoricalSpec { name: "a".into(), cardinality: 4 },
            CategoricalSpec { name: "b".into(), cardinality: 4 },
        ],
        numerical: vec![],
        dense: vec![],
    };
    let grid = ActionGrid::default_grid(3);
    assert_eq!(grid.num_actions(), 27);
    let arch = ArchConfig { embed_dim: 4, hidden: vec![16] };
    let mut net32 = PolicyNet::<f32>::init(schema, grid, arch, 11).unwrap();
    net32.randomize_output_layer(13);
    let net = net32.promote();

    let states: Vec<RequestState> = (0..8)
        .map(|i| RequestState { categorical: vec![i % 4, (i / 2) % 4], numerical: vec![], dense: vec![] })
        .collect();
    let actions: Vec<usize> = (0..8).map(|i| (i * 5) % 27).collect();
    let rewards: Vec<f64> = (0..8).map(|i| 0.25 + 0.1 * i as f64).collect();

    let cache = net.forward_cache(&states, Mode::Train).unwrap();
    let analytic = net.backward(&cache, &states, &actions, &rewards).unwrap();

    let eps = 1e-3;
    let n = net.num_params();
    let mut rng = drlput::rng::stream(99, 0, "fdcheck");
    let mut max_rel = 0.0f64;
    let mut checked = 0;
    while checked < 120 {
        let i = rand::Rng::gen_range(&mut rng, 0..n);
        let mut plus = net.clone();
        plus.set_param(i, net.get_param(i) + eps);
        let mut minus = net.clone();
        minus.set_param(i, net.get_param(i) - eps);
        let lp = plus.loss(&plus.forward_cache(&states, Mode::Train).unwrap(), &actions, &rewards);
        let lm = minus.loss(&minus.forward_cache(&states, Mode::Train).unwrap(), &actions, &rewards);
        let fd = (lp - lm) / (2.0 * eps);
        let denom = analytic[i].abs().max(fd.abs()).max(1e-8);
        max_rel = max_rel.max((analytic[i] - fd).abs() / denom);
        checked += 1;
    }
    let elapsed = started.elapsed().as_secs_f64();
    println!("criterion=1 max_rel_err={max_rel:.3e} coords={checked} wall_secs={elapsed:.2}");
    report(1, max_rel <= 1e-3 && elapsed < 10.0);
}

#[test]
fn criterion_2_oracle_policy_quality() {
    let started = Instant::now();
    let cfg = desk_config(7);
    let grid = cfg.grid().unwrap();
    let raw = RewardConfig { normalization: false, ..RewardConfig::r0() };
    let (net, _log) = train_desk(&cfg, cfg.reward_config().unwrap());

    let fresh = fresh_sim(&cfg);
    let n_eval = cfg.eval.eval_requests;
    let (_, policy_mean) = simulate_policy(&net, &fresh, &grid, n_eval, &raw).unwrap();
    let (_, uniform_mean) = simulate_uniform_policy(&fresh, &grid, n_eval, &raw).unwrap();

    // Per-segment brute-force oracle, then its mean over the same fresh traffic.
    let oracle: Vec<_> = (0..cfg.sim.segments.len())
        .map(|s| oracle_best_action(&fresh, &grid, s, &raw, 64).unwrap().0)
        .collect();
    let mut oracle_mean = 0.0;
    for rid in 0..n_eval {
        let (_, ads, seg) = generate_request(&fresh, rid);
        let params = grid.decode(&oracle[seg]).unwrap();
        oracle_mean += expected_reward(&ads, &params, &raw);
    }
    oracle_mean /= n_eval as f64;

    let elapsed = started.elapsed().as_secs_f64();
    println!(
        "criterion=2 policy_mean={policy_mean:.4} oracle_mean={oracle_mean:.4} uniform_mean={uniform_mean:.4} wall_secs={elapsed:.1}"
    );
    report(
        2,
        policy_mean >= 0.95 * oracle_mean && policy_mean >= 1.20 * uniform_mean && elapsed < 600.0,
    );
}

#[test]
fn criterion_3_offline_gates() {
    let cfg = desk_config(7);
    let grid = cfg.grid().unwrap();
    let reward = cfg.reward_config().unwrap();
    let (net, log) = train_desk(&cfg, reward);

    let trained = gate(&net, &log, cfg.eval.diversity_threshold, &reward).unwrap();

    // Collapsed policy: a huge bias on one output unit.
    let schema = cfg.sim.feature_schema();
    let mut collapsed = PolicyNet::<f32>::init(schema.clone(), grid.clone(), cfg.arch(), cfg.seed).unwrap();
    let spec = collapsed.manifest.iter().find(|t| t.name.contains("_bias") && t.shape == vec![grid.num_actions()]).unwrap().clone();
    collapsed.set_param(spec.offset + 123, 1000.0);
    let collapsed_report = gate(&collapsed, &log, cfg.eval.diversity_threshold, &reward).unwrap();

    // Untrained near-uniform policy.
    let untrained = PolicyNet::<f32>::init(schema, grid, cfg.arch(), cfg.seed).unwrap();
    let untrained_rg = relative_gain(&log, &untrained, &reward).unwrap();

    println!(
        "criterion=3 trained_diversity={:.4} trained_rg={:.6} collapsed_diversity={:.4} untrained_rg={:.6}",
        trained.diversity, trained.relative_gain, collapsed_report.diversity, untrained_rg
    );
    report(
        3,
        trained.verdict
            && collapsed_report.diversity == 0.0
            && !collapsed_report.verdict
            && untrained_rg.abs() <= 0.01 * trained.relative_gain.abs(),
    );
}

#[test]
fn criterion_4_metric_identities() {
    let constant_div = diversity(&[5; 1000]);
    let distinct: Vec<usize> = (0..250).collect();
    let distinct_div = diversity(&distinct);

    // pi == pi_B: a uniform behavior log scored by an exactly uniform net.
    let cfg = desk_config(3);
    let grid = cfg.grid().unwrap();
    let log = collect(&cfg.sim, &grid, &BehaviorPolicy::Uniform, 128).unwrap();
    let schema = cfg.sim.feature_schema();
    let mut net = PolicyNet::<f32>::init(schema, grid.clone(), ArchConfig { embed_dim: 4, hidden: vec![8] }, 1).unwrap();
    let spec = net
        .manifest
        .iter()
        .find(|t| t.name == "layer1_weight")
        .unwrap()
        .clone();
    for i in spec.offset..spec.offset + spec.len() {
        net.set_param(i, 0.0);
    }
    let bias = net.manifest.iter().find(|t| t.name == "layer1_bias").unwrap().clone();
    for i in bias.offset..bias.offset + bias.len() {
        net.set_param(i, 0.0);
    }
    let rg = relative_gain(&log, &net, &RewardConfig::r0()).unwrap();

    let norm = normalize_batch(&[0.1, 0.3, 0.5]);
    let flat = normalize_batch(&[0.7, 0.7, 0.7]);

    println!(
        "criterion=4 const_div={constant_div} distinct_div={distinct_div} matched_rg={rg} norm={norm:?} flat={flat:?}"
    );
    report(
        4,
        constant_div == 0.0
            && distinct_div == 1.0 - 1.0 / 250.0
            && rg == 0.0
            && norm == vec![0.0, 0.5, 1.0]
            && flat == vec![0.0, 0.0, 0.0],
    );
}

#[test]
fn criterion_5_ablation_directionality() {
    let raw = RewardConfig { normalization: false, ..RewardConfig::r0() };
    let mut pass = true;
    for seed in [7u64, 8, 9] {
        let cfg = desk_config(seed);
        let grid = cfg.grid().unwrap();
        let fresh = fresh_sim(&cfg);
        let n_eval = cfg.eval.eval_requests;
        let mut measured = Vec::new();
        for reward in [RewardConfig::r0(), RewardConfig::r1(), RewardConfig::r2()] {
            let (net, _) = train_desk(&cfg, RewardConfig { normalization: false, ..reward });
            let (m, _) = simulate_policy(&net, &fresh, &grid, n_eval, &raw).unwrap();
            measured.push(m);
        }
        let (r0, r1, r2) = (measured[0], measured[1], measured[2]);
        let rev_up = r1.revenue >= 1.01 * r0.revenue;
        let ctr_down = r1.ctr <= 0.99 * r0.ctr;
        let ctr_up = r2.ctr >= 1.01 * r0.ctr;
        let rev_down = r2.revenue <= 0.99 * r0.revenue;
        println!(
            "criterion=5 seed={seed} r0_rev={:.1} r1_rev={:.1} r2_rev={:.1} r0_ctr={:.4} r1_ctr={:.4} r2_ctr={:.4}",
            r0.revenue, r1.revenue, r2.revenue, r0.ctr, r1.ctr, r2.ctr
        );
        pass &= rev_up && ctr_down && ctr_up && rev_down;
    }
    report(5, pass);
}

#[test]
fn criterion_6_personalization_by_hist_ctr() {
    let mut pass = true;
    for seed in [7u64, 8, 9] {
        let cfg = desk_config(seed);
        let grid = cfg.grid().unwrap();
        let (net, _) = train_desk(&cfg, cfg.reward_config().unwrap());
        let fresh = fresh_sim(&cfg);
        let states: Vec<RequestState> = (0..4000).map(|rid| generate_request(&fresh, rid).0).collect();
        let rep = drlput::eval::bucket_report(&net, &states, &grid, drlput::eval::BucketKey::Ctr, 4).unwrap();
        let w: Vec<f64> = rep.buckets.iter().map(|b| b.mean_w_click).collect();
        let monotone = w.windows(2).all(|p| p[1] >= p[0] - 1e-12);
        let spread = w[3] >= 1.1 * w[0];
        println!("criterion=6 seed={seed} w_click_by_bucket={w:?}");
        pass &= monotone && spread;
    }
    report(6, pass);
}

#[test]
fn criterion_7_end_to_end_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| -> (Vec<u8>, Vec<u8>, Vec<u8>) {
        let cfg = desk_config(21);
        let grid = cfg.grid().unwrap();
        let policy = cfg.behavior_policy(&grid).unwrap();
        let log = collect(&cfg.sim, &grid, &policy, 2000).unwrap();
        let log_path = dir.path().join(format!("{tag}.jsonl"));
        write_log(&log_path, &log).unwrap();

        let schema = cfg.sim.feature_schema();
        let tc = TrainConfig { epochs: 1, ..cfg.train_config() };
        let (net, rep) = train(&log, &grid, &schema, &cfg.arch(), &tc).unwrap();
        let ckpt_path = dir.path().join(format!("{tag}.dput"));
        checkpoint::save(&net, TrainMeta { seed: cfg.seed, steps: rep.total_steps }, &ckpt_path).unwrap();

        let reward = cfg.reward_config().unwrap();
        let report = gate(&net, &log, cfg.eval.diversity_threshold, &reward).unwrap();
        let report_path = dir.path().join(format!("{tag}.json"));
        std::fs::write(&report_path, serde_json::to_string_pretty(&report).unwrap()).unwrap();

        (
            std::fs::read(&log_path).unwrap(),
            std::fs::read(&ckpt_path).unwrap(),
            std::fs::read(&report_path).unwrap(),
        )
    };
    let a = run("a");
    let b = run("b");
    let pass = a == b;
    println!("criterion=7 log_bytes={} ckpt_bytes={} report_bytes={}", a.0.len(), a.1.len(), a.2.len());
    report(7, pass);
}

#[test]
fn criterion_8_format_conformance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(5);
    let grid = cfg.grid().unwrap();
    let schema = cfg.sim.feature_schema();
    let arch = ArchConfig { embed_dim: 4, hidden: vec![16] };
    let net = PolicyNet::<f32>::init(schema.clone(), grid.clone(), arch, 5).unwrap();

    // Round trip reproduces eval-mode forwards bit for bit.
    let path = dir.path().join("c8.dput");
    checkpoint::save(&net, TrainMeta::default(), &path).unwrap();
    let (back, _) = checkpoint::load(&path).unwrap();
    let states: Vec<RequestState> = (0..16).map(|rid| generate_request(&cfg.sim, rid).0).collect();
    let before = net.forward(&states, Mode::Eval).unwrap();
    let after = back.forward(&states, Mode::Eval).unwrap();
    let bitwise = before
        .iter()
        .zip(&after)
        .all(|(x, y)| x.iter().zip(y).all(|(a, b)| a.to_bits() == b.to_bits()));

    // Corrupted checkpoint: flip a schema-hash byte inside the header.
    let mut bytes = std::fs::read(&path).unwrap();
    let needle = b"schema_hash";
    let pos = bytes.windows(needle.len()).position(|w| w == needle).unwrap();
    bytes[pos + needle.len() + 4] ^= 0x01;
    let bad = dir.path().join("c8corrupt.dput");
    std::fs::write(&bad, &bytes).unwrap();
    let corrupt_err = checkpoint::load(&bad).unwrap_err();
    let corrupt_ok = matches!(corrupt_err, Error::Schema(_));

    // Truncated blob is also a schema error.
    let trunc = dir.path().join("c8trunc.dput");
    let full = std::fs::read(&path).unwrap();
    std::fs::write(&trunc, &full[..full.len() - 8]).unwrap();
    let trunc_ok = matches!(checkpoint::load(&trunc).unwrap_err(), Error::Schema(_));

    // Schema-mismatched log rejected as a schema error.
    let log = collect(&cfg.sim, &grid, &BehaviorPolicy::Uniform, 8).unwrap();
    let mut other = schema.clone();
    other.numerical.pop();
    let mismatch_ok = matches!(check_schema(&log, &other).unwrap_err(), Error::Schema(_));

    // And unreadable log bytes too.
    let bad_log = dir.path().join("c8.jsonl");
    std::fs::write(&bad_log, "not json\n").unwrap();
    let parse_ok = matches!(read_log(&bad_log).unwrap_err(), Error::Schema(_));

    println!(
        "criterion=8 bitwise={bitwise} corrupt_ok={corrupt_ok} trunc_ok={trunc_ok} mismatch_ok={mismatch_ok} parse_ok={parse_ok}"
    );
    report(8, bitwise && corrupt_ok && trunc_ok && mismatch_ok && parse_ok);
}
