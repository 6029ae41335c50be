//! Scratch: per-(segment, action) empirical mean reward from a collected log —
//! the information ceiling for any trainer. Prints each segment's empirical
//! argmax action and its w_click, plus top-5 actions by empirical mean.
use drlput::config::{preset, RunConfig};
use drlput::reward::RewardConfig;
use drlput::simenv::collect;
use drlput::train::batch_rewards;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args[1].parse().unwrap();
    let triplets: u64 = args[2].parse().unwrap();

    let mut cfg = RunConfig::from_toml(preset("desk").unwrap()).unwrap();
    cfg.seed = seed;
    cfg.sim.seed = seed;
    let grid = cfg.grid().unwrap();
    let policy = cfg.behavior_policy(&grid).unwrap();
    let log = collect(&cfg.sim, &grid, &policy, triplets).unwrap();
    let refs: Vec<&_> = log.iter().collect();
    let rewards = batch_rewards(&refs, &RewardConfig { normalization: false, ..RewardConfig::r0() }).unwrap();

    let n_seg = cfg.sim.segments.len();
    let n_act = grid.num_actions();
    let mut sum = vec![vec![0.0f64; n_act]; n_seg];
    let mut cnt = vec![vec![0u32; n_act]; n_seg];
    for (t, r) in log.iter().zip(&rewards) {
        let s = t.cat[0];
        sum[s][t.a] += r;
        cnt[s][t.a] += 1;
    }
    for s in 0..n_seg {
        let mut means: Vec<(usize, f64)> = (0..n_act)
            .filter(|&a| cnt[s][a] > 0)
            .map(|a| (a, sum[s][a] / cnt[s][a] as f64))
            .collect();
        means.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap());
        let top: Vec<String> = means
            .iter()
            .take(5)
            .map(|(a, m)| {
                let p = grid.decode(&grid.action_from_flat(*a).unwrap()).unwrap();
                format!("w={:.3}/r={:.3}", p.weights["w_click"], m)
            })
            .collect();
        println!("seed={seed} seg={s} n_mean={:.1} top5=[{}]", triplets as f64 / (n_seg * n_act) as f64, top.join(", "));
    }
}
