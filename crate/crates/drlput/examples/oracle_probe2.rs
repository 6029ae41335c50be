use drlput::config::{preset, RunConfig};
use drlput::reward::RewardConfig;
use drlput::rng::stream;
use drlput::simenv::{expected_reward, sample_request_for_segment};

// For each segment, enumerate every grid action over a batch of requests and
// report the w_click centroid among near-optimal actions. This predicts where
// a trained policy's greedy w_click lands better than a pinned sweep does.
fn main() {
    let mut cfg = RunConfig::from_toml(preset("desk").unwrap()).unwrap();
    if let Some(m) = std::env::args().nth(1) {
        cfg.values_per_group = m.parse().unwrap();
    }
    let grid = cfg.grid().unwrap();
    let raw = RewardConfig { normalization: false, ..RewardConfig::r0() };
    let n_req = 192u64;
    let n_seg = cfg.sim.segments.len();
    let mut seg_means: Vec<Vec<f64>> = Vec::new();
    for s in 0..n_seg {
        let requests: Vec<_> = (0..n_req)
            .map(|rep| {
                let mut rng = stream(cfg.sim.seed, rep, "oracle");
                sample_request_for_segment(&cfg.sim, s, &mut rng).1
            })
            .collect();
        let n_actions = grid.num_actions();
        let mut means = vec![0.0f64; n_actions];
        for (flat, mean) in means.iter_mut().enumerate() {
            let action = grid.action_from_flat(flat).unwrap();
            let params = grid.decode(&action).unwrap();
            for ads in &requests {
                *mean += expected_reward(ads, &params, &raw);
            }
            *mean /= n_req as f64;
        }
        let best = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let best_idx = means.iter().position(|&v| v == best).unwrap();
        let bp = grid.decode(&grid.action_from_flat(best_idx).unwrap()).unwrap();
        println!(
            "segment={} best={:.4} at w={:.3} wc={:.3} b={:.3}",
            cfg.sim.segments[s].name, best, bp.weights["w_click"], bp.weights["w_conversion"], bp.reserve
        );
        for eps in [0.01, 0.03, 0.05] {
            let cut = best * (1.0 - eps);
            let mut wsum = 0.0;
            let mut wmin = f64::INFINITY;
            let mut wmax = f64::NEG_INFINITY;
            let mut count = 0usize;
            for (flat, &v) in means.iter().enumerate() {
                if v >= cut {
                    let p = grid.decode(&grid.action_from_flat(flat).unwrap()).unwrap();
                    let w = p.weights["w_click"];
                    wsum += w;
                    wmin = wmin.min(w);
                    wmax = wmax.max(w);
                    count += 1;
                }
            }
            println!(
                "  eps={eps:.2} count={count} w_centroid={:.3} w_range=[{:.3}, {:.3}]",
                wsum / count as f64,
                wmin,
                wmax
            );
        }
        seg_means.push(means);
    }
    // Best single action across the whole population, and what it costs each
    // segment relative to that segment's own oracle.
    let n_actions = grid.num_actions();
    let global_best = (0..n_actions)
        .max_by(|&a, &b| {
            let va: f64 = seg_means.iter().map(|m| m[a]).sum();
            let vb: f64 = seg_means.iter().map(|m| m[b]).sum();
            va.partial_cmp(&vb).unwrap()
        })
        .unwrap();
    let gp = grid.decode(&grid.action_from_flat(global_best).unwrap()).unwrap();
    let pop_ratio: f64 = seg_means.iter().map(|m| m[global_best]).sum::<f64>()
        / seg_means.iter().map(|m| m.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).sum::<f64>();
    print!(
        "global best action w={:.3} wc={:.3} b={:.3} pop_ratio={pop_ratio:.3} per-seg:",
        gp.weights["w_click"], gp.weights["w_conversion"], gp.reserve
    );
    for m in &seg_means {
        let best = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        print!(" {:.3}", m[global_best] / best);
    }
    println!();
}
