use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use drlput::checkpoint::{self, TrainMeta};
use drlput::config::{preset, RunConfig};
use drlput::error::{Error, Result};
use drlput::eval::{
    ablation_run, bucket_report, gate, simulate_policy, write_bucket_csv, write_bucket_svg, BucketKey,
};
use drlput::features::RequestState;
use drlput::logio::{read_log, write_log};
use drlput::reward::{RewardConfig, RewardVariant};
use drlput::simenv::{collect, generate_request};
use drlput::train::train;

#[derive(Parser)]
#[command(name = "drlput", version, about = "Policy-gradient tuning of ad ranking hyperparameters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a preset run configuration to a file.
    GenConfig {
        /// Preset name: desk or paperlike.
        #[arg(long, default_value = "desk")]
        preset: String,
        /// Output TOML path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the simulator under the behavior policy and write a triplet log.
    Collect {
        #[arg(long)]
        config: PathBuf,
        /// Output JSON-lines log path.
        #[arg(long)]
        out: PathBuf,
        /// Override the configured triplet count.
        #[arg(long)]
        triplets: Option<u64>,
        /// Override the configured behavior policy: uniform or gaussian.
        #[arg(long)]
        policy: Option<String>,
    },
    /// Train a policy from a triplet log and write a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        log: PathBuf,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Gate a checkpoint against a log, optionally measuring it in the simulator.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also serve the greedy policy on fresh simulated requests.
        #[arg(long)]
        simulate: bool,
        /// Optional JSON report output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Average decoded hyperparameters across a population bucketed by a
    /// historical feature, writing CSV and SVG artifacts.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output directory for buckets_<key>.csv / .svg.
        #[arg(long)]
        out_dir: PathBuf,
        /// Bucket key override: ctr, cvr or cpm.
        #[arg(long)]
        key: Option<String>,
        /// Population size drawn from the simulator.
        #[arg(long, default_value_t = 10000)]
        population: u64,
    },
    /// Train one policy per reward variant from the same log and compare
    /// realized metrics in the simulator.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        log: PathBuf,
        /// Comma-separated reward variants, e.g. r0,r1,r2.
        #[arg(long, default_value = "r0,r1,r2")]
        variants: String,
        /// Optional JSON output path for the comparison table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn fresh_eval_config(cfg: &RunConfig) -> drlput::SimConfig {
    // Served-traffic measurements use requests the training log never saw.
    let mut sim = cfg.sim.clone();
    sim.seed = cfg.seed.wrapping_add(0x9e3779b97f4a7c15);
    sim
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenConfig { preset: name, out } => {
            let text = preset(&name)?;
            RunConfig::from_toml(text)?;
            std::fs::write(&out, text).map_err(|e| Error::Io(format!("write {}: {e}", out.display())))?;
            println!("command=gen-config preset={name} out={}", out.display());
        }
        Command::Collect { config, out, triplets, policy } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(kind) = policy {
                cfg.behavior.kind = kind;
            }
            let grid = cfg.grid()?;
            let policy = cfg.behavior_policy(&grid)?;
            let count = triplets.unwrap_or(cfg.eval.triplets);
            let started = Instant::now();
            let log = collect(&cfg.sim, &grid, &policy, count)?;
            write_log(&out, &log)?;
            println!(
                "command=collect triplets={} out={} wall_secs={:.3}",
                log.len(),
                out.display(),
                started.elapsed().as_secs_f64()
            );
        }
        Command::Train { config, log, out } => {
            let cfg = RunConfig::load(&config)?;
            let grid = cfg.grid()?;
            let schema = cfg.sim.feature_schema();
            let triplets = read_log(&log)?;
            let started = Instant::now();
            let (net, report) = train(&triplets, &grid, &schema, &cfg.arch(), &cfg.train_config())?;
            checkpoint::save(&net, TrainMeta { seed: cfg.seed, steps: report.total_steps }, &out)?;
            let last = report.steps.last();
            println!(
                "command=train steps={} final_loss={} final_mean_reward={} out={} wall_secs={:.3}",
                report.total_steps,
                last.map(|s| s.mean_loss).unwrap_or(f64::NAN),
                last.map(|s| s.mean_reward).unwrap_or(f64::NAN),
                out.display(),
                started.elapsed().as_secs_f64()
            );
        }
        Command::Eval { config, log, checkpoint: ckpt, simulate, out } => {
            let cfg = RunConfig::load(&config)?;
            let grid = cfg.grid()?;
            let reward = cfg.reward_config()?;
            let triplets = read_log(&log)?;
            let (net, _meta) = checkpoint::load(&ckpt)?;
            let mut report = gate(&net, &triplets, cfg.eval.diversity_threshold, &reward)?;
            let mut sim_line = String::new();
            if simulate {
                let sim = fresh_eval_config(&cfg);
                let (metrics, mean_r) = simulate_policy(&net, &sim, &grid, cfg.eval.eval_requests, &reward)?;
                sim_line = format!(
                    " sim_revenue={:.6} sim_ctr={:.6} sim_ctr30={:.6} sim_cvr={:.6} sim_mean_reward={:.6}",
                    metrics.revenue, metrics.ctr, metrics.ctr30, metrics.cvr, mean_r
                );
                report.oracle_ratio = None;
            }
            if let Some(path) = out {
                let body = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
                std::fs::write(&path, body).map_err(|e| Error::Io(format!("write {}: {e}", path.display())))?;
            }
            println!(
                "command=eval verdict={} diversity={:.6} relative_gain={:.6} threshold={}{sim_line}",
                if report.verdict { "pass" } else { "fail" },
                report.diversity,
                report.relative_gain,
                report.diversity_threshold
            );
        }
        Command::Report { config, checkpoint: ckpt, out_dir, key, population } => {
            let cfg = RunConfig::load(&config)?;
            let grid = cfg.grid()?;
            let (net, _meta) = checkpoint::load(&ckpt)?;
            let key: BucketKey = key.unwrap_or_else(|| cfg.eval.bucket_key.clone()).parse()?;
            let sim = fresh_eval_config(&cfg);
            let states: Vec<RequestState> = (0..population).map(|rid| generate_request(&sim, rid).0).collect();
            let report = bucket_report(&net, &states, &grid, key, cfg.eval.buckets)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::Io(format!("mkdir {}: {e}", out_dir.display())))?;
            let csv = out_dir.join(format!("buckets_{}.csv", key.name()));
            let svg = out_dir.join(format!("buckets_{}.svg", key.name()));
            write_bucket_csv(&report, &csv)?;
            write_bucket_svg(&report, &svg)?;
            let means: Vec<String> = report.buckets.iter().map(|b| format!("{:.4}", b.mean_w_click)).collect();
            println!(
                "command=report key={} buckets={} mean_w_click=[{}] csv={} svg={}",
                key.name(),
                report.buckets.len(),
                means.join(","),
                csv.display(),
                svg.display()
            );
        }
        Command::Ablate { config, log, variants, out } => {
            let cfg = RunConfig::load(&config)?;
            let grid = cfg.grid()?;
            let schema = cfg.sim.feature_schema();
            let triplets = read_log(&log)?;
            let parsed: Vec<RewardConfig> = variants
                .split(',')
                .map(|v| v.parse::<RewardVariant>().map(RewardConfig::preset))
                .collect::<Result<_>>()?;
            let sim = fresh_eval_config(&cfg);
            let rows = ablation_run(
                &parsed,
                &triplets,
                &grid,
                &schema,
                &cfg.arch(),
                &cfg.train_config(),
                &sim,
                cfg.eval.eval_requests,
            )?;
            let mut serializable = Vec::new();
            for (variant, outcome) in &rows {
                match outcome {
                    Ok(row) => {
                        println!(
                            "command=ablate variant={variant} revenue={:.6} ctr={:.6} ctr30={:.6} cvr={:.6} mean_reward={:.6}",
                            row.metrics.revenue, row.metrics.ctr, row.metrics.ctr30, row.metrics.cvr,
                            row.mean_expected_reward
                        );
                        serializable.push(serde_json::json!({
                            "variant": variant,
                            "metrics": row.metrics,
                            "mean_expected_reward": row.mean_expected_reward,
                        }));
                    }
                    Err(e) => {
                        println!("command=ablate variant={variant} error={e}");
                        serializable.push(serde_json::json!({ "variant": variant, "error": e.to_string() }));
                    }
                }
            }
            if let Some(path) = out {
                let body = serde_json::to_string_pretty(&serializable).map_err(|e| Error::Io(e.to_string()))?;
                std::fs::write(&path, body).map_err(|e| Error::Io(format!("write {}: {e}", path.display())))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
