//! Command-line front end.

use super::config::{Condition, ConfigError, ExperimentConfig};
use super::experiments::{run_ablation, run_comparison, run_demo, run_eval, train_policy};
use super::results::{save_log, save_results, save_training_curve};
use crate::agent::QTable;
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "resid-insert",
    about = "Tight-clearance insertion simulator: training, evaluation, and experiment tables",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Config file path, or `default` for the built-in configuration.
    #[arg(long, default_value = "default")]
    config: String,
    /// Master seed (overrides RESID_INSERT_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Disable all observation noise.
    #[arg(long)]
    no_noise: bool,
    /// Run trials serially instead of in parallel.
    #[arg(long)]
    serial: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy table and write it to the output directory.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of training episodes.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Evaluate one condition and report its success rate.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Condition to evaluate (e.g. full, no_vision, taught_spiral).
        #[arg(long, default_value = "full")]
        baseline: String,
        /// Number of trials.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run the five-condition policy evaluation table.
    Ablation {
        #[command(flatten)]
        common: CommonArgs,
        /// Trials per condition.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run the classical-baseline comparison table (fixed and moved board).
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Trials per condition.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run one verbose episode.
    Demo {
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// Seed priority: --seed flag, then RESID_INSERT_SEED, then the config file.
fn effective_seed(flag: Option<u64>, file_seed: u64) -> u64 {
    if let Some(s) = flag {
        return s;
    }
    if let Ok(v) = std::env::var("RESID_INSERT_SEED") {
        if let Ok(s) = v.trim().parse() {
            return s;
        }
    }
    file_seed
}

fn load_config(common: &CommonArgs, trials: Option<usize>) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    cfg.seed = effective_seed(common.seed, cfg.seed);
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if common.no_noise {
        cfg.compliance.noise_enabled = false;
        cfg.vision.detail_pixel_sigma = 0.0;
        cfg.vision.rough_pixel_sigma = 0.0;
        cfg.vision.depth_sigma = 0.0;
        cfg.vision.sys_px_bias_per_m = 0.0;
        cfg.agent.exec_noise_sigma = 0.0;
    }
    if common.serial {
        cfg.parallel = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Load the table from `out/qtable.txt`, or train one and persist it.
fn ensure_qtable(cfg: &ExperimentConfig, out: &Path) -> Result<QTable, String> {
    let path = out.join("qtable.txt");
    if path.exists() {
        return QTable::load(&path).map_err(|e| e.to_string());
    }
    eprintln!(
        "no table at {}; training {} episodes first",
        path.display(),
        cfg.train_episodes
    );
    let report = train_policy(cfg);
    std::fs::create_dir_all(out).map_err(|e| format!("create {}: {e}", out.display()))?;
    report.qtable.save(&path).map_err(|e| e.to_string())?;
    save_training_curve(&report.episode_rewards, &out.join("training_curve.csv"))
        .map_err(|e| e.to_string())?;
    Ok(report.qtable)
}

/// Entry point; returns the process exit code (0 ok, 2 usage/config error).
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // Help/version are normal exits; anything else is a usage error.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };

    let run = || -> Result<(), (i32, String)> {
        match cli.command {
            Command::Train { common, episodes } => {
                let mut cfg =
                    load_config(&common, None).map_err(|e| (2, e.to_string()))?;
                if let Some(eps) = episodes {
                    cfg.train_episodes = eps;
                    cfg.validate().map_err(|e| (2, e.to_string()))?;
                }
                let report = train_policy(&cfg);
                std::fs::create_dir_all(&common.out)
                    .map_err(|e| (1, format!("create {}: {e}", common.out.display())))?;
                let path = common.out.join("qtable.txt");
                report.qtable.save(&path).map_err(|e| (1, e.to_string()))?;
                save_training_curve(
                    &report.episode_rewards,
                    &common.out.join("training_curve.csv"),
                )
                .map_err(|e| (1, e.to_string()))?;
                println!(
                    "trained {} episodes ({} successes); table written to {}",
                    cfg.train_episodes,
                    report.success_count,
                    path.display()
                );
                Ok(())
            }
            Command::Eval {
                common,
                baseline,
                trials,
            } => {
                let cfg = load_config(&common, trials).map_err(|e| (2, e.to_string()))?;
                let cond: Condition = baseline.parse().map_err(|e: String| (2, e))?;
                let table = ensure_qtable(&cfg, &common.out).map_err(|e| (1, e))?;
                let (results, logs) = run_eval(&cfg, &table, cond);
                save_results(&results, &common.out).map_err(|e| (1, e.to_string()))?;
                for (i, log) in logs.iter().enumerate() {
                    let path = common.out.join(format!("episodes/{i:03}.csv"));
                    save_log(log, &path).map_err(|e| (1, e.to_string()))?;
                }
                print!("{}", results.render_text());
                Ok(())
            }
            Command::Ablation { common, trials } => {
                let cfg = load_config(&common, trials).map_err(|e| (2, e.to_string()))?;
                let table = ensure_qtable(&cfg, &common.out).map_err(|e| (1, e))?;
                let results = run_ablation(&cfg, &table);
                save_results(&results, &common.out).map_err(|e| (1, e.to_string()))?;
                print!("{}", results.render_text());
                Ok(())
            }
            Command::Compare { common, trials } => {
                let mut cfg = load_config(&common, trials).map_err(|e| (2, e.to_string()))?;
                if trials.is_none() {
                    cfg.trials = 100;
                }
                let table = ensure_qtable(&cfg, &common.out).map_err(|e| (1, e))?;
                let results = run_comparison(&cfg, &table);
                save_results(&results, &common.out).map_err(|e| (1, e.to_string()))?;
                print!("{}", results.render_text());
                Ok(())
            }
            Command::Demo { common } => {
                let cfg = load_config(&common, None).map_err(|e| (2, e.to_string()))?;
                let table = ensure_qtable(&cfg, &common.out).map_err(|e| (1, e))?;
                let log = run_demo(&cfg, &table);
                println!("step state action belief probed reward   wrench (F / M)");
                for s in &log.steps {
                    println!(
                        "{:>4} {:>5} {:>6} {:>6} {:>6} {:>7.3}   F=({:+.2},{:+.2},{:+.2}) M=({:+.3},{:+.3},{:+.3})",
                        s.step,
                        s.state_index,
                        s.action_id,
                        s.belief,
                        s.probed,
                        s.reward,
                        s.wrench[0],
                        s.wrench[1],
                        s.wrench[2],
                        s.wrench[3],
                        s.wrench[4],
                        s.wrench[5],
                    );
                }
                println!("outcome: {:?} in {} steps", log.outcome, log.steps.len());
                save_log(&log, &common.out.join("episodes/demo.csv"))
                    .map_err(|e| (1, e.to_string()))?;
                Ok(())
            }
        }
    };

    match run() {
        Ok(()) => 0,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}
