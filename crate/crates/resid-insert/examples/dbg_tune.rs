use resid_insert::harness::{run_ablation, train_policy, ExperimentConfig};

fn main() {
    let mut cfg = ExperimentConfig::default();
    if let Ok(v) = std::env::var("TUNE_EPISODES") {
        cfg.train_episodes = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("TUNE_TRIALS") {
        cfg.trials = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("TUNE_DEPTH") {
        let mut g = cfg.geometry();
        g.depth = v.parse().unwrap();
        cfg.geometry = Some(g);
    }
    if let Ok(v) = std::env::var("TUNE_LAMBDA") {
        cfg.agent.lambda_scale = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("TUNE_PX") {
        cfg.vision.detail_pixel_sigma = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("TUNE_SEED") {
        cfg.seed = v.parse().unwrap();
    }
    let t0 = std::time::Instant::now();
    let report = train_policy(&cfg);
    println!(
        "train: {} episodes, {} successes, {:.1}s",
        cfg.train_episodes,
        report.success_count,
        t0.elapsed().as_secs_f64()
    );
    // reward curve summary over windows
    let w = 50.min(report.episode_rewards.len());
    if w > 0 {
        let first: f64 = report.episode_rewards.iter().take(w).sum::<f64>() / w as f64;
        let last: f64 =
            report.episode_rewards.iter().rev().take(w).sum::<f64>() / w as f64;
        println!("reward window: first {first:.2} -> last {last:.2}");
    }
    let t1 = std::time::Instant::now();
    let table = run_ablation(&cfg, &report.qtable);
    println!("ablation ({:.1}s):", t1.elapsed().as_secs_f64());
    print!("{}", table.render_text());
}
