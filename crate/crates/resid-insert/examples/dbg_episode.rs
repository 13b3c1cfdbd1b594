use nalgebra::Vector2;
use resid_insert::agent::{
    run_episode, EnvBundle, EpisodeOptions, EpisodeRngs, Mode, QTable, VisualSensor,
};
use resid_insert::harness::{build_trial_env, ExperimentConfig};
use resid_insert::math::Pose;
use resid_insert::rng::substream;
use resid_insert::sim::WorldState;

fn main() {
    let mut cfg = ExperimentConfig::default();
    let noise_free = std::env::var("NOISE_FREE").is_ok();
    if noise_free {
        cfg.vision.detail_pixel_sigma = 0.0;
        cfg.vision.rough_pixel_sigma = 0.0;
        cfg.vision.depth_sigma = 0.0;
        cfg.compliance.noise_enabled = false;
        cfg.agent.exec_noise_sigma = 0.0;
    }
    let env_parts = build_trial_env(&cfg, Vector2::zeros(), Vector2::zeros());
    let env = EnvBundle {
        geom: &env_parts.geom,
        params: &cfg.compliance,
        sensor: &env_parts.detail_rig,
        goal: env_parts.goal,
    };
    // Start at hover with a fixed 2.5 mm error along a diagonal.
    let err = (0.0025f64 / 2.0f64.sqrt(), 0.0025f64 / 2.0f64.sqrt());
    let start = Pose::from_translation(
        env_parts.hover_nominal.t.x + err.0,
        env_parts.hover_nominal.t.y + err.1,
        env_parts.hover_nominal.t.z,
    );
    println!("goal z={:+.4}mm hover z={:+.4}mm", env.goal.t.z * 1e3, start.t.z * 1e3);

    // Probe the visual reading once.
    let mut nrng = substream(1, "dbg", 0);
    let r = env_parts.detail_rig.measure(&start, &mut nrng);
    println!(
        "visual reading at start: ee t_err = ({:+.3}, {:+.3}, {:+.3}) mm",
        r.ee.t_err.x * 1e3,
        r.ee.t_err.y * 1e3,
        r.ee.t_err.z * 1e3
    );

    let mut table = QTable::zeros();
    let options = EpisodeOptions {
        alpha: cfg.agent.alpha,
        probe_enabled: true,
        random_on_unclear: false,
        max_steps: 40,
        epsilon: 0.0,
    };
    let mut rngs = EpisodeRngs {
        noise: substream(1, "noise", 0),
        policy: substream(1, "policy", 0),
    };
    let world = WorldState::at_pose(start, 1);
    let log = run_episode(&env, world, &mut table, &cfg.agent, &options, Mode::Eval, &mut rngs);
    for s in &log.steps {
        println!(
            "step {:>2} state={:>3} a={} bel={} probe={} r={:+.3} cmd=({:+.3},{:+.3},{:+.3})mm F=({:+.1},{:+.1},{:+.1}) M=({:+.2},{:+.2},{:+.2})",
            s.step, s.state_index, s.action_id, s.belief as u8, s.probed as u8, s.reward,
            s.command[0]*1e3, s.command[1]*1e3, s.command[2]*1e3,
            s.wrench[0], s.wrench[1], s.wrench[2], s.wrench[3], s.wrench[4], s.wrench[5],
        );
    }
    // replay to show pose per step
    println!("(replay poses)");
    let mut w2 = WorldState::at_pose(start, 1);
    let mut rngs2 = EpisodeRngs { noise: substream(1, "noise", 0), policy: substream(1, "policy", 0) };
    let mut t2 = QTable::zeros();
    let log2 = run_episode(&env, w2.clone(), &mut t2, &cfg.agent, &options, Mode::Eval, &mut rngs2);
    let _ = (&log2, &mut w2);
    println!(
        "outcome {:?} final=({:+.4},{:+.4},{:+.4})mm",
        log.outcome,
        log.final_world.ee_pose.t.x * 1e3,
        log.final_world.ee_pose.t.y * 1e3,
        (log.final_world.ee_pose.t.z) * 1e3
    );
}
