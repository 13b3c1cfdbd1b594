//! Experiment protocols: policy evaluation (the ablation table), classical
//! baseline comparison (the board-displacement table), training, and single
//! episodes.

use super::config::{Condition, ExperimentConfig};
use super::results::{ResultRow, ResultTable};
use super::scenario::{build_trial_env, TrialEnv};
use super::spiral::spiral_search_policy;
use crate::agent::{
    rough_locate, run_episode, train, EnvBundle, EpisodeLog, EpisodeOptions, Mode, QTable,
    TrainReport,
};
use crate::agent::EpisodeRngs;
use crate::math::{interpolate_trajectory, Pose};
use crate::rng::substream;
use crate::sim::{
    check_outcome, sample_initial_condition, step_quasi_static, Outcome, SimError, WorldState,
};
use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use std::time::Instant;

/// Step budget of the comparison protocol ("no limit" capped for safety).
pub const COMPARISON_STEP_CEILING: u64 = 500;
/// Ablation protocol step budget.
pub const ABLATION_MAX_STEPS: u64 = 10;
/// Ablation protocol initial lateral error range (m).
pub const ABLATION_ERROR_RANGE: (f64, f64) = (0.002, 0.003);

#[derive(Clone, Copy, Debug)]
struct TrialOutcome {
    success: bool,
    steps: u64,
}

/// Train a policy on the nominal scenario.
pub fn train_policy(cfg: &ExperimentConfig) -> TrainReport {
    let env_parts = build_trial_env(cfg, Vector2::zeros(), Vector2::zeros());
    let env = EnvBundle {
        geom: &env_parts.geom,
        params: &cfg.compliance,
        sensor: &env_parts.detail_rig,
        goal: env_parts.goal,
    };
    train(
        &env,
        &cfg.agent,
        &env_parts.hover_nominal,
        cfg.initial_error_range,
        cfg.train_episodes,
        cfg.seed,
    )
}

fn episode_options_for(cfg: &ExperimentConfig, cond: Condition, max_steps: u64) -> EpisodeOptions {
    match cond {
        Condition::Full | Condition::RandomRl => EpisodeOptions::eval(cfg.agent.alpha, max_steps),
        Condition::NoVision => EpisodeOptions::eval(1.0, max_steps),
        Condition::NoRl => EpisodeOptions::eval(0.0, max_steps),
        Condition::NoProbe => EpisodeOptions {
            alpha: cfg.agent.alpha,
            probe_enabled: false,
            random_on_unclear: true,
            max_steps,
            epsilon: 0.0,
        },
        _ => panic!("{cond:?} is a scripted baseline, not a policy condition"),
    }
}

fn policy_trial(
    cfg: &ExperimentConfig,
    env_parts: &TrialEnv,
    cond: Condition,
    table: &QTable,
    stream_scope: &str,
    start_from_hover_error: bool,
    max_steps: u64,
    trial: u64,
) -> (TrialOutcome, EpisodeLog) {
    let env = EnvBundle {
        geom: &env_parts.geom,
        params: &cfg.compliance,
        sensor: &env_parts.detail_rig,
        goal: env_parts.goal,
    };
    let mut rngs = EpisodeRngs {
        noise: substream(cfg.seed, &format!("{stream_scope}:noise"), trial),
        policy: substream(cfg.seed, &format!("{stream_scope}:policy"), trial),
    };
    let mut world_rng = substream(cfg.seed, &format!("{stream_scope}:world"), trial);

    let world = if start_from_hover_error {
        sample_initial_condition(
            &mut world_rng,
            cfg.initial_error_range,
            &env_parts.hover_nominal,
            cfg.seed,
        )
    } else {
        // Two-phase start: rough visual servo plus taught-offset replay.
        match rough_locate(
            &env_parts.global_nominal,
            &env_parts.rough_rig,
            &env_parts.taught_offset,
            cfg.rough.lambda_gain,
            cfg.rough.dt,
            cfg.rough.tolerance,
            cfg.rough.max_ticks,
            &mut rngs.noise,
        ) {
            Ok(pose) => WorldState::at_pose(pose, cfg.seed),
            Err(_) => {
                // Rough location failed: the trial is an immediate failure.
                return (
                    TrialOutcome {
                        success: false,
                        steps: 0,
                    },
                    EpisodeLog {
                        steps: Vec::new(),
                        outcome: Outcome::Failed,
                        final_world: WorldState::at_pose(env_parts.global_nominal, cfg.seed),
                        wall_time: std::time::Duration::ZERO,
                    },
                );
            }
        }
    };

    let options = episode_options_for(cfg, cond, max_steps);
    let mut table_ref = table.clone();
    let log = run_episode(
        &env,
        world,
        &mut table_ref,
        &cfg.agent,
        &options,
        Mode::Eval,
        &mut rngs,
    );
    (
        TrialOutcome {
            success: log.succeeded(),
            steps: log.steps.len() as u64,
        },
        log,
    )
}

/// Scripted motion runner shared by the classical baselines.
fn run_scripted(
    cfg: &ExperimentConfig,
    env_parts: &TrialEnv,
    start: Pose,
    max_steps: u64,
    mut command_for: impl FnMut(u64, &WorldState) -> Option<Pose>,
    noise: &mut ChaCha8Rng,
) -> TrialOutcome {
    let exec = Normal::new(0.0, cfg.agent.exec_noise_sigma.max(0.0)).expect("exec noise");
    let mut world = WorldState::at_pose(start, cfg.seed);
    for step in 1..=max_steps {
        let Some(mut cmd) = command_for(step, &world) else {
            return TrialOutcome {
                success: false,
                steps: step - 1,
            };
        };
        if cfg.agent.exec_noise_sigma > 0.0 {
            cmd.t += Vector3::new(exec.sample(noise), exec.sample(noise), exec.sample(noise));
        }
        for wp in interpolate_trajectory(&world.ee_pose, &cmd, 3).into_iter().skip(1) {
            match step_quasi_static(&world, &wp, &env_parts.geom, &cfg.compliance) {
                Ok((next, _)) => world = next,
                Err(SimError::SafetyStop { world: halted, .. }) => {
                    world = *halted;
                    break;
                }
                Err(e) => {
                    eprintln!("baseline step aborted: {e}");
                    world.safety_latched = true;
                    break;
                }
            }
        }
        match check_outcome(&world, &env_parts.goal, &env_parts.geom) {
            Outcome::Success => {
                return TrialOutcome {
                    success: true,
                    steps: step,
                }
            }
            Outcome::Failed => {
                return TrialOutcome {
                    success: false,
                    steps: step,
                }
            }
            Outcome::Ongoing => {}
        }
    }
    TrialOutcome {
        success: false,
        steps: max_steps,
    }
}

/// Average several detailed-view readings and subtract the lateral error.
fn one_shot_vision_correction(
    cfg: &ExperimentConfig,
    env_parts: &TrialEnv,
    pose: &Pose,
    noise: &mut ChaCha8Rng,
) -> Pose {
    use crate::agent::VisualSensor;
    let frames = cfg.vision.correction_frames.max(1);
    let mut sum = Vector2::zeros();
    for _ in 0..frames {
        let r = env_parts.detail_rig.measure(pose, noise);
        sum += r.ee.t_err.xy();
    }
    let corr = sum / frames as f64;
    let mut corrected = *pose;
    corrected.t.x -= corr.x;
    corrected.t.y -= corr.y;
    corrected
}

fn scripted_trial(
    cfg: &ExperimentConfig,
    env_parts: &TrialEnv,
    cond: Condition,
    stream_scope: &str,
    trial: u64,
) -> TrialOutcome {
    let mut noise = substream(cfg.seed, &format!("{stream_scope}:noise"), trial);

    // Locate the start pose per baseline family.
    let start = match cond {
        Condition::TaughtDirect | Condition::TaughtSpiral => env_parts.hover_nominal,
        Condition::VisionDirect | Condition::VisionSpiral => {
            let Ok(hover) = rough_locate(
                &env_parts.global_nominal,
                &env_parts.rough_rig,
                &env_parts.taught_offset,
                cfg.rough.lambda_gain,
                cfg.rough.dt,
                cfg.rough.tolerance,
                cfg.rough.max_ticks,
                &mut noise,
            ) else {
                return TrialOutcome {
                    success: false,
                    steps: 0,
                };
            };
            one_shot_vision_correction(cfg, env_parts, &hover, &mut noise)
        }
        other => panic!("{other:?} is not a scripted baseline"),
    };

    let descent = cfg.descent_step;
    let spiral = cfg.spiral.clone();
    let center = start.t.xy();
    match cond {
        Condition::TaughtDirect | Condition::VisionDirect => run_scripted(
            cfg,
            env_parts,
            start,
            COMPARISON_STEP_CEILING,
            |_, world| {
                let mut cmd = start;
                cmd.t.x = center.x;
                cmd.t.y = center.y;
                cmd.t.z = world.ee_pose.t.z - descent;
                Some(cmd)
            },
            &mut noise,
        ),
        Condition::TaughtSpiral | Condition::VisionSpiral => run_scripted(
            cfg,
            env_parts,
            start,
            COMPARISON_STEP_CEILING,
            |step, world| {
                let (dx, dy) = spiral_search_policy(step - 1, spiral.pitch, spiral.angular_step);
                if (dx * dx + dy * dy).sqrt() > spiral.max_radius {
                    return None; // search pattern exhausted
                }
                let mut cmd = start;
                cmd.t.x = center.x + dx;
                cmd.t.y = center.y + dy;
                cmd.t.z = world.ee_pose.t.z - spiral.dwell_descent;
                Some(cmd)
            },
            &mut noise,
        ),
        other => panic!("{other:?} is not a scripted baseline"),
    }
}

fn aggregate(label: &str, outcomes: &[TrialOutcome], wall_secs: f64) -> ResultRow {
    let success = outcomes.iter().filter(|o| o.success).count();
    let steps_sum: u64 = outcomes.iter().map(|o| o.steps).sum();
    let mean_steps = if outcomes.is_empty() {
        0.0
    } else {
        steps_sum as f64 / outcomes.len() as f64
    };
    ResultRow {
        label: label.to_string(),
        success,
        total: outcomes.len(),
        mean_steps,
        wall_secs,
    }
}

fn run_trials<F>(parallel: bool, trials: usize, f: F) -> Vec<TrialOutcome>
where
    F: Fn(u64) -> TrialOutcome + Sync + Send,
{
    if parallel {
        (0..trials as u64).into_par_iter().map(f).collect()
    } else {
        (0..trials as u64).map(f).collect()
    }
}

/// Policy evaluation over the five ablation conditions.
///
/// Protocol: 10 steps per episode, initial lateral error uniform in 2-3 mm,
/// board undisplaced.
pub fn run_ablation(cfg: &ExperimentConfig, qtable: &QTable) -> ResultTable {
    let mut protocol = cfg.clone();
    protocol.max_steps = ABLATION_MAX_STEPS;
    protocol.initial_error_range = ABLATION_ERROR_RANGE;
    assert_eq!(protocol.max_steps, 10, "ablation protocol pins max_steps");
    assert_eq!(
        protocol.initial_error_range,
        (0.002, 0.003),
        "ablation protocol pins the initial error range"
    );

    let env_parts = build_trial_env(&protocol, Vector2::zeros(), Vector2::zeros());
    let mut random_rng = substream(protocol.seed, "ablation:random_table", 0);
    let random_table = QTable::random(&mut random_rng);

    let mut table = ResultTable::default();
    for cond in Condition::ABLATION {
        let started = Instant::now();
        let tbl = if cond == Condition::RandomRl {
            &random_table
        } else {
            qtable
        };
        let scope = format!("ablation:{}", cond.label());
        let outcomes = run_trials(protocol.parallel, protocol.trials, |trial| {
            policy_trial(
                &protocol,
                &env_parts,
                cond,
                tbl,
                &scope,
                true,
                ABLATION_MAX_STEPS,
                trial,
            )
            .0
        });
        table.push(aggregate(
            cond.label(),
            &outcomes,
            started.elapsed().as_secs_f64(),
        ));
    }
    table
}

/// Sample the board displacement for one moved-board trial.
fn sample_board_offset(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Vector2<f64> {
    let (lo, hi) = cfg.board_offset_range;
    let mag = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    Vector2::new(mag * angle.cos(), mag * angle.sin())
}

fn comparison_trial(
    cfg: &ExperimentConfig,
    cond: Condition,
    moved: bool,
    qtable: &QTable,
    trial: u64,
) -> TrialOutcome {
    let mode = if moved { "moved" } else { "fixed" };
    let scope = format!("compare:{}:{}", cond.label(), mode);

    let offset = if moved {
        let mut world_rng = substream(cfg.seed, &format!("{scope}:world"), trial);
        sample_board_offset(cfg, &mut world_rng)
    } else {
        Vector2::zeros()
    };
    // Systematic measurement bias scales with the displacement.
    let sigma = cfg.vision.sys_px_bias_per_m * offset.norm();
    let mut bias_rng = substream(cfg.seed, &format!("{scope}:bias"), trial);
    let bias = if sigma > 0.0 {
        let n = Normal::new(0.0, sigma).expect("bias sigma");
        Vector2::new(n.sample(&mut bias_rng), n.sample(&mut bias_rng))
    } else {
        Vector2::zeros()
    };
    let env_parts = build_trial_env(cfg, offset, bias);

    match cond {
        Condition::Full => {
            policy_trial(
                cfg,
                &env_parts,
                cond,
                qtable,
                &scope,
                false,
                COMPARISON_STEP_CEILING,
                trial,
            )
            .0
        }
        _ => scripted_trial(cfg, &env_parts, cond, &scope, trial),
    }
}

/// Classical baseline comparison, fixed and moved board.
///
/// Protocol: no initial error injection, step ceiling of 500; the blind
/// baselines get a reduced moved-board trial count.
pub fn run_comparison(cfg: &ExperimentConfig, qtable: &QTable) -> ResultTable {
    assert!(
        COMPARISON_STEP_CEILING == 500,
        "comparison protocol pins the step ceiling"
    );
    let full_trials = cfg.trials;
    let blind_moved_trials = (full_trials / 5).max(1);

    let mut table = ResultTable::default();
    for moved in [false, true] {
        for cond in Condition::COMPARISON {
            let trials = match (cond, moved) {
                (Condition::TaughtDirect | Condition::TaughtSpiral, true) => blind_moved_trials,
                _ => full_trials,
            };
            let started = Instant::now();
            let outcomes = run_trials(cfg.parallel, trials, |trial| {
                comparison_trial(cfg, cond, moved, qtable, trial)
            });
            let label = format!("{}/{}", cond.label(), if moved { "moved" } else { "fixed" });
            table.push(aggregate(&label, &outcomes, started.elapsed().as_secs_f64()));
        }
    }
    table
}

/// Evaluate a single condition with the configured trial count and step
/// budget, returning per-episode logs for the policy conditions.
pub fn run_eval(
    cfg: &ExperimentConfig,
    qtable: &QTable,
    cond: Condition,
) -> (ResultTable, Vec<EpisodeLog>) {
    let started = Instant::now();
    let mut logs = Vec::new();
    let outcomes: Vec<TrialOutcome> = match cond {
        Condition::Full
        | Condition::NoVision
        | Condition::NoRl
        | Condition::RandomRl
        | Condition::NoProbe => {
            let env_parts = build_trial_env(cfg, Vector2::zeros(), Vector2::zeros());
            let tbl = if cond == Condition::RandomRl {
                let mut rng = substream(cfg.seed, "eval:random_table", 0);
                QTable::random(&mut rng)
            } else {
                qtable.clone()
            };
            let scope = format!("eval:{}", cond.label());
            // Serial so the logs can be captured in order.
            (0..cfg.trials as u64)
                .map(|trial| {
                    let (outcome, log) = policy_trial(
                        cfg,
                        &env_parts,
                        cond,
                        &tbl,
                        &scope,
                        true,
                        cfg.max_steps,
                        trial,
                    );
                    logs.push(log);
                    outcome
                })
                .collect()
        }
        _ => {
            let scope_cond = cond;
            run_trials(cfg.parallel, cfg.trials, |trial| {
                comparison_trial(cfg, scope_cond, false, qtable, trial)
            })
        }
    };
    let mut table = ResultTable::default();
    table.push(aggregate(
        cond.label(),
        &outcomes,
        started.elapsed().as_secs_f64(),
    ));
    (table, logs)
}

/// One verbose episode under the full method.
pub fn run_demo(cfg: &ExperimentConfig, qtable: &QTable) -> EpisodeLog {
    let env_parts = build_trial_env(cfg, Vector2::zeros(), Vector2::zeros());
    let (_, log) = policy_trial(
        cfg,
        &env_parts,
        Condition::Full,
        qtable,
        "demo",
        true,
        cfg.max_steps,
        0,
    );
    log
}
