//! Episode loop: visual residual control with belief-gated probing.
//!
//! Each step measures the visual error, blends the fixed policy with the
//! learned discrete action, executes the increment through the trajectory
//! interpolator and the quasi-static world, and reads the contact state back.
//! When the contact reading is ambiguous (force without a telling moment),
//! an investigative press is executed before the state transition commits.

use super::policy::{
    belief, combine_residual, compute_reward, encode_state, fixed_policy, pbvs_velocity,
    rl_action_vector, select_action,
};
use super::qtable::{q_update, QTable};
use super::{AgentConfig, DiscreteAction, N_ACTIONS};
use crate::math::{compose, interpolate_trajectory, Pose, PoseError};
use crate::sim::{
    apply_investigative_press, check_outcome, estimate_external_wrench, step_quasi_static,
    ComplianceParams, Outcome, SimError, SlotGeometry, WorldState,
};
use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::time::{Duration, Instant};

/// One visual measurement, reported both in the camera frame (as estimated)
/// and rotated into the end-effector frame for control.
#[derive(Clone, Copy, Debug)]
pub struct VisualReading {
    /// Error in the target camera frame.
    pub camera: PoseError,
    /// Error in the end-effector frame.
    pub ee: PoseError,
    /// Estimated rotation of the current camera frame in the target frame.
    pub rotation: UnitQuaternion<f64>,
}

/// Source of visual state estimates for an episode.
pub trait VisualSensor {
    /// Measure the pose error of `ee_pose` relative to the taught target.
    fn measure(&self, ee_pose: &Pose, rng: &mut ChaCha8Rng) -> VisualReading;
}

/// Environment pieces shared by every episode of an experiment.
pub struct EnvBundle<'a> {
    pub geom: &'a SlotGeometry,
    pub params: &'a ComplianceParams,
    pub sensor: &'a dyn VisualSensor,
    /// Seated goal pose used for outcome checks.
    pub goal: Pose,
}

/// Train or evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-episode behavior switches (the ablation axes).
#[derive(Clone, Copy, Debug)]
pub struct EpisodeOptions {
    /// Residual weight; 0 masks the learned policy, 1 masks the visual one.
    pub alpha: f64,
    /// Execute the investigative press on ambiguous readings.
    pub probe_enabled: bool,
    /// Without the probe, pick the next action uniformly at random whenever
    /// the reading is ambiguous.
    pub random_on_unclear: bool,
    /// Step budget.
    pub max_steps: u64,
    /// Exploration rate (0 for evaluation).
    pub epsilon: f64,
}

impl EpisodeOptions {
    pub fn eval(alpha: f64, max_steps: u64) -> Self {
        EpisodeOptions {
            alpha,
            probe_enabled: true,
            random_on_unclear: false,
            max_steps,
            epsilon: 0.0,
        }
    }
}

/// Per-step record of everything the agent saw and did.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub state_index: usize,
    pub action_id: usize,
    pub u_h: [f64; 6],
    pub u_rl: [f64; 6],
    pub command: [f64; 6],
    pub wrench: [f64; 6],
    pub reward: f64,
    pub belief: bool,
    pub probed: bool,
}

/// Episode trace plus its terminal outcome.
#[derive(Clone, Debug)]
pub struct EpisodeLog {
    pub steps: Vec<StepRecord>,
    pub outcome: Outcome,
    pub final_world: WorldState,
    /// Wall-clock duration; informational only and deliberately kept out of
    /// the serialized logs so equal seeds produce byte-identical files.
    pub wall_time: Duration,
}

impl EpisodeLog {
    pub fn succeeded(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

/// RNG streams consumed by one episode.
pub struct EpisodeRngs {
    /// Sensor, wrench, and execution noise.
    pub noise: ChaCha8Rng,
    /// Exploration and tie-free random choices.
    pub policy: ChaCha8Rng,
}

/// Run one episode under Algorithm-style control.
///
/// In `Mode::Train` the Q-table is updated in place; in `Mode::Eval` it is
/// read-only. The episode ends on success, failure, or the step budget.
pub fn run_episode(
    env: &EnvBundle,
    world: WorldState,
    qtable: &mut QTable,
    config: &AgentConfig,
    options: &EpisodeOptions,
    mode: Mode,
    rngs: &mut EpisodeRngs,
) -> EpisodeLog {
    let started = Instant::now();
    let mut world = world;
    let mut steps = Vec::new();
    let mut outcome = Outcome::Ongoing;

    let exec_noise = Normal::new(0.0, config.exec_noise_sigma.max(0.0)).expect("exec noise");

    // Initial observation.
    let mut reading = env.sensor.measure(&world.ee_pose, &mut rngs.noise);
    let w_obs = estimate_external_wrench(&world, env.params, &mut rngs.noise);
    let mut state = encode_state(&w_obs, config.force_threshold, config.moment_threshold);
    let mut force_random_action = false;

    for step in 1..=options.max_steps {
        // Action selection: residual of the visual P-policy and the table.
        let action = if force_random_action {
            DiscreteAction::new(rngs.policy.gen_range(0..N_ACTIONS))
        } else {
            select_action(qtable, &state, options.epsilon, &mut rngs.policy)
        };
        let u_h = fixed_policy(&reading.ee, &config.k_p);
        let u_rl = rl_action_vector(action, config.lambda_scale);
        let mut u = combine_residual(&u_h, &u_rl, options.alpha);
        if config.exec_noise_sigma > 0.0 {
            for c in u.iter_mut().take(3) {
                *c += exec_noise.sample(&mut rngs.noise);
            }
        }

        // Increment on the current pose, executed through the interpolator.
        let target = Pose {
            t: world.ee_pose.t + Vector3::new(u[0], u[1], u[2]),
            q: crate::math::renorm(
                UnitQuaternion::from_scaled_axis(Vector3::new(u[3], u[4], u[5]))
                    * world.ee_pose.q,
            ),
        };
        let mut last_wrench = world.last_wrench;
        let mut safety_stopped = false;
        for waypoint in interpolate_trajectory(&world.ee_pose, &target, config.interp_steps)
            .into_iter()
            .skip(1)
        {
            match step_quasi_static(&world, &waypoint, env.geom, env.params) {
                Ok((next, wrench)) => {
                    world = next;
                    last_wrench = wrench;
                }
                Err(SimError::SafetyStop {
                    world: halted,
                    wrench,
                    ..
                }) => {
                    world = *halted;
                    last_wrench = wrench;
                    safety_stopped = true;
                    break;
                }
                Err(e) => {
                    // A wedged configuration the projection cannot settle is
                    // treated as a failed episode, never a crashed table.
                    eprintln!("episode aborted: {e}");
                    world.safety_latched = true;
                    safety_stopped = true;
                    break;
                }
            }
        }

        // Observe, then disambiguate if needed.
        reading = env.sensor.measure(&world.ee_pose, &mut rngs.noise);
        let w_obs = estimate_external_wrench(&world, env.params, &mut rngs.noise);
        let mut next_state = encode_state(&w_obs, config.force_threshold, config.moment_threshold);
        let clear = belief(&next_state, &w_obs, config.moment_threshold);
        let mut probed = false;
        force_random_action = false;
        if !clear && !safety_stopped {
            if options.probe_enabled {
                match apply_investigative_press(&world, config.probe_force, env.geom, env.params) {
                    Ok((probed_world, _)) => {
                        world = probed_world;
                        let w_probe =
                            estimate_external_wrench(&world, env.params, &mut rngs.noise);
                        next_state = encode_state(
                            &w_probe,
                            config.force_threshold,
                            config.moment_threshold,
                        );
                        probed = true;
                    }
                    Err(SimError::SafetyStop { world: halted, .. }) => {
                        world = *halted;
                        safety_stopped = true;
                    }
                    Err(e) => {
                        eprintln!("probe aborted: {e}");
                        world.safety_latched = true;
                        safety_stopped = true;
                    }
                }
            } else if options.random_on_unclear {
                force_random_action = true;
            }
        }

        outcome = if safety_stopped {
            Outcome::Failed
        } else {
            check_outcome(&world, &env.goal, env.geom)
        };
        let reward = compute_reward(
            reading.ee.t_err.xy().norm(),
            step,
            options.max_steps,
            outcome,
        );

        if mode == Mode::Train {
            q_update(
                qtable,
                &state,
                action,
                reward,
                &next_state,
                outcome != Outcome::Ongoing,
                config.learning_rate,
                config.gamma,
            );
        }

        steps.push(StepRecord {
            step,
            state_index: state.index,
            action_id: action.id,
            u_h,
            u_rl,
            command: u,
            wrench: last_wrench.as_array(),
            reward,
            belief: clear,
            probed,
        });

        state = next_state;
        if outcome != Outcome::Ongoing {
            break;
        }
    }

    EpisodeLog {
        steps,
        outcome,
        final_world: world,
        wall_time: started.elapsed(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RoughLocateError {
    #[error("rough visual servo did not reach {tolerance:.4} m within {ticks} ticks (residual {residual:.4} m)")]
    NoConvergence {
        tolerance: f64,
        ticks: usize,
        residual: f64,
    },
}

/// Free-space visual servo toward the taught viewpoint, then replay of the
/// taught viewpoint-to-hover transform.
///
/// Runs the velocity law in closed loop with explicit-Euler integration
/// until the translation error drops under `tolerance`, then composes the
/// recorded `taught_offset` to produce the contact-phase start pose.
pub fn rough_locate(
    start: &Pose,
    sensor: &dyn VisualSensor,
    taught_offset: &Pose,
    lambda_gain: f64,
    dt: f64,
    tolerance: f64,
    max_ticks: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Pose, RoughLocateError> {
    let mut pose = *start;
    let mut residual = f64::INFINITY;
    for _ in 0..max_ticks {
        let reading = sensor.measure(&pose, rng);
        residual = reading.camera.translation_norm();
        if residual < tolerance {
            return Ok(compose(&pose, taught_offset));
        }
        // The camera-frame velocity law, applied in the EE frame the sensor
        // already rotated the error into.
        let twist = pbvs_velocity(
            &reading.ee,
            &UnitQuaternion::identity(),
            lambda_gain,
        );
        pose.t += twist.v * dt;
        pose.q = crate::math::renorm(UnitQuaternion::from_scaled_axis(twist.w * dt) * pose.q);
    }
    Err(RoughLocateError::NoConvergence {
        tolerance,
        ticks: max_ticks,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    /// Perfect sensor that reports the exact pose error to a fixed target.
    struct ExactSensor {
        target: Pose,
    }

    impl VisualSensor for ExactSensor {
        fn measure(&self, ee_pose: &Pose, _rng: &mut ChaCha8Rng) -> VisualReading {
            let err = crate::math::pose_error(ee_pose, &self.target);
            VisualReading {
                camera: err,
                ee: err,
                rotation: UnitQuaternion::identity(),
            }
        }
    }

    #[test]
    fn rough_locate_converges_exponentially() {
        let target = Pose::from_translation(0.0, 0.0, 0.25);
        let sensor = ExactSensor { target };
        let start = Pose::from_translation(0.020, 0.0, 0.25);
        let mut rng = substream(1, "servo", 0);
        let pose = rough_locate(
            &start,
            &sensor,
            &Pose::identity(),
            1.0,
            0.01,
            1e-4,
            2000,
            &mut rng,
        )
        .unwrap();
        assert!((pose.t - target.t).norm() < 1e-4 + 1e-9);
    }

    #[test]
    fn rough_locate_reports_divergence() {
        let target = Pose::from_translation(0.0, 0.0, 0.25);
        let sensor = ExactSensor { target };
        let start = Pose::from_translation(0.020, 0.0, 0.25);
        let mut rng = substream(1, "servo", 1);
        let err = rough_locate(
            &start,
            &sensor,
            &Pose::identity(),
            1.0,
            0.01,
            1e-9,
            3,
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, RoughLocateError::NoConvergence { .. }));
    }
}
