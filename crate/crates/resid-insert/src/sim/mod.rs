//! Quasi-static compliant contact world.
//!
//! A rigid part is commanded against a tight-clearance slot through the end
//! effector's compliance. Each step solves for the equilibrium pose and the
//! resulting external wrench; investigative presses probe a contact without
//! committing any motion.

mod geometry;
mod solver;

pub use geometry::{SlotGeometry, Surface, CORNER_BAND};
pub use solver::{
    solve_equilibrium, ComplianceParams, ContactFlags, Equilibrium, SolveError, Wrench,
    MAX_SWEEPS, PENETRATION_TOL,
};

use crate::math::Pose;
use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Episode outcome classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Failed,
    Ongoing,
}

/// Full simulator state owned by one episode.
#[derive(Clone, Debug)]
pub struct WorldState {
    /// Actual end-effector pose (world frame).
    pub ee_pose: Pose,
    /// Last commanded pose.
    pub commanded_pose: Pose,
    /// Per-face contact summary of the last equilibrium.
    pub contact_flags: ContactFlags,
    /// True external wrench at the last equilibrium (before sensing noise).
    pub last_wrench: Wrench,
    /// Seed this world was sampled from (bookkeeping for logs).
    pub rng_seed: u64,
    /// Simulator steps taken.
    pub step_count: u64,
    /// Set when motion was halted at the force cap; a latched world has
    /// failed.
    pub safety_latched: bool,
}

impl WorldState {
    pub fn at_pose(pose: Pose, rng_seed: u64) -> Self {
        WorldState {
            ee_pose: pose,
            commanded_pose: pose,
            contact_flags: ContactFlags::default(),
            last_wrench: Wrench::zero(),
            rng_seed,
            step_count: 0,
            safety_latched: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    NonConvergence(#[from] SolveError),
    /// Motion halted at the force cap; the carried state is latched at the
    /// halt point.
    #[error("force cap reached ({force:.2} N): motion halted")]
    SafetyStop {
        force: f64,
        world: Box<WorldState>,
        wrench: Wrench,
    },
    #[error("investigative press force {0:.1} N outside the 10-25 N range")]
    PressOutOfRange(f64),
}

/// Advance the world to the equilibrium under `commanded`.
///
/// Returns the updated world and the true external wrench. If the spring
/// force would exceed the force cap, motion halts where the cap is reached,
/// the world latches, and `SafetyStop` is returned carrying the halted state.
pub fn step_quasi_static(
    world: &WorldState,
    commanded: &Pose,
    geom: &SlotGeometry,
    params: &ComplianceParams,
) -> Result<(WorldState, Wrench), SimError> {
    let start = world.ee_pose;
    let eq = solve_equilibrium(geom, params, commanded, &start)?;
    if eq.wrench.force.norm() > params.force_cap {
        // Walk back along the commanded motion to the cap crossing.
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut capped = eq;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let cmd_mid = Pose {
                t: start.t.lerp(&commanded.t, mid),
                q: start.q.try_slerp(&commanded.q, mid, 1e-12).unwrap_or(commanded.q),
            };
            let trial = solve_equilibrium(geom, params, &cmd_mid, &start)?;
            if trial.wrench.force.norm() > params.force_cap {
                hi = mid;
            } else {
                lo = mid;
                capped = trial;
            }
        }
        let mut halted = world.clone();
        halted.ee_pose = capped.pose;
        halted.commanded_pose = *commanded;
        halted.contact_flags = capped.flags;
        halted.last_wrench = capped.wrench;
        halted.step_count += 1;
        halted.safety_latched = true;
        let force = capped.wrench.force.norm();
        return Err(SimError::SafetyStop {
            force,
            wrench: capped.wrench,
            world: Box::new(halted),
        });
    }
    let mut next = world.clone();
    next.ee_pose = eq.pose;
    next.commanded_pose = *commanded;
    next.contact_flags = eq.flags;
    next.last_wrench = eq.wrench;
    next.step_count += 1;
    Ok((next, eq.wrench))
}

/// Press straight down until the reaction reaches `f_z` newtons or the part
/// has moved 3 mm, then restore the pose.
///
/// Returns the peak wrench seen at the deepest press point; the world's pose
/// and command are unchanged (probing, not moving). `f_z` is a magnitude in
/// the 10-25 N actuation range.
pub fn apply_investigative_press(
    world: &WorldState,
    f_z: f64,
    geom: &SlotGeometry,
    params: &ComplianceParams,
) -> Result<(WorldState, Wrench), SimError> {
    let mag = f_z.abs();
    if !(10.0..=25.0).contains(&mag) {
        return Err(SimError::PressOutOfRange(f_z));
    }
    let (w, wrench) = press_response(world, mag, geom, params)?;
    Ok((w, wrench))
}

/// Shared press implementation without the actuation-range guard, used by
/// probe baselines that dwell with smaller forces and by diagnostics.
pub fn press_response(
    world: &WorldState,
    f_mag: f64,
    geom: &SlotGeometry,
    params: &ComplianceParams,
) -> Result<(WorldState, Wrench), SimError> {
    const MAX_TRAVEL: f64 = 0.003;
    let start = world.ee_pose;
    // Command depth that reaches the force target even against a rigid stop,
    // plus the free-travel allowance.
    let max_cmd = MAX_TRAVEL + f_mag / params.k_trans;

    let eval = |delta: f64| -> Result<(Equilibrium, f64), SimError> {
        let cmd = Pose {
            t: start.t - Vector3::new(0.0, 0.0, delta),
            q: start.q,
        };
        let eq = solve_equilibrium(geom, params, &cmd, &start)?;
        let travel = (start.t.z - eq.pose.t.z).max(0.0);
        Ok((eq, travel))
    };

    // The press stops at whichever limit is hit first: |F_z| = f_mag or
    // 3 mm of actual travel. Both grow monotonically with the commanded
    // depth, so bisection on the stop criterion is safe.
    let stop = |eq: &Equilibrium, travel: f64| -> f64 {
        (eq.wrench.force.z.abs() / f_mag).max(travel / MAX_TRAVEL)
    };

    let (eq_full, travel_full) = eval(max_cmd)?;
    let peak = if stop(&eq_full, travel_full) <= 1.0 {
        eq_full
    } else {
        let (mut lo, mut hi) = (0.0f64, max_cmd);
        let mut best = eq_full;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let (eq, travel) = eval(mid)?;
            if stop(&eq, travel) > 1.0 {
                hi = mid;
            } else {
                lo = mid;
                best = eq;
            }
        }
        best
    };

    if peak.wrench.force.norm() > params.force_cap {
        let mut halted = world.clone();
        halted.safety_latched = true;
        let force = peak.wrench.force.norm();
        return Err(SimError::SafetyStop {
            force,
            wrench: peak.wrench,
            world: Box::new(halted),
        });
    }

    // Probe result is observed, pose is restored.
    let mut next = world.clone();
    next.contact_flags = peak.flags;
    next.last_wrench = peak.wrench;
    next.step_count += 1;
    Ok((next, peak.wrench))
}

/// Observe the external wrench: truth plus zero-mean Gaussian noise.
pub fn estimate_external_wrench<R: Rng>(
    world: &WorldState,
    params: &ComplianceParams,
    rng: &mut R,
) -> Wrench {
    let truth = world.last_wrench;
    if !params.noise_enabled {
        return truth;
    }
    let (sf, sm) = params.wrench_noise_sigma;
    let nf = Normal::new(0.0, sf.max(0.0)).expect("force noise sigma");
    let nm = Normal::new(0.0, sm.max(0.0)).expect("moment noise sigma");
    Wrench {
        force: truth.force + Vector3::new(nf.sample(rng), nf.sample(rng), nf.sample(rng)),
        moment: truth.moment + Vector3::new(nm.sample(rng), nm.sample(rng), nm.sample(rng)),
    }
}

/// Success threshold on the seating depth error (m).
pub const SUCCESS_DEPTH_TOL: f64 = 0.0005;
/// Lateral capture region; leaving it fails the episode (m).
pub const CAPTURE_RADIUS: f64 = 0.005;

/// Classify the world against the goal pose.
pub fn check_outcome(world: &WorldState, goal: &Pose, geom: &SlotGeometry) -> Outcome {
    if world.safety_latched {
        return Outcome::Failed;
    }
    let d = world.ee_pose.t - goal.t;
    let lateral = d.xy().norm();
    if lateral > CAPTURE_RADIUS {
        return Outcome::Failed;
    }
    if d.z.abs() < SUCCESS_DEPTH_TOL && lateral < geom.clearance() {
        return Outcome::Success;
    }
    Outcome::Ongoing
}

/// Sample a start state: the taught hover pose displaced laterally by a
/// uniform-magnitude, uniform-direction error.
pub fn sample_initial_condition<R: Rng>(
    rng: &mut R,
    error_range: (f64, f64),
    hover: &Pose,
    seed: u64,
) -> WorldState {
    let (lo, hi) = error_range;
    assert!(lo >= 0.0 && hi >= lo, "error range must be ordered and non-negative");
    let mag = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let pose = Pose {
        t: hover.t + Vector3::new(mag * angle.cos(), mag * angle.sin(), 0.0),
        q: hover.q,
    };
    WorldState::at_pose(pose, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_relative_eq;

    fn hover(geom: &SlotGeometry, dx: f64, dy: f64, h: f64) -> Pose {
        Pose::from_translation(dx, dy, geom.ram_height + h)
    }

    #[test]
    fn free_space_step_and_press() {
        let geom = SlotGeometry::default();
        let params = ComplianceParams::default();
        let w0 = WorldState::at_pose(hover(&geom, 0.0, 0.0, 0.010), 1);
        let cmd = hover(&geom, 0.001, 0.0, 0.010);
        let (w1, wr) = step_quasi_static(&w0, &cmd, &geom, &params).unwrap();
        assert_relative_eq!(w1.ee_pose.t, cmd.t, epsilon = 1e-12);
        assert!(wr.force.norm() < 1e-9);

        // Probe in free space: no reaction, and the pose is untouched.
        let (w2, pw) = apply_investigative_press(&w1, 25.0, &geom, &params).unwrap();
        assert!(pw.force.norm() < 1e-9);
        assert_relative_eq!(w2.ee_pose.t, w1.ee_pose.t, epsilon = 1e-15);
    }

    #[test]
    fn press_range_enforced() {
        let geom = SlotGeometry::default();
        let params = ComplianceParams::default();
        let w = WorldState::at_pose(hover(&geom, 0.0, 0.0, 0.001), 1);
        assert!(matches!(
            apply_investigative_press(&w, 5.0, &geom, &params),
            Err(SimError::PressOutOfRange(_))
        ));
    }

    #[test]
    fn one_sided_press_moment_thresholds() {
        let geom = SlotGeometry::default();
        let params = ComplianceParams::default();
        // End of the part resting past the slot end (the disambiguation
        // fixture): strong press gives a clear pitch moment, weak press does
        // not.
        let w = WorldState::at_pose(hover(&geom, 0.0025, 0.0, 0.0), 1);
        let (_, strong) = apply_investigative_press(&w, 25.0, &geom, &params).unwrap();
        assert!(
            strong.moment.y.abs() > 0.5 && strong.moment.y.abs() < 2.0,
            "M_y at 25 N = {}",
            strong.moment.y
        );
        let (_, weak) = press_response(&w, 5.0, &geom, &params).unwrap();
        assert!(weak.moment.y.abs() < 0.4, "M_y at 5 N = {}", weak.moment.y);
        // Pose restored after both presses.
        assert_relative_eq!(w.ee_pose.t, hover(&geom, 0.0025, 0.0, 0.0).t, epsilon = 1e-15);
    }

    #[test]
    fn press_monotone_in_force() {
        let geom = SlotGeometry::default();
        let params = ComplianceParams::default();
        let w = WorldState::at_pose(hover(&geom, 0.0025, 0.0, 0.0), 1);
        let mut last = 0.0;
        for f in [5.0, 10.0, 15.0, 20.0, 25.0] {
            let (_, wr) = press_response(&w, f, &geom, &params).unwrap();
            let m = wr.moment.y.abs();
            assert!(m >= last - 1e-9, "|M_y| not monotone: {m} after {last}");
            last = m;
        }
    }

    #[test]
    fn wrench_noise_statistics() {
        let geom = SlotGeometry::default();
        let mut params = ComplianceParams::default();
        params.wrench_noise_sigma = (0.5, 0.05);
        let w = WorldState::at_pose(hover(&geom, 0.0, 0.0, 0.010), 1);
        let mut rng = substream(9, "noise-test", 0);
        let n = 10_000;
        let mut mean_f = 0.0;
        for _ in 0..n {
            mean_f += estimate_external_wrench(&w, &params, &mut rng).force.x;
        }
        mean_f /= n as f64;
        // 3 sigma / sqrt(n) band around the true zero.
        assert!(mean_f.abs() < 3.0 * 0.5 / (n as f64).sqrt() * 3.0);

        params.noise_enabled = false;
        let exact = estimate_external_wrench(&w, &params, &mut rng);
        assert_eq!(exact, w.last_wrench);
    }

    #[test]
    fn outcome_classification() {
        let geom = SlotGeometry::default();
        let goal = geom.seated_ee_pose();
        let at_goal = WorldState::at_pose(goal, 1);
        assert_eq!(check_outcome(&at_goal, &goal, &geom), Outcome::Success);

        let far = WorldState::at_pose(
            Pose::from_translation(goal.t.x + 0.010, goal.t.y, goal.t.z),
            1,
        );
        assert_eq!(check_outcome(&far, &goal, &geom), Outcome::Failed);

        // Resting on the lip, aligned: depth error equals the slot depth.
        let on_lip = WorldState::at_pose(hover(&geom, 0.0, 0.0, 0.0), 1);
        assert_eq!(check_outcome(&on_lip, &goal, &geom), Outcome::Ongoing);

        let mut latched = at_goal.clone();
        latched.safety_latched = true;
        assert_eq!(check_outcome(&latched, &goal, &geom), Outcome::Failed);
    }

    #[test]
    fn initial_condition_sampling() {
        let geom = SlotGeometry::default();
        let hover_pose = hover(&geom, 0.0, 0.0, 0.0003);

        let mut rng = substream(3, "world", 0);
        let w = sample_initial_condition(&mut rng, (0.0, 0.0), &hover_pose, 3);
        assert_relative_eq!(w.ee_pose.t, hover_pose.t, epsilon = 1e-15);

        let mut rng = substream(3, "world", 1);
        for _ in 0..1000 {
            let w = sample_initial_condition(&mut rng, (0.002, 0.003), &hover_pose, 3);
            let err = (w.ee_pose.t - hover_pose.t).xy().norm();
            assert!((0.002..=0.003).contains(&err), "|error| = {err}");
        }

        // Same stream, same draw.
        let mut a = substream(3, "world", 2);
        let mut b = substream(3, "world", 2);
        let wa = sample_initial_condition(&mut a, (0.002, 0.003), &hover_pose, 3);
        let wb = sample_initial_condition(&mut b, (0.002, 0.003), &hover_pose, 3);
        assert_eq!(wa.ee_pose.t, wb.ee_pose.t);
    }
}
