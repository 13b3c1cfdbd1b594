//! Stateless policy pieces: the visual servo law, the fixed P-policy,
//! contact-state encoding, belief flag, action selection, residual blending,
//! and the reward.

use super::{DiscreteAction, DiscreteState, QTable, N_ACTIONS};
use crate::math::{PoseError, Twist};
use crate::sim::{Outcome, Wrench};
use nalgebra::UnitQuaternion;
use rand::Rng;

/// Velocity law on a visual pose error: exponential, decoupled error decay.
///
/// `s_v` and the returned twist are expressed in the current camera frame;
/// `r_est` is the estimated rotation of the current frame in the target
/// frame.
pub fn pbvs_velocity(s_v: &PoseError, r_est: &UnitQuaternion<f64>, lambda_gain: f64) -> Twist {
    Twist {
        v: -(r_est.inverse() * s_v.t_err) * lambda_gain,
        w: -s_v.theta_u * lambda_gain,
    }
}

/// Proportional fixed policy: elementwise `-k_p * s_v`.
pub fn fixed_policy(s_v: &PoseError, k_p: &[f64; 6]) -> [f64; 6] {
    let sv = s_v.as_vec6();
    let mut u = [0.0; 6];
    for i in 0..6 {
        u[i] = -k_p[i] * sv[i];
    }
    u
}

/// Threshold each wrench component to a contact sign.
pub fn encode_state(w: &Wrench, force_threshold: f64, moment_threshold: f64) -> DiscreteState {
    debug_assert!(force_threshold > 0.0 && moment_threshold > 0.0);
    let arr = w.as_array();
    let mut code = [0i8; 6];
    for (i, c) in code.iter_mut().enumerate() {
        let thresh = if i < 3 { force_threshold } else { moment_threshold };
        if arr[i] > thresh {
            *c = 1;
        } else if arr[i] < -thresh {
            *c = -1;
        }
    }
    DiscreteState::from_code(code)
}

/// Whether the encoded state can be trusted.
///
/// Free space is unambiguous, and any over-threshold moment pins down the
/// contact configuration. A force reading with every moment below threshold
/// is ambiguous and warrants a probe.
pub fn belief(state: &DiscreteState, raw: &Wrench, moment_threshold: f64) -> bool {
    if state.is_clear() {
        return true;
    }
    raw.moment.iter().any(|m| m.abs() > moment_threshold)
}

/// Epsilon-greedy selection; greedy ties break toward the lowest action id.
pub fn select_action<R: Rng>(
    q: &QTable,
    s: &DiscreteState,
    epsilon: f64,
    rng: &mut R,
) -> DiscreteAction {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        DiscreteAction::new(rng.gen_range(0..N_ACTIONS))
    } else {
        q.argmax(s)
    }
}

/// Weighted residual blend `(1 - alpha) * u_h + alpha * u_rl`.
pub fn combine_residual(u_h: &[f64; 6], u_rl: &[f64; 6], alpha: f64) -> [f64; 6] {
    debug_assert!((0.0..=1.0).contains(&alpha));
    let mut u = [0.0; 6];
    for i in 0..6 {
        u[i] = (1.0 - alpha) * u_h[i] + alpha * u_rl[i];
    }
    u
}

/// Expand a discrete action into a positional increment of amplitude
/// `lambda_scale`; rotational components are always zero.
pub fn rl_action_vector(a: DiscreteAction, lambda_scale: f64) -> [f64; 6] {
    debug_assert!(lambda_scale > 0.0);
    let (axis, sign) = a.direction();
    let mut u = [0.0; 6];
    u[axis] = sign * lambda_scale;
    u
}

/// Step reward: 1 on success, -2 on failure, otherwise a lateral-error and
/// step-count penalty, floored at the failure level.
pub fn compute_reward(s_xy: f64, step: u64, s_max: u64, outcome: Outcome) -> f64 {
    debug_assert!(step <= s_max);
    match outcome {
        Outcome::Success => 1.0,
        Outcome::Failed => -2.0,
        Outcome::Ongoing => (1.0 - 150.0 * s_xy - step as f64 / s_max as f64).max(-2.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::PoseError;
    use crate::rng::substream;
    use crate::sim::Wrench;
    use nalgebra::Vector3;

    fn sv(v: [f64; 6]) -> PoseError {
        PoseError {
            t_err: Vector3::new(v[0], v[1], v[2]),
            theta_u: Vector3::new(v[3], v[4], v[5]),
        }
    }

    fn wrench(f: [f64; 3], m: [f64; 3]) -> Wrench {
        Wrench {
            force: Vector3::from(f),
            moment: Vector3::from(m),
        }
    }

    #[test]
    fn pbvs_zero_and_substitution() {
        let id = UnitQuaternion::identity();
        let t = pbvs_velocity(&PoseError::zero(), &id, 1.0);
        assert_eq!(t.v, Vector3::zeros());
        assert_eq!(t.w, Vector3::zeros());

        let t = pbvs_velocity(&sv([0.01, 0.0, 0.0, 0.0, 0.0, 0.0]), &id, 1.0);
        assert!((t.v - Vector3::new(-0.01, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn pbvs_closed_loop_exponential_decay() {
        // Explicit-Euler servo against the analytic exp(-lambda t) envelope.
        let lambda = 1.0;
        let dt = 0.01;
        let id = UnitQuaternion::identity();
        let mut err = Vector3::new(0.020, 0.0, 0.0);
        for k in 1..=400 {
            let t = pbvs_velocity(
                &PoseError {
                    t_err: err,
                    theta_u: Vector3::zeros(),
                },
                &id,
                lambda,
            );
            err += t.v * dt;
            let predicted = 0.020 * (1.0 - lambda * dt).powi(k);
            assert!(
                (err.norm() - predicted).abs() <= 0.02 * predicted + 1e-12,
                "tick {k}: {} vs {predicted}",
                err.norm()
            );
        }
    }

    #[test]
    fn fixed_policy_values() {
        let kp = [1.0, 1.0, 0.3, 0.0, 0.0, 0.0];
        assert_eq!(fixed_policy(&PoseError::zero(), &kp), [0.0; 6]);
        let u = fixed_policy(&sv([0.002, 0.001, 0.004, 0.0, 0.0, 0.0]), &kp);
        let expect = [-0.002, -0.001, -0.0012, 0.0, 0.0, 0.0];
        for (a, b) in u.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        // Linearity.
        let u2 = fixed_policy(&sv([0.004, 0.002, 0.008, 0.0, 0.0, 0.0]), &kp);
        for (a, b) in u.iter().zip(u2.iter()) {
            assert!((2.0 * a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn encoding_thresholds() {
        let s = encode_state(&wrench([0.0, 0.0, -5.0], [0.0; 3]), 4.0, 0.4);
        assert_eq!(s.code, [0, 0, -1, 0, 0, 0]);

        let s = encode_state(&wrench([2.0, -3.0, 0.0], [0.1, 0.0, 0.0]), 4.0, 0.4);
        assert!(s.is_clear());

        let s = encode_state(&wrench([5.0, 0.0, -6.0], [0.0, -1.0, 0.0]), 4.0, 0.4);
        assert_eq!(s.code, [1, 0, -1, 0, -1, 0]);
        assert_eq!(s.index, 275);
    }

    #[test]
    fn belief_cases() {
        let clear = encode_state(&wrench([0.0; 3], [0.0; 3]), 4.0, 0.4);
        assert!(belief(&clear, &wrench([0.0; 3], [0.0; 3]), 0.4));

        let w = wrench([0.0, 0.0, -20.0], [0.0, 1.0, 0.0]);
        let s = encode_state(&w, 4.0, 0.4);
        assert!(belief(&s, &w, 0.4));

        let w = wrench([0.0, 0.0, -5.0], [0.1, 0.2, 0.0]);
        let s = encode_state(&w, 4.0, 0.4);
        assert!(!belief(&s, &w, 0.4));
    }

    #[test]
    fn selection_greedy_ties_and_uniform() {
        let mut q = QTable::zeros();
        let s = DiscreteState::from_index(3);
        q.values[3] = [0.0, 0.0, 5.0, 0.0, 0.0, 0.0];
        let mut rng = substream(5, "policy", 0);
        assert_eq!(select_action(&q, &s, 0.0, &mut rng).id, 2);

        let q = QTable::zeros();
        assert_eq!(select_action(&q, &s, 0.0, &mut rng).id, 0);

        // At epsilon = 1 the histogram is uniform within a 3-sigma binomial band.
        let mut counts = [0usize; 6];
        let n = 10_000;
        for _ in 0..n {
            counts[select_action(&q, &s, 1.0, &mut rng).id] += 1;
        }
        let p = 1.0 / 6.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!(
                (c as f64 - n as f64 * p).abs() < 3.0 * sigma,
                "histogram {counts:?}"
            );
        }
    }

    #[test]
    fn residual_blend_and_action_vectors() {
        let u_h = [2.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let u_rl = [0.0, 2.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(
            combine_residual(&u_h, &u_rl, 0.5),
            [1.0, 1.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(combine_residual(&u_h, &u_rl, 0.0), u_h);
        assert_eq!(combine_residual(&u_h, &u_rl, 1.0), u_rl);

        let v = rl_action_vector(DiscreteAction::new(0), 0.0002);
        assert_eq!(v, [0.0002, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let v = rl_action_vector(DiscreteAction::new(5), 0.0002);
        assert_eq!(v, [0.0, 0.0, -0.0002, 0.0, 0.0, 0.0]);
        // All six distinct with l1 norm lambda.
        let mut seen = Vec::new();
        for a in DiscreteAction::all() {
            let v = rl_action_vector(a, 0.0002);
            let l1: f64 = v.iter().map(|x| x.abs()).sum();
            assert!((l1 - 0.0002).abs() < 1e-18);
            assert!(!seen.contains(&v));
            seen.push(v);
        }
    }

    #[test]
    fn reward_cases() {
        assert_eq!(compute_reward(0.0, 1, 50, Outcome::Success), 1.0);
        assert_eq!(compute_reward(0.0, 1, 50, Outcome::Failed), -2.0);
        let r = compute_reward(0.002, 5, 50, Outcome::Ongoing);
        assert!((r - 0.6).abs() < 1e-12);
        // Bounded in [-2, 1].
        for s_xy in [0.0, 0.002, 0.05, 1.0] {
            for step in [1u64, 10, 50] {
                let r = compute_reward(s_xy, step, 50, Outcome::Ongoing);
                assert!((-2.0..=1.0).contains(&r));
            }
        }
    }
}
