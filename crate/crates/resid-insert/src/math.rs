//! Rigid-body pose algebra shared by the simulator, vision, and policies.
//!
//! A [`Pose`] is a translation plus a unit quaternion. All translations are in
//! meters and all angles in radians; conversion to millimeters or degrees only
//! happens at I/O boundaries.

use nalgebra::{UnitQuaternion, Vector3};

/// Re-normalize a unit quaternion that may have accumulated drift.
pub fn renorm(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

/// Rigid transform: rotation applied first, then translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub t: Vector3<f64>,
    pub q: UnitQuaternion<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            t: Vector3::zeros(),
            q: UnitQuaternion::identity(),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Pose {
            t: Vector3::new(x, y, z),
            q: UnitQuaternion::identity(),
        }
    }

    pub fn new(t: Vector3<f64>, q: UnitQuaternion<f64>) -> Self {
        Pose { t, q: renorm(q) }
    }

    /// Map a point from this pose's local frame to the parent frame.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.q * p + self.t
    }

    /// Map a point from the parent frame into this pose's local frame.
    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.q.inverse() * (p - self.t)
    }

    pub fn inverse(&self) -> Pose {
        let qi = self.q.inverse();
        Pose {
            t: -(qi * self.t),
            q: qi,
        }
    }
}

/// Translation plus axis-angle rotation error between two poses.
///
/// `theta_u` is the rotation axis scaled by the angle, with the angle in
/// `[0, pi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseError {
    pub t_err: Vector3<f64>,
    pub theta_u: Vector3<f64>,
}

impl PoseError {
    pub fn zero() -> Self {
        PoseError {
            t_err: Vector3::zeros(),
            theta_u: Vector3::zeros(),
        }
    }

    /// Stacked 6-vector `(t_err, theta_u)`.
    pub fn as_vec6(&self) -> [f64; 6] {
        [
            self.t_err.x, self.t_err.y, self.t_err.z,
            self.theta_u.x, self.theta_u.y, self.theta_u.z,
        ]
    }

    pub fn translation_norm(&self) -> f64 {
        self.t_err.norm()
    }

    pub fn rotation_angle(&self) -> f64 {
        self.theta_u.norm()
    }
}

/// Linear and angular velocity command.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Twist {
    pub v: Vector3<f64>,
    pub w: Vector3<f64>,
}

/// Compose two poses: `a` applied after `b` (`a ∘ b`).
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        t: a.q * b.t + a.t,
        q: renorm(a.q * b.q),
    }
}

/// Pose of `current` expressed in the frame of `target`.
///
/// The translation part is the position of `current`'s origin seen from
/// `target`; the rotation part, converted to axis-angle, is the remaining
/// rotation error. Two coincident poses give the zero error.
pub fn pose_error(current: &Pose, target: &Pose) -> PoseError {
    let rel = compose(&target.inverse(), current);
    PoseError {
        t_err: rel.t,
        theta_u: rotation_to_axis_angle(&rel.q),
    }
}

/// Relative pose of `current` in `target`'s frame (rotation kept as a quaternion).
pub fn relative_pose(current: &Pose, target: &Pose) -> Pose {
    compose(&target.inverse(), current)
}

/// Axis-angle vector of a unit quaternion, with angle in `[0, pi]`.
///
/// Continuous at the identity (returns the zero vector). At a half turn the
/// axis sign is ambiguous; the axis is flipped so that its largest-magnitude
/// component is positive, which keeps logs and tests deterministic.
pub fn rotation_to_axis_angle(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    // Force the scalar part non-negative so the angle lands in [0, pi].
    let qn = if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        *q
    };
    let vec = qn.vector().clone_owned();
    let sin_half = vec.norm();
    if sin_half < 1e-12 {
        return Vector3::zeros();
    }
    let angle = 2.0 * sin_half.atan2(qn.w);
    let mut axis = vec / sin_half;
    if (std::f64::consts::PI - angle).abs() < 1e-9 {
        let (mut bi, mut bv) = (0usize, axis.x.abs());
        for (i, c) in [axis.y.abs(), axis.z.abs()].iter().enumerate() {
            if *c > bv {
                bi = i + 1;
                bv = *c;
            }
        }
        if axis[bi] < 0.0 {
            axis = -axis;
        }
    }
    axis * angle
}

/// Inverse of [`rotation_to_axis_angle`].
pub fn axis_angle_to_rotation(theta_u: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*theta_u)
}

/// Linear translation / shortest-arc orientation interpolation.
///
/// Returns `steps` poses (`steps >= 1`); the first equals `from` and the last
/// equals `to`. Orientation interpolation takes the shorter great-circle arc,
/// so adjacent samples are separated by a constant angle.
pub fn interpolate_trajectory(from: &Pose, to: &Pose, steps: usize) -> Vec<Pose> {
    assert!(steps >= 1, "trajectory needs at least one sample");
    if steps == 1 {
        return vec![*to];
    }
    // Pick the quaternion sign that yields the short arc.
    let q_to = if from.q.coords.dot(&to.q.coords) < 0.0 {
        UnitQuaternion::new_unchecked(-to.q.into_inner())
    } else {
        to.q
    };
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let s = k as f64 / (steps - 1) as f64;
        let q = from
            .q
            .try_slerp(&q_to, s, 1e-12)
            .unwrap_or_else(|| {
                // Nearly identical orientations: normalized lerp is exact enough.
                UnitQuaternion::new_normalize(
                    from.q.into_inner().lerp(&q_to.into_inner(), s),
                )
            });
        out.push(Pose {
            t: from.t.lerp(&to.t, s),
            q,
        });
    }
    // Endpoints are exact by construction.
    out[0] = *from;
    let last = out.len() - 1;
    out[last] = Pose { t: to.t, q: q_to };
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn random_pose(u: [f64; 7]) -> Pose {
        let q = UnitQuaternion::new_normalize(nalgebra::Quaternion::new(
            u[3] + 0.1,
            u[4],
            u[5],
            u[6],
        ));
        Pose {
            t: Vector3::new(u[0], u[1], u[2]),
            q,
        }
    }

    #[test]
    fn compose_identity_and_inverse() {
        let p = Pose {
            t: Vector3::new(0.3, -0.2, 0.1),
            q: UnitQuaternion::from_scaled_axis(Vector3::new(0.4, -0.2, 0.9)),
        };
        let id = compose(&Pose::identity(), &p);
        assert_relative_eq!(id.t, p.t, epsilon = 1e-12);
        let round = compose(&p, &p.inverse());
        assert!(round.t.norm() < 1e-9);
        assert!(rotation_to_axis_angle(&round.q).norm() < 1e-9);
    }

    #[test]
    fn compose_pure_translations() {
        let a = Pose::from_translation(1.0, 0.0, 0.0);
        let b = Pose::from_translation(0.0, 2.0, 0.0);
        let c = compose(&a, &b);
        assert_relative_eq!(c.t, Vector3::new(1.0, 2.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn pose_error_coincident_and_translation() {
        let p = random_pose([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]);
        let e = pose_error(&p, &p);
        assert!(e.translation_norm() < 1e-12);
        assert!(e.rotation_angle() < 1e-12);

        let target = Pose::identity();
        let current = Pose::from_translation(0.003, 0.0, 0.0);
        let e = pose_error(&current, &target);
        assert_relative_eq!(e.t_err, Vector3::new(0.003, 0.0, 0.0), epsilon = 1e-15);
        assert_eq!(e.theta_u, Vector3::zeros());
    }

    /// Independent oracle: axis-angle from the rotation matrix trace/skew part,
    /// a different route than the quaternion components used by the
    /// implementation.
    fn matrix_log_oracle(q: &UnitQuaternion<f64>) -> Vector3<f64> {
        let m = q.to_rotation_matrix();
        let r = m.matrix();
        let cos_theta = ((r[(0, 0)] + r[(1, 1)] + r[(2, 2)] - 1.0) / 2.0).clamp(-1.0, 1.0);
        let theta = cos_theta.acos();
        if theta < 1e-9 {
            return Vector3::zeros();
        }
        let axis = Vector3::new(
            r[(2, 1)] - r[(1, 2)],
            r[(0, 2)] - r[(2, 0)],
            r[(1, 0)] - r[(0, 1)],
        ) / (2.0 * theta.sin());
        axis * theta
    }

    #[test]
    fn pose_error_quarter_turn_matches_matrix_log() {
        let target = Pose::identity();
        let current = Pose {
            t: Vector3::zeros(),
            q: UnitQuaternion::from_scaled_axis(Vector3::new(0.0, 0.0, PI / 2.0)),
        };
        let e = pose_error(&current, &target);
        let oracle = matrix_log_oracle(&current.q);
        assert_relative_eq!(e.theta_u, oracle, epsilon = 1e-9);
        assert_relative_eq!(e.theta_u.z, PI / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn axis_angle_basics() {
        assert_eq!(
            rotation_to_axis_angle(&UnitQuaternion::identity()),
            Vector3::zeros()
        );
        let half_turn = UnitQuaternion::from_scaled_axis(Vector3::new(PI, 0.0, 0.0));
        let aa = rotation_to_axis_angle(&half_turn);
        assert_relative_eq!(aa, Vector3::new(PI, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn axis_angle_round_trip_1000_random() {
        let mut rng = crate::rng::substream(42, "axis-angle-test", 0);
        use rand::Rng;
        for _ in 0..1000 {
            let q = UnitQuaternion::new_normalize(nalgebra::Quaternion::new(
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
            ));
            let back = axis_angle_to_rotation(&rotation_to_axis_angle(&q));
            // Equal up to global sign.
            let dot = back.coords.dot(&q.coords).abs();
            assert!(dot > 1.0 - 1e-9, "round trip drifted: dot = {dot}");
        }
    }

    #[test]
    fn interpolation_constant_poses_and_spacing() {
        let p = random_pose([0.0, 0.1, 0.2, 0.9, 0.1, 0.0, 0.3]);
        let traj = interpolate_trajectory(&p, &p, 5);
        assert_eq!(traj.len(), 5);
        for s in &traj {
            assert_relative_eq!(s.t, p.t, epsilon = 1e-15);
        }

        // 10 mm translation over 11 samples: consecutive x spaced by 1 mm.
        let from = Pose::identity();
        let to = Pose::from_translation(0.010, 0.0, 0.0);
        let traj = interpolate_trajectory(&from, &to, 11);
        for w in traj.windows(2) {
            assert_relative_eq!(w[1].t.x - w[0].t.x, 0.001, epsilon = 1e-15);
        }
        assert_eq!(traj[0].t, from.t);
        assert_eq!(traj[10].t, to.t);
    }

    #[test]
    fn interpolation_uniform_rotation_steps() {
        let from = Pose::identity();
        let to = Pose {
            t: Vector3::zeros(),
            q: UnitQuaternion::from_scaled_axis(Vector3::new(0.0, 0.0, PI / 2.0)),
        };
        let traj = interpolate_trajectory(&from, &to, 9);
        let expected = (PI / 2.0) / 8.0;
        for w in traj.windows(2) {
            // Oracle: angle between consecutive quaternions from their dot product.
            let dot = w[0].q.coords.dot(&w[1].q.coords).abs().clamp(-1.0, 1.0);
            let angle = 2.0 * dot.acos();
            assert!((angle - expected).abs() < 1e-6, "step angle {angle}");
        }
    }

    proptest! {
        #[test]
        fn prop_unit_norm_and_zero_self_error(u in proptest::array::uniform7(-1.0f64..1.0)) {
            let p = random_pose(u);
            prop_assert!((p.q.norm() - 1.0).abs() < 1e-9);
            let e = pose_error(&p, &p);
            prop_assert!(e.translation_norm() < 1e-9);
            prop_assert!(e.rotation_angle() < 1e-9);
        }

        #[test]
        fn prop_compose_associative(
            a in proptest::array::uniform7(-1.0f64..1.0),
            b in proptest::array::uniform7(-1.0f64..1.0),
            c in proptest::array::uniform7(-1.0f64..1.0),
        ) {
            let (a, b, c) = (random_pose(a), random_pose(b), random_pose(c));
            let left = compose(&compose(&a, &b), &c);
            let right = compose(&a, &compose(&b, &c));
            prop_assert!((left.t - right.t).norm() < 1e-9);
            prop_assert!(left.q.angle_to(&right.q) < 1e-9);
        }

        #[test]
        fn prop_interpolation_collinear(
            u in proptest::array::uniform7(-1.0f64..1.0),
            v in proptest::array::uniform7(-1.0f64..1.0),
            steps in 2usize..12,
        ) {
            let from = random_pose(u);
            let to = random_pose(v);
            let traj = interpolate_trajectory(&from, &to, steps);
            prop_assert_eq!(traj.len(), steps);
            prop_assert!((traj[0].t - from.t).norm() < 1e-12);
            prop_assert!((traj[steps - 1].t - to.t).norm() < 1e-12);
            let seg = to.t - from.t;
            for s in &traj {
                // Collinearity: the cross product of (sample - from) with the
                // segment stays at rounding level.
                let d = s.t - from.t;
                prop_assert!(d.cross(&seg).norm() < 1e-12 * (1.0 + seg.norm()));
                prop_assert!((s.q.norm() - 1.0).abs() < 1e-9);
            }
        }
    }
}
