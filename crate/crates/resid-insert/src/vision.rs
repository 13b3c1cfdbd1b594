//! Synthetic eye-in-hand camera.
//!
//! Labeled 3-D feature points are projected through a pinhole model with
//! Gaussian pixel and depth noise, back-projected to camera-frame points, and
//! aligned against a taught target set with a closed-form least-squares rigid
//! fit. The fit's translation and axis-angle rotation form the visual state
//! that drives the fixed policy.

use crate::math::{pose_error, Pose, PoseError};
use nalgebra::{Matrix3, UnitQuaternion, Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Pinhole camera with its mounting pose on the end effector.
#[derive(Clone, Debug)]
pub struct CameraModel {
    /// Focal length in pixels.
    pub f: f64,
    /// Principal point (pixels).
    pub principal_point: Vector2<f64>,
    /// Camera pose in the end-effector frame.
    pub extrinsic: Pose,
    /// Pixel measurement noise std dev.
    pub pixel_noise_sigma: f64,
    /// Depth measurement noise std dev (m).
    pub depth_noise_sigma: f64,
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), String> {
        if self.f <= 0.0 {
            return Err("focal length must be positive".into());
        }
        if self.pixel_noise_sigma < 0.0 || self.depth_noise_sigma < 0.0 {
            return Err("noise sigmas must be non-negative".into());
        }
        Ok(())
    }

    /// World pose of the camera for a given end-effector pose.
    pub fn camera_pose(&self, ee_pose: &Pose) -> Pose {
        crate::math::compose(ee_pose, &self.extrinsic)
    }
}

impl Default for CameraModel {
    fn default() -> Self {
        // Down-looking camera offset to the side of the gripper.
        let look_down = UnitQuaternion::from_scaled_axis(Vector3::new(std::f64::consts::PI, 0.0, 0.0));
        CameraModel {
            f: 600.0,
            principal_point: Vector2::zeros(),
            extrinsic: Pose::new(Vector3::new(0.0, 0.06, 0.06), look_down),
            pixel_noise_sigma: 0.5,
            depth_noise_sigma: 0.002,
        }
    }
}

/// One measured image feature: pixel coordinates plus sensed depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageFeature {
    pub label: u32,
    pub u: f64,
    pub v: f64,
    pub z: f64,
}

/// Ordered, labeled 3-D points in the camera frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub points: Vec<(u32, Vector3<f64>)>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum VisionError {
    #[error("feature {label} lies behind the camera (Z = {z:.4} m)")]
    BehindCamera { label: u32, z: f64 },
    #[error("feature {label} has non-positive depth {z:.4} m")]
    InvalidDepth { label: u32, z: f64 },
    #[error("feature sets do not share labels or have fewer than 3 points")]
    LabelMismatch,
    #[error("feature geometry is degenerate (collinear points)")]
    DegenerateGeometry,
}

/// Project labeled world points into the camera at `camera_pose`.
///
/// Applies pixel and depth noise from `rng`. Fails if any point is at or
/// behind the image plane.
pub fn project_features<R: Rng>(
    camera: &CameraModel,
    world_points: &[(u32, Vector3<f64>)],
    camera_pose: &Pose,
    rng: &mut R,
) -> Result<Vec<ImageFeature>, VisionError> {
    let px = Normal::new(0.0, camera.pixel_noise_sigma.max(0.0)).expect("pixel sigma");
    let dz = Normal::new(0.0, camera.depth_noise_sigma.max(0.0)).expect("depth sigma");
    let mut out = Vec::with_capacity(world_points.len());
    for (label, p_w) in world_points {
        let p_c = camera_pose.inverse_transform_point(p_w);
        if p_c.z <= 0.0 {
            return Err(VisionError::BehindCamera {
                label: *label,
                z: p_c.z,
            });
        }
        let noisy = |n: &Normal<f64>, r: &mut R| if camera.pixel_noise_sigma > 0.0 || camera.depth_noise_sigma > 0.0 { n.sample(r) } else { 0.0 };
        out.push(ImageFeature {
            label: *label,
            u: camera.f * p_c.x / p_c.z + camera.principal_point.x + noisy(&px, rng),
            v: camera.f * p_c.y / p_c.z + camera.principal_point.y + noisy(&px, rng),
            z: p_c.z + noisy(&dz, rng),
        });
    }
    Ok(out)
}

/// Recover camera-frame 3-D points from pixel/depth measurements.
pub fn back_project(
    features: &[ImageFeature],
    camera: &CameraModel,
) -> Result<FeatureSet, VisionError> {
    let mut points = Vec::with_capacity(features.len());
    for ft in features {
        if ft.z <= 0.0 {
            return Err(VisionError::InvalidDepth {
                label: ft.label,
                z: ft.z,
            });
        }
        let x = ft.z / camera.f * (ft.u - camera.principal_point.x);
        let y = ft.z / camera.f * (ft.v - camera.principal_point.y);
        points.push((ft.label, Vector3::new(x, y, ft.z)));
    }
    Ok(FeatureSet { points })
}

/// Least-squares rigid transform mapping `current` points onto `target`
/// points (rotation and translation, no scale).
///
/// Correspondences are matched by label. The result expresses the current
/// camera frame in the target camera frame.
pub fn estimate_transform(current: &FeatureSet, target: &FeatureSet) -> Result<Pose, VisionError> {
    if current.len() < 3 || current.len() != target.len() {
        return Err(VisionError::LabelMismatch);
    }
    let mut pairs = Vec::with_capacity(current.len());
    for (label, p) in &current.points {
        let Some((_, q)) = target.points.iter().find(|(l, _)| l == label) else {
            return Err(VisionError::LabelMismatch);
        };
        pairs.push((*p, *q));
    }

    let n = pairs.len() as f64;
    let c_cur: Vector3<f64> = pairs.iter().map(|(p, _)| p).sum::<Vector3<f64>>() / n;
    let c_tgt: Vector3<f64> = pairs.iter().map(|(_, q)| q).sum::<Vector3<f64>>() / n;

    let mut h = Matrix3::zeros();
    let mut spread = 0.0f64;
    for (p, q) in &pairs {
        let dp = p - c_cur;
        let dq = q - c_tgt;
        h += dq * dp.transpose();
        spread += dp.norm_squared();
    }

    // Collinearity check: the centered points must span at least a plane.
    let svd_pts = {
        let mut m = Matrix3::zeros();
        for (p, _) in &pairs {
            let d = p - c_cur;
            m += d * d.transpose();
        }
        m.symmetric_eigenvalues()
    };
    let mut eig: Vec<f64> = svd_pts.iter().cloned().collect();
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if spread <= 0.0 || eig[1] <= 1e-12 * eig[0].max(1e-300) {
        return Err(VisionError::DegenerateGeometry);
    }

    let svd = h.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * v_t;
    let rot = UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(r));
    let t = c_tgt - r * c_cur;
    Ok(Pose::new(t, rot))
}

/// RMS alignment residual of an estimated transform (diagnostic).
pub fn alignment_residual(current: &FeatureSet, target: &FeatureSet, transform: &Pose) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (label, p) in &current.points {
        if let Some((_, q)) = target.points.iter().find(|(l, _)| l == label) {
            sum += (transform.transform_point(p) - q).norm_squared();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

/// Visual state: translation and axis-angle rotation of the current view
/// relative to the taught target view.
pub fn visual_state(current: &FeatureSet, target: &FeatureSet) -> Result<PoseError, VisionError> {
    let rel = estimate_transform(current, target)?;
    // The transform already maps current into target coordinates, so the
    // pose error is taken against the identity.
    Ok(pose_error(&rel, &Pose::identity()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_relative_eq;

    fn noise_free_camera() -> CameraModel {
        CameraModel {
            pixel_noise_sigma: 0.0,
            depth_noise_sigma: 0.0,
            ..CameraModel::default()
        }
    }

    fn simple_camera() -> CameraModel {
        // Camera at the world origin looking along +z (identity extrinsfocal).
        CameraModel {
            f: 600.0,
            principal_point: Vector2::zeros(),
            extrinsic: Pose::identity(),
            pixel_noise_sigma: 0.0,
            depth_noise_sigma: 0.0,
        }
    }

    #[test]
    fn optical_axis_and_direct_substitution() {
        let cam = simple_camera();
        let pose = Pose::identity();
        let mut rng = substream(1, "vision", 0);
        let pts = vec![
            (0u32, Vector3::new(0.0, 0.0, 0.3)),
            (1u32, Vector3::new(0.03, 0.0, 0.3)),
        ];
        let img = project_features(&cam, &pts, &pose, &mut rng).unwrap();
        assert_relative_eq!(img[0].u, 0.0, epsilon = 1e-12);
        assert_relative_eq!(img[0].v, 0.0, epsilon = 1e-12);
        assert_relative_eq!(img[0].z, 0.3, epsilon = 1e-12);
        assert_relative_eq!(img[1].u, 60.0, epsilon = 1e-12);

        let back = back_project(&img, &cam).unwrap();
        assert_relative_eq!(back.points[1].1.x, 0.03, epsilon = 1e-12);
        assert_relative_eq!(back.points[0].1, pts[0].1, epsilon = 1e-12);
    }

    #[test]
    fn behind_camera_and_invalid_depth() {
        let cam = simple_camera();
        let mut rng = substream(1, "vision", 1);
        let err = project_features(
            &cam,
            &[(0, Vector3::new(0.0, 0.0, -0.1))],
            &Pose::identity(),
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, VisionError::BehindCamera { .. }));

        let err = back_project(
            &[ImageFeature {
                label: 0,
                u: 0.0,
                v: 0.0,
                z: 0.0,
            }],
            &cam,
        )
        .unwrap_err();
        assert!(matches!(err, VisionError::InvalidDepth { .. }));
    }

    #[test]
    fn projection_round_trip_random_clouds() {
        let cam = noise_free_camera();
        let mut rng = substream(1, "vision", 2);
        use rand::Rng;
        for trial in 0..50 {
            let ee = Pose::from_translation(
                rng.gen::<f64>() * 0.02 - 0.01,
                rng.gen::<f64>() * 0.02 - 0.01,
                0.04 + rng.gen::<f64>() * 0.02,
            );
            let cam_pose = cam.camera_pose(&ee);
            let pts: Vec<(u32, Vector3<f64>)> = (0..8)
                .map(|i| {
                    (
                        i,
                        Vector3::new(
                            rng.gen::<f64>() * 0.1 - 0.05,
                            rng.gen::<f64>() * 0.02 - 0.01,
                            rng.gen::<f64>() * 0.002,
                        ),
                    )
                })
                .collect();
            let img = project_features(&cam, &pts, &cam_pose, &mut rng).unwrap();
            let back = back_project(&img, &cam).unwrap();
            for ((label, p_w), (blabel, p_c)) in pts.iter().zip(back.points.iter()) {
                assert_eq!(label, blabel);
                let expect = cam_pose.inverse_transform_point(p_w);
                assert!(
                    (expect - p_c).norm() < 1e-12,
                    "trial {trial}: {expect:?} vs {p_c:?}"
                );
            }
        }
    }

    #[test]
    fn transform_identity_and_translation() {
        let pts = FeatureSet {
            points: (0..5)
                .map(|i| {
                    (
                        i,
                        Vector3::new(i as f64 * 0.01, (i % 2) as f64 * 0.02, 0.3 + i as f64 * 0.001),
                    )
                })
                .collect(),
        };
        let id = estimate_transform(&pts, &pts).unwrap();
        assert!(id.t.norm() < 1e-12);
        assert!(id.q.angle() < 1e-12);

        let shifted = FeatureSet {
            points: pts
                .points
                .iter()
                .map(|(l, p)| (*l, p + Vector3::new(0.002, 0.0, 0.0)))
                .collect(),
        };
        let t = estimate_transform(&pts, &shifted).unwrap();
        assert_relative_eq!(t.t, Vector3::new(0.002, 0.0, 0.0), epsilon = 1e-12);
        assert!(t.q.angle() < 1e-12);

        let sv = visual_state(&pts, &shifted).unwrap();
        assert_relative_eq!(sv.t_err, Vector3::new(0.002, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn synthesize_and_recover_rotation() {
        let mut rng = substream(1, "vision", 3);
        use rand::Rng;
        for _ in 0..100 {
            let axis = Vector3::new(
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
            );
            let angle = rng.gen::<f64>() * 0.5; // up to ~30 degrees
            let q = UnitQuaternion::from_scaled_axis(axis.normalize() * angle);
            let t = Vector3::new(
                rng.gen::<f64>() * 0.01,
                rng.gen::<f64>() * 0.01,
                rng.gen::<f64>() * 0.01,
            );
            let xf = Pose::new(t, q);
            let current = FeatureSet {
                points: (0..8)
                    .map(|i| {
                        (
                            i,
                            Vector3::new(
                                rng.gen::<f64>() * 0.1,
                                rng.gen::<f64>() * 0.1,
                                0.2 + rng.gen::<f64>() * 0.1,
                            ),
                        )
                    })
                    .collect(),
            };
            let target = FeatureSet {
                points: current
                    .points
                    .iter()
                    .map(|(l, p)| (*l, xf.transform_point(p)))
                    .collect(),
            };
            let est = estimate_transform(&current, &target).unwrap();
            assert!(est.q.angle_to(&q) < 1e-9, "rotation drift {}", est.q.angle_to(&q));
            assert!((est.t - t).norm() < 1e-9);
            // Proper rotation, not a reflection.
            let det = est.q.to_rotation_matrix().matrix().determinant();
            assert!((det - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn collinear_points_rejected() {
        let line = FeatureSet {
            points: (0..5)
                .map(|i| (i, Vector3::new(i as f64 * 0.01, 0.0, 0.3)))
                .collect(),
        };
        assert_eq!(
            estimate_transform(&line, &line).unwrap_err(),
            VisionError::DegenerateGeometry
        );
    }

    #[test]
    fn visual_state_translation_equivariance() {
        let base = FeatureSet {
            points: (0..6)
                .map(|i| {
                    (
                        i,
                        Vector3::new(
                            (i as f64 * 1.7).sin() * 0.05,
                            (i as f64 * 2.3).cos() * 0.05,
                            0.25 + 0.001 * i as f64,
                        ),
                    )
                })
                .collect(),
        };
        let target = FeatureSet {
            points: base
                .points
                .iter()
                .map(|(l, p)| (*l, p + Vector3::new(0.001, -0.002, 0.0005)))
                .collect(),
        };
        let sv0 = visual_state(&base, &target).unwrap();
        let shift = Vector3::new(0.01, 0.02, -0.005);
        let base_s = FeatureSet {
            points: base.points.iter().map(|(l, p)| (*l, p + shift)).collect(),
        };
        let target_s = FeatureSet {
            points: target.points.iter().map(|(l, p)| (*l, p + shift)).collect(),
        };
        let sv1 = visual_state(&base_s, &target_s).unwrap();
        assert!((sv0.t_err - sv1.t_err).norm() < 1e-12);
        assert!((sv0.theta_u - sv1.theta_u).norm() < 1e-12);
    }
}
