//! Per-trial environment assembly: geometry with board displacement, the
//! eye-in-hand camera rigs against their taught targets, and the systematic
//! measurement bias that grows with how far the board moved.

use super::config::ExperimentConfig;
use crate::agent::{VisualReading, VisualSensor};
use crate::math::{compose, Pose, PoseError};
use crate::sim::SlotGeometry;
use crate::vision::{
    back_project, estimate_transform, project_features, CameraModel, FeatureSet,
};
use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand_chacha::ChaCha8Rng;

/// Camera measurement pipeline against one taught target view.
pub struct VisionRig {
    camera: CameraModel,
    /// True feature positions in the world (board displacement applied).
    features_world: Vec<(u32, Vector3<f64>)>,
    /// Taught camera-frame feature set (recorded on the nominal board).
    target: FeatureSet,
    /// Systematic per-trial pixel bias (same every frame).
    bias_px: Vector2<f64>,
}

impl VisionRig {
    fn new(
        camera: CameraModel,
        features_world: Vec<(u32, Vector3<f64>)>,
        features_nominal: &[(u32, Vector3<f64>)],
        taught_ee: &Pose,
        bias_px: Vector2<f64>,
    ) -> Self {
        // Teach: record the exact camera-frame points from the taught pose.
        let cam_pose = camera.camera_pose(taught_ee);
        let target = FeatureSet {
            points: features_nominal
                .iter()
                .map(|(l, p)| (*l, cam_pose.inverse_transform_point(p)))
                .collect(),
        };
        VisionRig {
            camera,
            features_world,
            target,
            bias_px,
        }
    }
}

impl VisualSensor for VisionRig {
    fn measure(&self, ee_pose: &Pose, rng: &mut ChaCha8Rng) -> VisualReading {
        let cam_pose = self.camera.camera_pose(ee_pose);
        let mut img = project_features(&self.camera, &self.features_world, &cam_pose, rng)
            .expect("slot features visible from the eye-in-hand camera");
        for ft in img.iter_mut() {
            ft.u += self.bias_px.x;
            ft.v += self.bias_px.y;
        }
        let current = back_project(&img, &self.camera).expect("sensed depths positive");
        let rel = estimate_transform(&current, &self.target)
            .expect("feature geometry stays non-degenerate");
        let camera_err = PoseError {
            t_err: rel.t,
            theta_u: crate::math::rotation_to_axis_angle(&rel.q),
        };
        let r_ext = self.camera.extrinsic.q;
        let ee_err = PoseError {
            t_err: r_ext * camera_err.t_err,
            theta_u: r_ext * camera_err.theta_u,
        };
        VisualReading {
            camera: camera_err,
            ee: ee_err,
            rotation: rel.q,
        }
    }
}

/// Everything one trial needs: displaced geometry, both camera rigs, and the
/// taught poses.
pub struct TrialEnv {
    pub geom: SlotGeometry,
    pub detail_rig: VisionRig,
    pub rough_rig: VisionRig,
    /// Seated goal pose on the (possibly displaced) board.
    pub goal: Pose,
    /// Taught contact-phase start pose (nominal board).
    pub hover_nominal: Pose,
    /// Taught global viewpoint pose (nominal board).
    pub global_nominal: Pose,
    /// Recorded viewpoint-to-hover transform.
    pub taught_offset: Pose,
}

fn down_looking_camera(cfg: &ExperimentConfig, pixel_sigma: f64) -> CameraModel {
    let look_down =
        UnitQuaternion::from_scaled_axis(Vector3::new(std::f64::consts::PI, 0.0, 0.0));
    CameraModel {
        f: cfg.vision.focal_px,
        principal_point: Vector2::zeros(),
        extrinsic: Pose::new(Vector3::new(0.0, 0.06, 0.06), look_down),
        pixel_noise_sigma: pixel_sigma,
        depth_noise_sigma: cfg.vision.depth_sigma,
    }
}

/// Assemble the environment for one trial.
///
/// `board_offset` displaces the slot (and its features); `bias_px` is the
/// trial's systematic pixel bias, normally drawn with a standard deviation of
/// `sys_px_bias_per_m * |board_offset|`.
pub fn build_trial_env(
    cfg: &ExperimentConfig,
    board_offset: Vector2<f64>,
    bias_px: Vector2<f64>,
) -> TrialEnv {
    let mut geom = cfg.geometry();
    geom.board_offset = Pose::from_translation(board_offset.x, board_offset.y, 0.0);

    let features_nominal = cfg.feature_points();
    let slot_frame = geom.slot_frame_world();
    let features_world: Vec<(u32, Vector3<f64>)> = features_nominal
        .iter()
        .map(|(l, p)| (*l, slot_frame.transform_point(p)))
        .collect();

    // Teach targets are recorded on the nominal (undisplaced) board.
    let nominal_world: Vec<(u32, Vector3<f64>)> = features_nominal
        .iter()
        .map(|(l, p)| (*l, cfg.geometry().slot_pose.transform_point(p)))
        .collect();

    let goal = geom.seated_ee_pose();
    let hover_nominal = cfg.taught_hover();
    let global_nominal = cfg.taught_global();

    // The detailed view is taught at the seated goal pose, the global view
    // at the high viewpoint.
    let nominal_goal = cfg.geometry().seated_ee_pose();
    let detail_rig = VisionRig::new(
        down_looking_camera(cfg, cfg.vision.detail_pixel_sigma),
        features_world.clone(),
        &nominal_world,
        &nominal_goal,
        bias_px,
    );
    let rough_rig = VisionRig::new(
        down_looking_camera(cfg, cfg.vision.rough_pixel_sigma),
        features_world,
        &nominal_world,
        &global_nominal,
        bias_px,
    );

    TrialEnv {
        geom,
        detail_rig,
        rough_rig,
        goal,
        hover_nominal,
        global_nominal,
        taught_offset: compose(&global_nominal.inverse(), &hover_nominal),
    }
}
