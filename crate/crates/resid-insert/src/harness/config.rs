//! Experiment configuration: scenario presets, noise knobs, and the
//! key = value config file.

use super::spiral::SpiralConfig;
use crate::agent::AgentConfig;
use crate::math::Pose;
use crate::sim::{ComplianceParams, SlotGeometry};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Geometry and camera preset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    RamSlot,
    SsdSlot,
}

impl Default for ScenarioKind {
    fn default() -> Self {
        ScenarioKind::RamSlot
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ram_slot" => Ok(ScenarioKind::RamSlot),
            "ssd_slot" => Ok(ScenarioKind::SsdSlot),
            other => Err(format!("unknown scenario {other:?}")),
        }
    }
}

/// Evaluation conditions: the ablation set and the classical baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Visual residual policy with probing.
    Full,
    /// Learned policy only (residual weight 1).
    NoVision,
    /// Visual fixed policy only (residual weight 0).
    NoRl,
    /// Uniformly random action-value table.
    RandomRl,
    /// Probe disabled; random action when the state is unclear.
    NoProbe,
    /// Taught pose, straight descent.
    TaughtDirect,
    /// Taught pose, spiral search.
    TaughtSpiral,
    /// Vision-corrected pose, straight descent.
    VisionDirect,
    /// Vision-corrected pose, spiral search.
    VisionSpiral,
}

impl Condition {
    pub fn label(&self) -> &'static str {
        match self {
            Condition::Full => "full",
            Condition::NoVision => "no_vision",
            Condition::NoRl => "no_rl",
            Condition::RandomRl => "random_rl",
            Condition::NoProbe => "no_probe",
            Condition::TaughtDirect => "taught_direct",
            Condition::TaughtSpiral => "taught_spiral",
            Condition::VisionDirect => "vision_direct",
            Condition::VisionSpiral => "vision_spiral",
        }
    }

    pub const ABLATION: [Condition; 5] = [
        Condition::Full,
        Condition::NoVision,
        Condition::NoRl,
        Condition::RandomRl,
        Condition::NoProbe,
    ];

    pub const COMPARISON: [Condition; 5] = [
        Condition::TaughtDirect,
        Condition::TaughtSpiral,
        Condition::VisionDirect,
        Condition::VisionSpiral,
        Condition::Full,
    ];
}

impl std::str::FromStr for Condition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let all = [
            Condition::Full,
            Condition::NoVision,
            Condition::NoRl,
            Condition::RandomRl,
            Condition::NoProbe,
            Condition::TaughtDirect,
            Condition::TaughtSpiral,
            Condition::VisionDirect,
            Condition::VisionSpiral,
        ];
        all.iter()
            .find(|c| c.label() == s)
            .copied()
            .ok_or_else(|| format!("unknown baseline {s:?}"))
    }
}

/// Camera noise and calibration realism knobs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct VisionConfig {
    /// Pixel noise of the close (detailed) view.
    pub detail_pixel_sigma: f64,
    /// Pixel noise of the far (global) view used for rough location.
    pub rough_pixel_sigma: f64,
    /// Depth sensing noise (m).
    pub depth_sigma: f64,
    /// Per-trial systematic pixel bias, scaled per meter of board
    /// displacement (captures uncompensated viewpoint/calibration drift).
    pub sys_px_bias_per_m: f64,
    /// Frames averaged for the one-shot correction of the vision baselines.
    pub correction_frames: usize,
    /// Focal length (pixels).
    pub focal_px: f64,
}

impl Default for VisionConfig {
    fn default() -> Self {
        VisionConfig {
            detail_pixel_sigma: 0.5,
            rough_pixel_sigma: 1.0,
            depth_sigma: 2e-5,
            sys_px_bias_per_m: 30.0,
            correction_frames: 10,
            focal_px: 600.0,
        }
    }
}

/// Rough-location servo settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RoughConfig {
    /// Servo gain (1/s).
    pub lambda_gain: f64,
    /// Integration step (s).
    pub dt: f64,
    /// Convergence tolerance on the translation error (m).
    pub tolerance: f64,
    /// Tick budget before reporting no convergence.
    pub max_ticks: usize,
}

impl Default for RoughConfig {
    fn default() -> Self {
        RoughConfig {
            lambda_gain: 1.0,
            dt: 0.02,
            tolerance: 0.0005,
            max_ticks: 3000,
        }
    }
}

/// Full experiment configuration; every field has a default so a config file
/// only needs the overrides.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    pub trials: usize,
    pub max_steps: u64,
    /// Initial lateral error range for the ablation protocol (m).
    pub initial_error_range: (f64, f64),
    /// Board displacement magnitude range for "move the board" trials (m).
    pub board_offset_range: (f64, f64),
    pub seed: u64,
    pub train_episodes: usize,
    /// Evaluate trials in parallel (aggregation is order-independent).
    pub parallel: bool,
    /// Hover height of the taught contact-phase start pose (m).
    pub hover_height: f64,
    /// Height of the taught global viewpoint above the board (m).
    pub global_view_height: f64,
    /// Straight-descent increment of the classical baselines (m per step).
    pub descent_step: f64,
    pub agent: AgentConfig,
    pub compliance: ComplianceParams,
    pub vision: VisionConfig,
    pub spiral: SpiralConfig,
    pub rough: RoughConfig,
    /// Geometry override; when absent the scenario preset applies.
    pub geometry: Option<SlotGeometry>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: ScenarioKind::RamSlot,
            trials: 200,
            max_steps: 10,
            initial_error_range: (0.002, 0.003),
            board_offset_range: (0.010, 0.030),
            seed: 7,
            train_episodes: 500,
            parallel: true,
            hover_height: 0.0003,
            global_view_height: 0.25,
            descent_step: 0.001,
            agent: AgentConfig::default(),
            compliance: ComplianceParams::default(),
            vision: VisionConfig::default(),
            spiral: SpiralConfig::default(),
            rough: RoughConfig::default(),
            geometry: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ExperimentConfig {
    /// Load from a `key = value` config file with section headers, or the
    /// built-in defaults when `path` is the literal `default`.
    pub fn load(path: &str) -> Result<Self, ConfigError> {
        let cfg = if path == "default" {
            ExperimentConfig::default()
        } else {
            let text = std::fs::read_to_string(Path::new(path)).map_err(|source| {
                ConfigError::Io {
                    path: path.to_string(),
                    source,
                }
            })?;
            toml::from_str(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |m: String| ConfigError::Invalid(m);
        if self.trials == 0 {
            return Err(inv("trials must be at least 1".into()));
        }
        if self.max_steps == 0 {
            return Err(inv("max_steps must be at least 1".into()));
        }
        for (lo, hi) in [self.initial_error_range, self.board_offset_range] {
            if lo < 0.0 || hi < lo {
                return Err(inv("ranges must be non-negative and ordered".into()));
            }
        }
        if self.train_episodes == 0 {
            return Err(inv("train_episodes must be at least 1".into()));
        }
        if self.hover_height < 0.0 {
            return Err(inv("hover_height must be non-negative".into()));
        }
        if self.descent_step <= 0.0 {
            return Err(inv("descent_step must be positive".into()));
        }
        self.agent.validate().map_err(inv)?;
        self.compliance.validate().map_err(inv)?;
        self.spiral.validate().map_err(inv)?;
        self.geometry().validate().map_err(inv)?;
        if self.vision.detail_pixel_sigma < 0.0
            || self.vision.rough_pixel_sigma < 0.0
            || self.vision.depth_sigma < 0.0
            || self.vision.sys_px_bias_per_m < 0.0
        {
            return Err(inv("vision noise parameters must be non-negative".into()));
        }
        if self.vision.correction_frames == 0 {
            return Err(inv("correction_frames must be at least 1".into()));
        }
        if self.vision.focal_px <= 0.0 {
            return Err(inv("focal length must be positive".into()));
        }
        Ok(())
    }

    /// Scenario geometry with no board displacement.
    pub fn geometry(&self) -> SlotGeometry {
        if let Some(g) = &self.geometry {
            return g.clone();
        }
        match self.scenario {
            ScenarioKind::RamSlot => SlotGeometry::default(),
            ScenarioKind::SsdSlot => SlotGeometry {
                slot_length: 0.067,
                slot_width: 0.0022,
                depth: 0.003,
                ram_length: 0.0666,
                ram_width: 0.0020,
                ram_height: 0.022,
                slot_pose: Pose::identity(),
                board_offset: Pose::identity(),
            },
        }
    }

    /// Labeled feature points on and around the slot, in the slot frame.
    ///
    /// Four opening corners, two latch bosses past the short ends (slightly
    /// raised, which keeps the cloud non-coplanar), and two board fiducials
    /// well off the slot axis so the fit is conditioned across both axes.
    pub fn feature_points(&self) -> Vec<(u32, Vector3<f64>)> {
        let g = self.geometry();
        let hx = g.slot_length / 2.0;
        let hy = g.slot_width / 2.0;
        vec![
            (0, Vector3::new(hx, hy, 0.0)),
            (1, Vector3::new(hx, -hy, 0.0)),
            (2, Vector3::new(-hx, hy, 0.0)),
            (3, Vector3::new(-hx, -hy, 0.0)),
            (4, Vector3::new(hx + 0.004, 0.0, 0.0015)),
            (5, Vector3::new(-hx - 0.004, 0.0, 0.0015)),
            (6, Vector3::new(0.010, 0.012, 0.0)),
            (7, Vector3::new(-0.010, -0.012, 0.0)),
        ]
    }

    /// Taught end-effector hover pose over the nominal slot: part bottom at
    /// `hover_height` above the board.
    pub fn taught_hover(&self) -> Pose {
        let g = self.geometry();
        Pose::from_translation(0.0, 0.0, g.ram_height + self.hover_height)
    }

    /// Taught global viewpoint for the rough phase.
    pub fn taught_global(&self) -> Pose {
        let g = self.geometry();
        Pose::from_translation(0.0, 0.0, g.ram_height + self.global_view_height)
    }

    /// Recorded viewpoint-to-hover transform replayed after rough location.
    pub fn taught_offset(&self) -> Pose {
        crate::math::compose(&self.taught_global().inverse(), &self.taught_hover())
    }
}

pub fn resolve_seed(flag: Option<u64>) -> u64 {
    if let Some(s) = flag {
        return s;
    }
    if let Ok(v) = std::env::var("RESID_INSERT_SEED") {
        if let Ok(s) = v.trim().parse() {
            return s;
        }
    }
    ExperimentConfig::default().seed
}
