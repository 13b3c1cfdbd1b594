//! Learning stack: contact-state encoding, tabular Q-values, the visual
//! fixed policy, residual blending, and the episode loop with belief-gated
//! probing.

mod episode;
mod policy;
mod qtable;
mod train;

pub use episode::{
    EpisodeRngs,
    rough_locate, run_episode, EnvBundle, EpisodeLog, EpisodeOptions, Mode, RoughLocateError,
    StepRecord, VisualReading, VisualSensor,
};
pub use policy::{
    belief, combine_residual, compute_reward, encode_state, fixed_policy, pbvs_velocity,
    rl_action_vector, select_action,
};
pub use qtable::{q_update, QTable, QTableError};
pub use train::{train, TrainReport};

use serde::{Deserialize, Serialize};

/// Number of discrete contact states: each of the six wrench components maps
/// to {-1, 0, +1}.
pub const N_STATES: usize = 729;
/// Six positional actions: +/- moves along x, y, z.
pub const N_ACTIONS: usize = 6;

/// Ternary-encoded contact state and its table row index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiscreteState {
    pub code: [i8; 6],
    pub index: usize,
}

impl DiscreteState {
    /// Build from a sign code; the index is the base-3 expansion with digit i
    /// weighted by 3^i.
    pub fn from_code(code: [i8; 6]) -> Self {
        let mut index = 0usize;
        let mut weight = 1usize;
        for c in code {
            debug_assert!((-1..=1).contains(&c));
            index += (c + 1) as usize * weight;
            weight *= 3;
        }
        DiscreteState { code, index }
    }

    pub fn from_index(index: usize) -> Self {
        assert!(index < N_STATES);
        let mut code = [0i8; 6];
        let mut rest = index;
        for c in code.iter_mut() {
            *c = (rest % 3) as i8 - 1;
            rest /= 3;
        }
        DiscreteState { code, index }
    }

    /// The all-zero (no contact detected) state.
    pub fn clear() -> Self {
        DiscreteState::from_code([0; 6])
    }

    pub fn is_clear(&self) -> bool {
        self.code == [0; 6]
    }
}

/// One of the six positional unit actions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiscreteAction {
    pub id: usize,
}

impl DiscreteAction {
    pub fn new(id: usize) -> Self {
        assert!(id < N_ACTIONS);
        DiscreteAction { id }
    }

    /// Axis (0 = x, 1 = y, 2 = z) and sign of the move.
    pub fn direction(&self) -> (usize, f64) {
        let axis = self.id / 2;
        let sign = if self.id % 2 == 0 { 1.0 } else { -1.0 };
        (axis, sign)
    }

    pub fn all() -> impl Iterator<Item = DiscreteAction> {
        (0..N_ACTIONS).map(DiscreteAction::new)
    }
}

/// Agent hyperparameters. Defaults follow the experiment configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    /// Residual weight between the fixed policy (0) and the learned policy (1).
    pub alpha: f64,
    /// Fixed-policy gains on the six visual error components.
    pub k_p: [f64; 6],
    /// Amplitude of one discrete action (m).
    pub lambda_scale: f64,
    /// Discount factor.
    pub gamma: f64,
    /// Q-table learning rate.
    pub learning_rate: f64,
    /// Exploration rate at the start of training.
    pub epsilon_start: f64,
    /// Exploration rate at the end of training (evaluation uses 0).
    pub epsilon_final: f64,
    /// Contact force detection threshold (N).
    pub force_threshold: f64,
    /// Contact moment detection threshold (Nm).
    pub moment_threshold: f64,
    /// Maximum steps per episode (reward normalization uses this too).
    pub s_max: u64,
    /// Probe press force magnitude (N).
    pub probe_force: f64,
    /// Trajectory interpolation samples per agent step.
    pub interp_steps: usize,
    /// Execution noise on commanded increments (m, std dev per axis).
    pub exec_noise_sigma: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            alpha: 0.5,
            k_p: [1.0, 1.0, 0.3, 0.0, 0.0, 0.0],
            lambda_scale: 0.0005,
            gamma: 0.9,
            learning_rate: 0.1,
            epsilon_start: 0.3,
            epsilon_final: 0.05,
            force_threshold: 4.0,
            moment_threshold: 0.4,
            s_max: 50,
            probe_force: 25.0,
            interp_steps: 5,
            exec_noise_sigma: 1.5e-5,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err("alpha must be in [0, 1]".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err("gamma must be in (0, 1]".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err("learning rate must be in (0, 1]".into());
        }
        if self.force_threshold <= 0.0 || self.moment_threshold <= 0.0 {
            return Err("detection thresholds must be positive".into());
        }
        if self.lambda_scale <= 0.0 {
            return Err("action amplitude must be positive".into());
        }
        if self.s_max == 0 {
            return Err("s_max must be at least 1".into());
        }
        if self.interp_steps < 2 {
            return Err("interpolation needs at least 2 samples".into());
        }
        for e in [self.epsilon_start, self.epsilon_final] {
            if !(0.0..=1.0).contains(&e) {
                return Err("epsilon must be in [0, 1]".into());
            }
        }
        Ok(())
    }

    /// Linearly annealed exploration rate at `progress` in [0, 1].
    pub fn epsilon_at(&self, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        self.epsilon_start + (self.epsilon_final - self.epsilon_start) * p
    }
}
