//! Training loop: seeded episodes with an annealed exploration rate.

use super::episode::{run_episode, EnvBundle, EpisodeOptions, EpisodeRngs, Mode};
use super::qtable::QTable;
use super::AgentConfig;
use crate::math::Pose;
use crate::rng::substream;
use crate::sim::sample_initial_condition;

/// Training summary: the learned table plus the per-episode reward curve.
pub struct TrainReport {
    pub qtable: QTable,
    pub episode_rewards: Vec<f64>,
    pub success_count: usize,
}

/// Train a fresh table for `episodes` episodes.
///
/// Initial conditions, exploration, and sensing noise all derive from
/// `master_seed` through named substreams, so a seed pins down the resulting
/// table bit-exactly.
pub fn train(
    env: &EnvBundle,
    config: &AgentConfig,
    hover: &Pose,
    initial_error_range: (f64, f64),
    episodes: usize,
    master_seed: u64,
) -> TrainReport {
    let mut qtable = QTable::zeros();
    let mut rewards = Vec::with_capacity(episodes);
    let mut successes = 0usize;

    for ep in 0..episodes {
        let progress = if episodes > 1 {
            ep as f64 / (episodes - 1) as f64
        } else {
            1.0
        };
        let options = EpisodeOptions {
            alpha: config.alpha,
            probe_enabled: true,
            random_on_unclear: false,
            max_steps: config.s_max,
            epsilon: config.epsilon_at(progress),
        };
        let mut world_rng = substream(master_seed, "world", ep as u64);
        let world = sample_initial_condition(
            &mut world_rng,
            initial_error_range,
            hover,
            master_seed,
        );
        let mut rngs = EpisodeRngs {
            noise: substream(master_seed, "noise", ep as u64),
            policy: substream(master_seed, "policy", ep as u64),
        };
        let log = run_episode(
            env,
            world,
            &mut qtable,
            config,
            &options,
            Mode::Train,
            &mut rngs,
        );
        if log.succeeded() {
            successes += 1;
        }
        rewards.push(log.steps.iter().map(|s| s.reward).sum());
    }

    TrainReport {
        qtable,
        episode_rewards: rewards,
        success_count: successes,
    }
}
