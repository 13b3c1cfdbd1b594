//! Experiment harness: configuration, scenario assembly, protocols,
//! persistence, and the command-line interface.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod results;
pub mod scenario;
pub mod spiral;

pub use cli::cli_main;
pub use config::{Condition, ConfigError, ExperimentConfig, ScenarioKind, VisionConfig};
pub use experiments::{
    run_ablation, run_comparison, run_demo, run_eval, train_policy, ABLATION_ERROR_RANGE,
    ABLATION_MAX_STEPS, COMPARISON_STEP_CEILING,
};
pub use results::{render_log, save_log, save_results, ResultRow, ResultTable};
pub use scenario::{build_trial_env, TrialEnv, VisionRig};
pub use spiral::{dwells_to_radius, spiral_search_policy, SpiralConfig};
