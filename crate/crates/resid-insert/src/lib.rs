//! Deterministic quasi-static simulation of a tight-clearance insertion task,
//! with a visual-servo fixed policy, a tabular contact-state residual policy,
//! and force-probe disambiguation of ambiguous contact states.
//!
//! The crate is organized as a library with four layers:
//!
//! - [`math`]: rigid-body poses, axis-angle conversion, and the trajectory
//!   interpolator.
//! - [`sim`]: the compliant contact world (slot geometry, equilibrium solve,
//!   investigative presses, outcome checks).
//! - [`vision`]: the synthetic eye-in-hand camera and rigid feature
//!   alignment.
//! - [`agent`]: contact-state encoding, tabular action values, residual
//!   blending, and the episode/training loops.
//! - [`harness`]: experiment configuration, the evaluation protocols, result
//!   persistence, and the CLI.
//!
//! Every random draw flows from one master seed through named substreams
//! ([`rng::substream`]), so experiments replay bit-identically.
//!
//! See the `examples/` directory for one runnable example per capability and
//! the README for the experiment workflows.

pub mod agent;
pub mod harness;
pub mod math;
pub mod rng;
pub mod sim;
pub mod vision;

pub use agent::{AgentConfig, QTable};
pub use harness::{ExperimentConfig, ResultTable};
pub use math::{Pose, PoseError, Twist};
pub use sim::{ComplianceParams, SlotGeometry, WorldState, Wrench};
