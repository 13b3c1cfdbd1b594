//! Archimedean spiral search pattern used by the classical baselines.

use serde::{Deserialize, Serialize};

/// Spiral sizing. The pitch (radial growth per turn) defaults to the slot
/// clearance so consecutive passes overlap the insertion basin.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SpiralConfig {
    /// Radial growth per full turn (m).
    pub pitch: f64,
    /// Angle advanced per dwell (rad).
    pub angular_step: f64,
    /// Search abandons beyond this radius (m).
    pub max_radius: f64,
    /// Downward press per dwell (m of commanded descent).
    pub dwell_descent: f64,
}

impl Default for SpiralConfig {
    fn default() -> Self {
        SpiralConfig {
            pitch: 0.0002,
            angular_step: std::f64::consts::FRAC_PI_4,
            max_radius: 0.003,
            dwell_descent: 0.0005,
        }
    }
}

impl SpiralConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.pitch <= 0.0 {
            return Err("spiral pitch must be positive".into());
        }
        if self.angular_step <= 0.0 {
            return Err("spiral angular step must be positive".into());
        }
        if self.max_radius <= 0.0 {
            return Err("spiral max radius must be positive".into());
        }
        Ok(())
    }
}

/// Lateral offset of dwell `step` on an Archimedean spiral:
/// `r = pitch * theta / 2pi` at `theta = step * angular_step`.
pub fn spiral_search_policy(step: u64, pitch: f64, angular_step: f64) -> (f64, f64) {
    debug_assert!(pitch > 0.0);
    let theta = step as f64 * angular_step;
    let r = pitch * theta / std::f64::consts::TAU;
    (r * theta.cos(), r * theta.sin())
}

/// Number of dwells needed for the spiral to cover a disc of radius `r`.
pub fn dwells_to_radius(r: f64, pitch: f64, angular_step: f64) -> u64 {
    ((r / pitch) * std::f64::consts::TAU / angular_step).ceil() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, TAU};

    #[test]
    fn origin_and_radial_growth() {
        assert_eq!(spiral_search_policy(0, 0.0002, FRAC_PI_4), (0.0, 0.0));

        // One full turn grows the radius by exactly the pitch.
        let pitch = 0.0002;
        let steps_per_turn = (TAU / FRAC_PI_4) as u64;
        for k in 1..5 {
            let (x0, y0) = spiral_search_policy(k, pitch, FRAC_PI_4);
            let (x1, y1) = spiral_search_policy(k + steps_per_turn, pitch, FRAC_PI_4);
            let r0 = (x0 * x0 + y0 * y0).sqrt();
            let r1 = (x1 * x1 + y1 * y1).sqrt();
            assert!((r1 - r0 - pitch).abs() < 1e-12);
        }
    }

    #[test]
    fn coverage_count_oracle() {
        // With pitch equal to the clearance and a 1 mm true error, the
        // spiral reaches the error radius within the closed-form dwell count.
        let pitch = 0.0002;
        let err = 0.001;
        let n = dwells_to_radius(err, pitch, FRAC_PI_4);
        let expected = ((err / pitch) * TAU / FRAC_PI_4).ceil() as u64;
        assert_eq!(n, expected);
        let (x, y) = spiral_search_policy(n, pitch, FRAC_PI_4);
        assert!((x * x + y * y).sqrt() >= err - 1e-12);
        let (x, y) = spiral_search_policy(n.saturating_sub(1), pitch, FRAC_PI_4);
        assert!((x * x + y * y).sqrt() <= err + pitch);
    }
}
