//! Analytic slot/part geometry and contact candidate enumeration.
//!
//! The environment is a rigid board with a rectangular pocket (the slot). The
//! inserted part is a rigid box held from its top center by the end effector.
//! Contact candidates are a fixed set of sample points: part points tested
//! against the board surfaces, and slot-lip points tested against the part's
//! faces. A fixed candidate list keeps the solver allocation-free and the
//! sweep order deterministic.

use crate::math::{compose, Pose};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Slot and part dimensions plus the slot placement in the world.
///
/// The slot frame has its origin at the center of the opening, z up, x along
/// the slot length. The board top surface is z = 0 and the pocket spans
/// z in [-depth, 0].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlotGeometry {
    /// Opening extent along x (m).
    pub slot_length: f64,
    /// Opening extent along y (m).
    pub slot_width: f64,
    /// Pocket depth (m).
    pub depth: f64,
    /// Part extent along x (m).
    pub ram_length: f64,
    /// Part extent along y (m).
    pub ram_width: f64,
    /// Distance from the part's bottom face to the end-effector reference
    /// point at its top center (m).
    pub ram_height: f64,
    /// Slot pose in the board frame.
    #[serde(default = "Pose::identity", skip)]
    pub slot_pose: Pose,
    /// Board displacement in the world frame ("move the board").
    #[serde(default = "Pose::identity", skip)]
    pub board_offset: Pose,
}

impl Default for SlotGeometry {
    fn default() -> Self {
        SlotGeometry {
            slot_length: 0.120,
            slot_width: 0.0052,
            depth: 0.005,
            ram_length: 0.1196,
            ram_width: 0.0050,
            ram_height: 0.030,
            slot_pose: Pose::identity(),
            board_offset: Pose::identity(),
        }
    }
}

impl SlotGeometry {
    /// Lateral clearance: slot width minus part width.
    pub fn clearance(&self) -> f64 {
        self.slot_width - self.ram_width
    }

    /// Lengthwise clearance: slot length minus part length.
    pub fn length_clearance(&self) -> f64 {
        self.slot_length - self.ram_length
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.clearance() <= 0.0 {
            return Err("slot width must exceed part width".into());
        }
        if self.length_clearance() <= 0.0 {
            return Err("slot length must exceed part length".into());
        }
        if self.depth <= 0.0 {
            return Err("slot depth must be positive".into());
        }
        if self.slot_length <= self.slot_width {
            return Err("slot length must exceed slot width".into());
        }
        if self.ram_height <= 0.0 {
            return Err("part height must be positive".into());
        }
        let yaw = self.slot_frame_world().q.angle();
        if yaw > 1e-9 {
            return Err("slot placement must be translation-only".into());
        }
        Ok(())
    }

    /// Slot frame expressed in the world frame.
    pub fn slot_frame_world(&self) -> Pose {
        compose(&self.board_offset, &self.slot_pose)
    }

    /// End-effector world pose at which the part sits fully seated on the
    /// slot floor, centered.
    pub fn seated_ee_pose(&self) -> Pose {
        let slot = self.slot_frame_world();
        Pose::from_translation(
            slot.t.x,
            slot.t.y,
            slot.t.z - self.depth + self.ram_height,
        )
    }

    /// Contact sample points on the part, in the part frame (origin at the
    /// end-effector reference point, bottom face at z = -ram_height).
    pub fn part_points(&self) -> Vec<Vector3<f64>> {
        let hx = self.ram_length / 2.0;
        let hy = self.ram_width / 2.0;
        let z = -self.ram_height;
        vec![
            // Bottom corners.
            Vector3::new(hx, hy, z),
            Vector3::new(hx, -hy, z),
            Vector3::new(-hx, hy, z),
            Vector3::new(-hx, -hy, z),
            // Bottom edge midpoints.
            Vector3::new(0.0, hy, z),
            Vector3::new(0.0, -hy, z),
            Vector3::new(hx, 0.0, z),
            Vector3::new(-hx, 0.0, z),
            // Quarter points along the long bottom edges.
            Vector3::new(hx / 2.0, hy, z),
            Vector3::new(hx / 2.0, -hy, z),
            Vector3::new(-hx / 2.0, hy, z),
            Vector3::new(-hx / 2.0, -hy, z),
        ]
    }

    /// Sample points along the slot opening rim, in the slot frame (z = 0).
    pub fn lip_points(&self) -> Vec<Vector3<f64>> {
        let hx = self.slot_length / 2.0;
        let hy = self.slot_width / 2.0;
        vec![
            // Corners.
            Vector3::new(hx, hy, 0.0),
            Vector3::new(hx, -hy, 0.0),
            Vector3::new(-hx, hy, 0.0),
            Vector3::new(-hx, -hy, 0.0),
            // Long-edge interior points.
            Vector3::new(hx / 2.0, hy, 0.0),
            Vector3::new(hx / 2.0, -hy, 0.0),
            Vector3::new(0.0, hy, 0.0),
            Vector3::new(0.0, -hy, 0.0),
            Vector3::new(-hx / 2.0, hy, 0.0),
            Vector3::new(-hx / 2.0, -hy, 0.0),
            // Short-edge midpoints.
            Vector3::new(hx, 0.0, 0.0),
            Vector3::new(-hx, 0.0, 0.0),
        ]
    }
}

/// Environment surface a part point can rest against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Surface {
    Floor,
    BoardTop,
    WallXPos,
    WallXNeg,
    WallYPos,
    WallYNeg,
}

pub const SURFACES: [Surface; 6] = [
    Surface::Floor,
    Surface::BoardTop,
    Surface::WallXPos,
    Surface::WallXNeg,
    Surface::WallYPos,
    Surface::WallYNeg,
];

/// Half-width of the band around a pocket lip corner in which both the board
/// top and the adjacent wall may carry force (the corner's normal cone).
pub const CORNER_BAND: f64 = 5e-5;

/// Signed gap (positive = separated) and push direction of a part point
/// against one environment surface, in the slot frame.
///
/// Returns `None` when the surface cannot constrain the point from its
/// current region (e.g. a wall for a point above the board). `band` widens
/// the corner ambiguity region; loaded contacts query with a wider band so
/// their surface assignment has hysteresis instead of flip-flopping.
pub fn surface_gap(
    geom: &SlotGeometry,
    surface: Surface,
    p: &Vector3<f64>,
    band: f64,
) -> Option<(f64, Vector3<f64>)> {
    let hx = geom.slot_length / 2.0;
    let hy = geom.slot_width / 2.0;
    let depth = geom.depth;
    let inside_x = p.x.abs() <= hx;
    let inside_y = p.y.abs() <= hy;
    // Lateral excess beyond the opening boundary (positive outside).
    let lat_excess = (p.x.abs() - hx).max(p.y.abs() - hy);
    let down = -p.z; // downward penetration below the board top
    match surface {
        Surface::Floor => {
            if inside_x && inside_y {
                Some((p.z + depth, Vector3::z()))
            } else {
                None
            }
        }
        Surface::BoardTop => {
            // Only where board material exists, and only while pushing the
            // point up is the nearer exit (else the wall takes over).
            if lat_excess >= 0.0 && down <= lat_excess + band {
                Some((p.z, Vector3::z()))
            } else {
                None
            }
        }
        Surface::WallXPos => {
            let side = p.x - hx;
            if p.z < 0.0 && p.z > -depth - band && inside_y && side <= down + band {
                Some((hx - p.x, -Vector3::x()))
            } else {
                None
            }
        }
        Surface::WallXNeg => {
            let side = -p.x - hx;
            if p.z < 0.0 && p.z > -depth - band && inside_y && side <= down + band {
                Some((p.x + hx, Vector3::x()))
            } else {
                None
            }
        }
        Surface::WallYPos => {
            let side = p.y - hy;
            if p.z < 0.0 && p.z > -depth - band && inside_x && side <= down + band {
                Some((hy - p.y, -Vector3::y()))
            } else {
                None
            }
        }
        Surface::WallYNeg => {
            let side = -p.y - hy;
            if p.z < 0.0 && p.z > -depth - band && inside_x && side <= down + band {
                Some((p.y + hy, Vector3::y()))
            } else {
                None
            }
        }
    }
}

/// Gap and push direction for a fixed lip point against the part box.
///
/// `p_local` is the lip point expressed in the part frame. The gap is the
/// signed distance to the nearest face plane (negative inside the box); the
/// returned direction is the part-frame direction along which the part must
/// move to free the point, i.e. the direction of the contact force on the
/// part.
pub fn part_box_gap(
    geom: &SlotGeometry,
    p_local: &Vector3<f64>,
    preferred_face: Option<usize>,
) -> (f64, Vector3<f64>, usize) {
    let hx = geom.ram_length / 2.0;
    let hy = geom.ram_width / 2.0;
    // Per-face signed distances (positive outside that face's plane).
    let faces = [
        (p_local.x - hx, Vector3::new(-1.0, 0.0, 0.0)),
        (-p_local.x - hx, Vector3::new(1.0, 0.0, 0.0)),
        (p_local.y - hy, Vector3::new(0.0, -1.0, 0.0)),
        (-p_local.y - hy, Vector3::new(0.0, 1.0, 0.0)),
        (p_local.z, Vector3::new(0.0, 0.0, -1.0)), // top face at z = 0
        (-p_local.z - geom.ram_height, Vector3::new(0.0, 0.0, 1.0)), // bottom face
    ];
    // Box SDF: outside, the max face distance dominates; inside, the least
    // negative one is the shallowest exit.
    let mut best = 0usize;
    for (i, f) in faces.iter().enumerate().skip(1) {
        if f.0 > faces[best].0 {
            best = i;
        }
    }
    // Face hysteresis: a previously loaded face keeps the contact while it
    // stays competitive, so near-edge points do not flip assignment.
    if let Some(pref) = preferred_face {
        if pref < faces.len() && faces[pref].0 > faces[best].0 - 4.0 * CORNER_BAND {
            best = pref;
        }
    }
    (faces[best].0, faces[best].1, best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry_is_valid() {
        let g = SlotGeometry::default();
        g.validate().unwrap();
        assert!((g.clearance() - 0.0002).abs() < 1e-15);
        assert!((g.length_clearance() - 0.0004).abs() < 1e-15);
    }

    #[test]
    fn floor_gap_inside_opening() {
        let g = SlotGeometry::default();
        let p = Vector3::new(0.0, 0.0, -0.004);
        let (gap, n) = surface_gap(&g, Surface::Floor, &p, CORNER_BAND).unwrap();
        assert!((gap - 0.001).abs() < 1e-12);
        assert_eq!(n, Vector3::z());
        // Outside the opening the floor does not apply.
        assert!(surface_gap(&g, Surface::Floor, &Vector3::new(0.1, 0.0, -0.001), CORNER_BAND).is_none());
    }

    #[test]
    fn board_top_vs_wall_resolution() {
        let g = SlotGeometry::default();
        // Shallow point just past the end wall: board top still applicable.
        let shallow = Vector3::new(0.0601, 0.0, -1e-5);
        assert!(surface_gap(&g, Surface::BoardTop, &shallow, CORNER_BAND).is_some());
        // Deep point just past the end wall: only the wall applies.
        let deep = Vector3::new(0.0601, 0.0, -0.002);
        assert!(surface_gap(&g, Surface::BoardTop, &deep, CORNER_BAND).is_none());
        let (gap, n) = surface_gap(&g, Surface::WallXPos, &deep, CORNER_BAND).unwrap();
        assert!(gap < 0.0);
        assert_eq!(n, -Vector3::x());
        // A point inside the cavity is free of the board top.
        let inside = Vector3::new(0.0, 0.0, -0.002);
        assert!(surface_gap(&g, Surface::BoardTop, &inside, CORNER_BAND).is_none());
    }

    #[test]
    fn part_box_gap_picks_shallowest_face() {
        let g = SlotGeometry::default();
        // Point just inside the +y side face.
        let p = Vector3::new(0.0, g.ram_width / 2.0 - 1e-5, -0.001);
        let (gap, dir, face) = part_box_gap(&g, &p, None);
        assert!(gap < 0.0 && gap > -2e-5);
        assert_eq!(dir, Vector3::new(0.0, -1.0, 0.0));
        // Point outside the box has positive gap.
        let q = Vector3::new(0.0, g.ram_width, -0.001);
        let (gap, _, _) = part_box_gap(&g, &q, None);
        assert!(gap > 0.0);
        // A remembered face sticks while it stays competitive.
        let near_corner = Vector3::new(0.0, g.ram_width / 2.0 - 1e-5, -1e-5);
        let (_, _, top_face) = part_box_gap(&g, &near_corner, None);
        let (_, dir2, kept) = part_box_gap(&g, &near_corner, Some(face));
        assert_eq!(kept, face);
        assert_eq!(dir2, Vector3::new(0.0, -1.0, 0.0));
        let _ = top_face;
    }
}
