//! Discrete agent state and motion.

use serde::{Deserialize, Serialize};

use super::scene::Scene;

/// The fixed action vocabulary, in actor-head output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    MoveAhead,
    RotateLeft,
    RotateRight,
    LookUp,
    LookDown,
    Done,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action::MoveAhead,
        Action::RotateLeft,
        Action::RotateRight,
        Action::LookUp,
        Action::LookDown,
        Action::Done,
    ];

    /// The five pose-changing actions (everything but Done).
    pub const MOTION: [Action; 5] = [
        Action::MoveAhead,
        Action::RotateLeft,
        Action::RotateRight,
        Action::LookUp,
        Action::LookDown,
    ];

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn index(&self) -> usize {
        Action::ALL.iter().position(|a| a == self).unwrap()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Action::MoveAhead => "MoveAhead",
            Action::RotateLeft => "RotateLeft",
            Action::RotateRight => "RotateRight",
            Action::LookUp => "LookUp",
            Action::LookDown => "LookDown",
            Action::Done => "Done",
        }
    }
}

/// Camera pitch bound in degrees (Look actions clamp here).
pub const PITCH_LIMIT_DEG: i16 = 30;
pub const PITCH_STEP_DEG: i16 = 30;
pub const ROTATE_STEP_DEG: u16 = 45;

/// Agent pose: grid cell, heading (multiples of 45 deg, 0 = +x) and camera
/// pitch (multiples of 30 deg in [-30, 30]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentPose {
    pub i: u32,
    pub j: u32,
    pub heading_deg: u16,
    pub pitch_deg: i16,
}

impl AgentPose {
    pub fn new(i: u32, j: u32, heading_deg: u16, pitch_deg: i16) -> Self {
        debug_assert_eq!(heading_deg % ROTATE_STEP_DEG, 0);
        debug_assert_eq!(pitch_deg % PITCH_STEP_DEG, 0);
        debug_assert!(pitch_deg.abs() <= PITCH_LIMIT_DEG);
        AgentPose {
            i,
            j,
            heading_deg: heading_deg % 360,
            pitch_deg,
        }
    }

    /// Unit step along the heading, rounded to the 8-neighborhood.
    pub fn forward_delta(&self) -> (i64, i64) {
        let rad = (self.heading_deg as f64).to_radians();
        (rad.cos().round() as i64, rad.sin().round() as i64)
    }
}

/// Apply a pose-changing action. Returns the new pose and whether a
/// MoveAhead was rejected by a blocked or out-of-bounds cell. Done leaves
/// the pose unchanged (episode termination is the runner's job).
pub fn step_dynamics(scene: &Scene, pose: &AgentPose, action: Action) -> (AgentPose, bool) {
    let mut next = *pose;
    match action {
        Action::MoveAhead => {
            let (di, dj) = pose.forward_delta();
            let (ni, nj) = (pose.i as i64 + di, pose.j as i64 + dj);
            if scene.is_free(ni, nj) {
                next.i = ni as u32;
                next.j = nj as u32;
            } else {
                return (next, true);
            }
        }
        Action::RotateLeft => {
            next.heading_deg = (pose.heading_deg + 360 - ROTATE_STEP_DEG) % 360;
        }
        Action::RotateRight => {
            next.heading_deg = (pose.heading_deg + ROTATE_STEP_DEG) % 360;
        }
        Action::LookUp => {
            next.pitch_deg = (pose.pitch_deg + PITCH_STEP_DEG).min(PITCH_LIMIT_DEG);
        }
        Action::LookDown => {
            next.pitch_deg = (pose.pitch_deg - PITCH_STEP_DEG).max(-PITCH_LIMIT_DEG);
        }
        Action::Done => {}
    }
    (next, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scene::{GridSpec, Scene, Split, CELL_M, SCENE_FORMAT_VERSION};

    fn open_scene(w: u32, h: u32) -> Scene {
        Scene {
            version: SCENE_FORMAT_VERSION,
            id: "open".into(),
            grid: GridSpec { w, h, cell_m: CELL_M },
            blocked: vec![],
            objects: vec![],
            split: Split::Train,
        }
    }

    #[test]
    fn heading_zero_moves_plus_x() {
        let s = open_scene(5, 5);
        let p = AgentPose::new(2, 2, 0, 0);
        let (q, col) = step_dynamics(&s, &p, Action::MoveAhead);
        assert!(!col);
        assert_eq!((q.i, q.j), (3, 2));
    }

    #[test]
    fn diagonal_heading_moves_one_cell_diagonally() {
        let s = open_scene(5, 5);
        let p = AgentPose::new(2, 2, 45, 0);
        let (q, _) = step_dynamics(&s, &p, Action::MoveAhead);
        assert_eq!((q.i, q.j), (3, 3));
        let p = AgentPose::new(2, 2, 225, 0);
        let (q, _) = step_dynamics(&s, &p, Action::MoveAhead);
        assert_eq!((q.i, q.j), (1, 1));
    }

    #[test]
    fn four_left_rotations_reverse_heading() {
        let s = open_scene(3, 3);
        let mut p = AgentPose::new(1, 1, 90, 0);
        for _ in 0..4 {
            p = step_dynamics(&s, &p, Action::RotateLeft).0;
        }
        assert_eq!(p.heading_deg, 270);
        assert_eq!((p.i, p.j), (1, 1));
    }

    #[test]
    fn pitch_clamps_at_bounds() {
        let s = open_scene(3, 3);
        let p = AgentPose::new(0, 0, 0, PITCH_LIMIT_DEG);
        let (q, col) = step_dynamics(&s, &p, Action::LookUp);
        assert!(!col);
        assert_eq!(q.pitch_deg, PITCH_LIMIT_DEG);
        let p = AgentPose::new(0, 0, 0, -PITCH_LIMIT_DEG);
        let (q, _) = step_dynamics(&s, &p, Action::LookDown);
        assert_eq!(q.pitch_deg, -PITCH_LIMIT_DEG);
    }

    #[test]
    fn blocked_and_bounds_refuse_motion() {
        let mut s = open_scene(3, 3);
        s.blocked = vec![(2, 1)];
        let p = AgentPose::new(1, 1, 0, 0);
        let (q, col) = step_dynamics(&s, &p, Action::MoveAhead);
        assert!(col);
        assert_eq!((q.i, q.j), (1, 1));
        let p = AgentPose::new(0, 0, 180, 0);
        let (q, col) = step_dynamics(&s, &p, Action::MoveAhead);
        assert!(col);
        assert_eq!((q.i, q.j), (0, 0));
    }
}
