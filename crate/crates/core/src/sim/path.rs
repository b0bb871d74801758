//! Optimal path lengths by breadth-first search over the discrete state
//! space (cell x heading x pitch) with unit-cost motion actions. The goal
//! predicate is visibility of any target-class instance; the terminal Done
//! action is not counted.

use std::collections::VecDeque;

use super::camera::{is_visible, CameraConfig};
use super::dynamics::{step_dynamics, Action, AgentPose};
use super::scene::Scene;

pub const HEADINGS: [u16; 8] = [0, 45, 90, 135, 180, 225, 270, 315];
pub const PITCHES: [i16; 3] = [-30, 0, 30];

fn state_index(scene: &Scene, pose: &AgentPose) -> usize {
    let h = (pose.heading_deg / 45) as usize;
    let p = ((pose.pitch_deg / 30) + 1) as usize;
    (((pose.j as usize * scene.grid.w as usize) + pose.i as usize) * 8 + h) * 3 + p
}

fn state_count(scene: &Scene) -> usize {
    scene.grid.w as usize * scene.grid.h as usize * 8 * 3
}

/// True when some instance of `class` satisfies the visibility rule.
pub fn sees_target(scene: &Scene, pose: &AgentPose, class: &str, cam: &CameraConfig) -> bool {
    scene
        .instances_of(class)
        .any(|(idx, _)| is_visible(scene, pose, idx, cam))
}

/// Minimum number of motion actions from `start` until some instance of
/// `class` is visible. 0 when already visible; None when unreachable.
pub fn optimal_path_length(
    scene: &Scene,
    cam: &CameraConfig,
    start: &AgentPose,
    class: &str,
) -> Option<u32> {
    bfs(scene, cam, start, class).map(|(len, _)| len)
}

/// As [`optimal_path_length`] but also returns one optimal action sequence
/// (motion actions only; append Done to finish an episode).
pub fn optimal_path_actions(
    scene: &Scene,
    cam: &CameraConfig,
    start: &AgentPose,
    class: &str,
) -> Option<(u32, Vec<Action>)> {
    bfs(scene, cam, start, class)
}

fn bfs(
    scene: &Scene,
    cam: &CameraConfig,
    start: &AgentPose,
    class: &str,
) -> Option<(u32, Vec<Action>)> {
    if sees_target(scene, start, class, cam) {
        return Some((0, vec![]));
    }
    let n = state_count(scene);
    let mut dist: Vec<u32> = vec![u32::MAX; n];
    let mut prev: Vec<Option<(usize, Action)>> = vec![None; n];
    let mut poses: Vec<Option<AgentPose>> = vec![None; n];
    let s0 = state_index(scene, start);
    dist[s0] = 0;
    poses[s0] = Some(*start);
    let mut queue = VecDeque::new();
    queue.push_back(*start);

    while let Some(pose) = queue.pop_front() {
        let cur = state_index(scene, &pose);
        for action in Action::MOTION {
            let (next, collided) = step_dynamics(scene, &pose, action);
            if collided || next == pose {
                continue;
            }
            let ni = state_index(scene, &next);
            if dist[ni] != u32::MAX {
                continue;
            }
            dist[ni] = dist[cur] + 1;
            prev[ni] = Some((cur, action));
            poses[ni] = Some(next);
            if sees_target(scene, &next, class, cam) {
                // Reconstruct the action sequence.
                let mut actions = Vec::with_capacity(dist[ni] as usize);
                let mut at = ni;
                while let Some((parent, act)) = prev[at] {
                    actions.push(act);
                    at = parent;
                }
                actions.reverse();
                return Some((dist[ni], actions));
            }
            queue.push_back(next);
        }
    }
    None
}
