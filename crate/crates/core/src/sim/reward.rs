//! Reward shaping: target reward on a correct Done, one-shot partial reward
//! for newly seen parent objects scaled by how predictive that parent class
//! is of the target, and a small step penalty otherwise.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::catalog::ClassCatalog;

use super::camera::{detect_hits, hit_visible, CameraConfig, DetectionHit};
use super::dynamics::{step_dynamics, Action, AgentPose};
use super::scene::Scene;
use super::SimError;

/// Reward granted when Done fires with the target visible.
pub const TARGET_REWARD: f64 = 5.0;
/// Scaling factor on the parent partial reward.
pub const PARENT_SCALE: f64 = 0.1;
/// Per-step penalty when no reward branch fires.
pub const STEP_PENALTY: f64 = -0.01;
/// Distance floor in the inverse-distance parent score.
pub const DIST_EPS_M: f64 = 0.05;

/// Per-target conditional probabilities over parent classes, derived from
/// spatial proximity statistics of the training scenes. For each target the
/// probabilities over co-occurring parents sum to one; parents never seen
/// near the target get zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentProbTable {
    entries: Vec<(String, Vec<(String, f64)>)>,
}

impl ParentProbTable {
    pub fn prob(&self, target: &str, parent_class: &str) -> f64 {
        self.entries
            .iter()
            .find(|(t, _)| t == target)
            .and_then(|(_, ps)| {
                ps.iter()
                    .find(|(p, _)| p == parent_class)
                    .map(|(_, pr)| *pr)
            })
            .unwrap_or(0.0)
    }

    pub fn parents_of(&self, target: &str) -> &[(String, f64)] {
        self.entries
            .iter()
            .find(|(t, _)| t == target)
            .map(|(_, ps)| ps.as_slice())
            .unwrap_or(&[])
    }

    pub fn targets(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(t, _)| t.as_str())
    }
}

fn min_pair_distance(scene: &Scene, a: &str, b: &str) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (_, oa) in scene.instances_of(a) {
        for (_, ob) in scene.instances_of(b) {
            let d = ((oa.x_w - ob.x_w).powi(2) + (oa.y_w - ob.y_w).powi(2)).sqrt();
            best = Some(best.map_or(d, |x: f64| x.min(d)));
        }
    }
    best
}

/// Build the table from training scenes: per (target, parent) the mean over
/// scenes of the closest instance-pair distance, turned into a normalized
/// inverse-distance score.
pub fn parent_prob_table(
    scenes: &[Scene],
    catalog: &ClassCatalog,
) -> Result<ParentProbTable, SimError> {
    let parents: Vec<String> = catalog.parents().map(|c| c.name.clone()).collect();
    let mut entries = Vec::new();
    for target in catalog.children() {
        let mut scores: Vec<(String, f64)> = Vec::new();
        for p in &parents {
            let dists: Vec<f64> = scenes
                .iter()
                .filter_map(|s| min_pair_distance(s, &target.name, p))
                .collect();
            if dists.is_empty() {
                scores.push((p.clone(), 0.0));
                continue;
            }
            let mean = dists.iter().sum::<f64>() / dists.len() as f64;
            scores.push((p.clone(), 1.0 / (mean + DIST_EPS_M)));
        }
        let total: f64 = scores.iter().map(|(_, s)| s).sum();
        if total <= 0.0 {
            return Err(SimError::NoParentCoOccurrence(target.name.clone()));
        }
        for (_, s) in scores.iter_mut() {
            *s /= total;
        }
        entries.push((target.name.clone(), scores));
    }
    Ok(ParentProbTable { entries })
}

/// Mutable episode bookkeeping. The scene is passed alongside rather than
/// owned so states stay cheap to copy.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub pose: AgentPose,
    pub target: String,
    pub steps: u32,
    /// Parent instances already paid out (one-shot rule).
    pub rewarded_parents: BTreeSet<usize>,
    pub done: bool,
    pub success: bool,
}

impl EpisodeState {
    pub fn new(pose: AgentPose, target: &str) -> Self {
        EpisodeState {
            pose,
            target: target.to_string(),
            steps: 0,
            rewarded_parents: BTreeSet::new(),
            done: false,
            success: false,
        }
    }
}

/// Outcome of one environment transition.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub reward: f64,
    pub collided: bool,
    /// Post-action observation (reused as the next policy input).
    pub hits: Vec<DetectionHit>,
}

/// Apply `action`, observe, and score the transition:
/// - every not-yet-rewarded parent instance of a class with positive
///   conditional probability that is visible after the action pays
///   5 * Pr(target|parent) * 0.1 and is marked;
/// - Done with the target visible adds the target reward (on top of any
///   parent payout this step) and ends the episode successfully;
/// - Done without the target visible ends it unsuccessfully;
/// - if no branch fired, the step penalty applies.
pub fn reward_transition(
    scene: &Scene,
    cam: &CameraConfig,
    table: &ParentProbTable,
    state: &EpisodeState,
    action: Action,
) -> (f64, EpisodeState, StepOutcome) {
    debug_assert!(!state.done, "transition on a finished episode");
    let mut next = state.clone();
    let (pose, collided) = step_dynamics(scene, &state.pose, action);
    next.pose = pose;
    next.steps += 1;

    let hits = detect_hits(scene, &pose, cam);

    let mut reward = 0.0;
    let mut branch_fired = false;

    for hit in &hits {
        let obj = &scene.objects[hit.instance];
        if !obj.is_parent || !hit_visible(hit) {
            continue;
        }
        if next.rewarded_parents.contains(&hit.instance) {
            continue;
        }
        let pr = table.prob(&state.target, &obj.class);
        if pr <= 0.0 {
            continue;
        }
        reward += TARGET_REWARD * pr * PARENT_SCALE;
        next.rewarded_parents.insert(hit.instance);
        branch_fired = true;
    }

    if action == Action::Done {
        next.done = true;
        let target_visible = hits.iter().any(|h| {
            scene.objects[h.instance].class == state.target && hit_visible(h)
        });
        if target_visible {
            reward += TARGET_REWARD;
            next.success = true;
            branch_fired = true;
        }
    }

    if !branch_fired {
        reward += STEP_PENALTY;
    }

    let outcome = StepOutcome {
        reward,
        collided,
        hits,
    };
    (reward, next, outcome)
}
