//! Episode runner: observe -> act -> reward until Done or the step cap.

use crate::model::{AttentionTrace, Detection};

use super::camera::{detect_hits, CameraConfig, DetectionHit};
use super::dynamics::{Action, AgentPose};
use super::path::optimal_path_length;
use super::reward::{reward_transition, EpisodeState, ParentProbTable};
use super::scene::Scene;
use super::SimError;

/// What the policy returns for one step: an action index into the fixed
/// 6-action vocabulary and, when attention ran, the trace for inspection.
pub type PolicyStep = (usize, Option<AttentionTrace>);

/// One recorded step: the pose the observation was taken from, the chosen
/// action, its reward, and the observation itself.
#[derive(Debug, Clone)]
pub struct StepLog {
    pub pose: AgentPose,
    pub action: Action,
    pub reward: f64,
    pub detections: Vec<Detection>,
    pub trace: Option<AttentionTrace>,
}

/// Episode summary. `steps` counts every action taken including Done.
#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub success: bool,
    pub steps: u32,
    pub total_reward: f64,
    pub collisions: u32,
    /// Optimal motion-action count from the start state; None if the target
    /// cannot be reached.
    pub optimal_len: Option<u32>,
}

/// Run one episode. The policy sees the detections from the current pose
/// (optionally filtered by `mask`) and the episode bookkeeping; an action
/// index outside the vocabulary is an error.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    scene: &Scene,
    cam: &CameraConfig,
    table: &ParentProbTable,
    start: AgentPose,
    target: &str,
    max_steps: u32,
    mask: Option<&dyn Fn(&DetectionHit) -> bool>,
    policy: &mut dyn FnMut(&[Detection], &EpisodeState) -> Result<PolicyStep, SimError>,
) -> Result<(EpisodeResult, Vec<StepLog>), SimError> {
    if !scene.has_class(target) {
        return Err(SimError::TargetMissing {
            scene: scene.id.clone(),
            class: target.to_string(),
        });
    }
    debug_assert!(max_steps >= 1);
    let optimal_len = optimal_path_length(scene, cam, &start, target);

    let observe = |hits: &[DetectionHit]| -> Vec<Detection> {
        hits.iter()
            .filter(|h| mask.map_or(true, |f| f(h)))
            .map(|h| h.detection.clone())
            .collect()
    };

    let mut state = EpisodeState::new(start, target);
    let mut obs = observe(&detect_hits(scene, &start, cam));
    let mut logs = Vec::new();
    let mut total_reward = 0.0;
    let mut collisions = 0;

    while !state.done && state.steps < max_steps {
        let pose_before = state.pose;
        let (action_idx, trace) = policy(&obs, &state)?;
        let action = Action::from_index(action_idx)
            .ok_or(SimError::InvalidAction(action_idx))?;
        let (reward, next, outcome) = reward_transition(scene, cam, table, &state, action);
        total_reward += reward;
        if outcome.collided {
            collisions += 1;
        }
        logs.push(StepLog {
            pose: pose_before,
            action,
            reward,
            detections: obs,
            trace,
        });
        obs = observe(&outcome.hits);
        state = next;
    }

    Ok((
        EpisodeResult {
            success: state.success,
            steps: state.steps,
            total_reward,
            collisions,
            optimal_len,
        },
        logs,
    ))
}
