//! Deterministic synthetic object-goal navigation environment: procedural
//! scenes, discrete agent dynamics, a ground-truth pinhole detector, reward
//! shaping, and BFS path-length oracles.

mod camera;
mod dynamics;
mod episode;
mod gen;
mod path;
mod reward;
mod scene;

pub use camera::{
    apply_detection_noise, detect, detect_hits, hit_visible, is_visible, project, CameraConfig,
    DetectionHit, VISIBLE_RANGE_M,
};
pub use dynamics::{
    step_dynamics, Action, AgentPose, PITCH_LIMIT_DEG, PITCH_STEP_DEG, ROTATE_STEP_DEG,
};
pub use episode::{run_episode, EpisodeResult, PolicyStep, StepLog};
pub use gen::{generate_scene, GenConfig};
pub use path::{
    optimal_path_actions, optimal_path_length, sees_target, HEADINGS, PITCHES,
};
pub use reward::{
    parent_prob_table, reward_transition, EpisodeState, ParentProbTable, StepOutcome, DIST_EPS_M,
    PARENT_SCALE, STEP_PENALTY, TARGET_REWARD,
};
pub use scene::{
    SceneManifest,
    load_scene, q6, save_scene, GridSpec, ObjectInstance, Scene, Split, CELL_M,
    SCENE_FORMAT_VERSION,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unsatisfiable generation config: {0}")]
    UnsatisfiableConfig(String),
    #[error("target class {0:?} never co-occurs with a parent class in the training scenes")]
    NoParentCoOccurrence(String),
    #[error("invalid action index {0} (actions are 0..=5)")]
    InvalidAction(usize),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("scene {scene:?} has no instance of target class {class:?}")]
    TargetMissing { scene: String, class: String },
    #[error("policy failure: {0}")]
    Policy(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
