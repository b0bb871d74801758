//! Ground-truth pinhole detection model.
//!
//! Objects project through an ideal camera at fixed height; no occlusion.
//! The detector is exact; optional dropout/jitter noise is applied as a
//! separate post-processing step for robustness experiments.

use serde::{Deserialize, Serialize};

use crate::model::Detection;
use crate::rng::Rng;

use super::dynamics::AgentPose;
use super::scene::{ObjectInstance, Scene};

/// Success-rule distance: target must be projected AND within this ground
/// distance when Done fires.
pub const VISIBLE_RANGE_M: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub hfov_deg: f64,
    pub vfov_deg: f64,
    pub max_range_m: f64,
    pub height_m: f64,
    /// Probability of dropping each detection (observation noise only).
    pub detection_dropout: f64,
    /// Gaussian jitter applied to box centers (observation noise only).
    pub jitter_sigma: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            hfov_deg: 90.0,
            vfov_deg: 90.0,
            max_range_m: 5.0,
            height_m: 1.5,
            detection_dropout: 0.0,
            jitter_sigma: 0.0,
        }
    }
}

/// A projected object together with its scene instance and projective depth.
#[derive(Debug, Clone)]
pub struct DetectionHit {
    pub instance: usize,
    pub depth: f64,
    pub ground_dist: f64,
    pub detection: Detection,
}

/// Project one instance. None if behind the camera, outside the frustum or
/// beyond range.
pub fn project(
    scene: &Scene,
    pose: &AgentPose,
    obj: &ObjectInstance,
    cam: &CameraConfig,
) -> Option<(f64, f64, Detection)> {
    let (ax, ay) = scene.cell_center(pose.i, pose.j);
    let dx = obj.x_w - ax;
    let dy = obj.y_w - ay;
    let dz = obj.z_w - cam.height_m;
    let ground = (dx * dx + dy * dy).sqrt();
    if ground > cam.max_range_m {
        return None;
    }

    let heading = (pose.heading_deg as f64).to_radians();
    let forward = dx * heading.cos() + dy * heading.sin();
    let lateral = dx * heading.sin() - dy * heading.cos();

    // Pitch rotates the forward/vertical plane; lateral is unchanged.
    let pitch = (pose.pitch_deg as f64).to_radians();
    let depth = forward * pitch.cos() + dz * pitch.sin();
    let vert = dz * pitch.cos() - forward * pitch.sin();
    if depth <= 1e-9 {
        return None;
    }

    let half_h = (cam.hfov_deg.to_radians() / 2.0).tan();
    let half_v = (cam.vfov_deg.to_radians() / 2.0).tan();
    let x = 0.5 + (lateral / depth) / (2.0 * half_h);
    let y = 0.5 - (vert / depth) / (2.0 * half_v);
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return None;
    }
    let area = (obj.s / (depth * 2.0 * half_h)).powi(2).clamp(0.0, 1.0);
    Some((
        depth,
        ground,
        Detection {
            class: obj.class.clone(),
            x,
            y,
            area,
        },
    ))
}

/// All projected instances, sorted by (depth, class, instance index) for a
/// deterministic observation order.
pub fn detect_hits(scene: &Scene, pose: &AgentPose, cam: &CameraConfig) -> Vec<DetectionHit> {
    let mut hits: Vec<DetectionHit> = scene
        .objects
        .iter()
        .enumerate()
        .filter_map(|(idx, obj)| {
            project(scene, pose, obj, cam).map(|(depth, ground, detection)| DetectionHit {
                instance: idx,
                depth,
                ground_dist: ground,
                detection,
            })
        })
        .collect();
    hits.sort_by(|a, b| {
        a.depth
            .partial_cmp(&b.depth)
            .unwrap()
            .then_with(|| a.detection.class.cmp(&b.detection.class))
            .then_with(|| a.instance.cmp(&b.instance))
    });
    hits
}

/// The observation as the policy sees it.
pub fn detect(scene: &Scene, pose: &AgentPose, cam: &CameraConfig) -> Vec<Detection> {
    detect_hits(scene, pose, cam)
        .into_iter()
        .map(|h| h.detection)
        .collect()
}

/// Success/shaping predicate: projected into the frame AND within 1.5 m
/// ground distance.
pub fn is_visible(scene: &Scene, pose: &AgentPose, instance: usize, cam: &CameraConfig) -> bool {
    let obj = &scene.objects[instance];
    match project(scene, pose, obj, cam) {
        Some((_, ground, _)) => ground <= VISIBLE_RANGE_M,
        None => false,
    }
}

/// Whether a hit from [`detect_hits`] satisfies the visibility rule.
pub fn hit_visible(hit: &DetectionHit) -> bool {
    hit.ground_dist <= VISIBLE_RANGE_M
}

/// Observation-noise pass: drop detections and jitter box centers. Never
/// affects the ground-truth success rule.
pub fn apply_detection_noise(
    hits: Vec<DetectionHit>,
    cam: &CameraConfig,
    rng: &mut Rng,
) -> Vec<DetectionHit> {
    if cam.detection_dropout == 0.0 && cam.jitter_sigma == 0.0 {
        return hits;
    }
    let mut out = Vec::with_capacity(hits.len());
    for mut h in hits {
        if rng.chance(cam.detection_dropout) {
            continue;
        }
        if cam.jitter_sigma > 0.0 {
            h.detection.x = (h.detection.x + cam.jitter_sigma * rng.gaussian()).clamp(0.0, 1.0);
            h.detection.y = (h.detection.y + cam.jitter_sigma * rng.gaussian()).clamp(0.0, 1.0);
        }
        out.push(h);
    }
    out
}
