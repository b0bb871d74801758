//! Rollout collection: drive the environment with the current policy for up
//! to `horizon` steps, recording everything the loss needs on one tape.

use std::collections::BTreeSet;

use crate::embed::EmbeddingTable;
use crate::grad::{Mode, NodeId, ParamSet, Tape};
use crate::model::{Detection, HiddenState, PolicyNet};
use crate::rng::Rng;
use crate::sim::{
    apply_detection_noise, detect_hits, reward_transition, Action, AgentPose, CameraConfig,
    DetectionHit, EpisodeState, ParentProbTable, Scene,
};

use super::RlError;

/// One environment step as the loss sees it.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub action: usize,
    pub reward: f64,
    /// Critic estimate at the pre-action state.
    pub value: f64,
    pub log_prob: f64,
    pub entropy: f64,
    pub probs: Vec<f64>,
    pub done: bool,
}

/// A collected segment: plain per-step records plus the tape holding the
/// differentiable forward passes, with the logits/value node per step.
pub struct RolloutSegment {
    pub steps: Vec<StepRecord>,
    /// Critic bootstrap for the truncated tail; zero when the episode ended.
    pub bootstrap: f64,
    pub terminated: bool,
    pub tape: Tape<f64>,
    pub logits_nodes: Vec<NodeId>,
    pub value_nodes: Vec<NodeId>,
}

/// A live episode bound to one scene: filtered observations, reward
/// bookkeeping, and the masked-class audit counter.
pub struct EnvSession<'a> {
    pub scene: &'a Scene,
    pub cam: &'a CameraConfig,
    pub ptable: &'a ParentProbTable,
    pub masked: Option<&'a BTreeSet<String>>,
    pub state: EpisodeState,
    pub obs: Vec<Detection>,
    /// Masked-class detections that reached the observation (must stay 0).
    pub masked_leaks: u64,
    pub max_episode_steps: u32,
}

impl<'a> EnvSession<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn begin(
        scene: &'a Scene,
        cam: &'a CameraConfig,
        ptable: &'a ParentProbTable,
        start: AgentPose,
        target: &str,
        masked: Option<&'a BTreeSet<String>>,
        max_episode_steps: u32,
        rng: &mut Rng,
    ) -> Self {
        let mut session = EnvSession {
            scene,
            cam,
            ptable,
            masked,
            state: EpisodeState::new(start, target),
            obs: Vec::new(),
            masked_leaks: 0,
            max_episode_steps,
        };
        let hits = detect_hits(scene, &start, cam);
        session.obs = session.filter(hits, rng);
        session
    }

    fn filter(&mut self, hits: Vec<DetectionHit>, rng: &mut Rng) -> Vec<Detection> {
        let hits = apply_detection_noise(hits, self.cam, rng);
        let mut obs = Vec::with_capacity(hits.len());
        for h in hits {
            if let Some(masked) = self.masked {
                if masked.contains(&h.detection.class) {
                    continue;
                }
            }
            obs.push(h.detection);
        }
        // Audit: nothing masked may survive the filter.
        if let Some(masked) = self.masked {
            self.masked_leaks += obs
                .iter()
                .filter(|d| masked.contains(&d.class))
                .count() as u64;
        }
        obs
    }

    /// Episode over: Done fired or the step cap was reached.
    pub fn over(&self) -> bool {
        self.state.done || self.state.steps >= self.max_episode_steps
    }

    /// Apply an action, refresh the observation, return its reward.
    pub fn step(&mut self, action: Action, rng: &mut Rng) -> f64 {
        let (reward, next, outcome) =
            reward_transition(self.scene, self.cam, self.ptable, &self.state, action);
        self.state = next;
        self.obs = self.filter(outcome.hits, rng);
        reward
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let lse = logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|x| x - lse).collect()
}

fn sample_categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let mut x = rng.next_f64();
    for (i, p) in probs.iter().enumerate() {
        x -= p;
        if x < 0.0 {
            return i;
        }
    }
    probs.len() - 1
}

/// Collect up to `horizon` steps. Actions are sampled from the softmax of
/// the logits; the hidden state flows through the tape within the segment
/// and returns as plain tensors for the next one.
#[allow(clippy::too_many_arguments)]
pub fn collect_rollout(
    env: &mut EnvSession,
    net: &PolicyNet,
    params: &ParamSet<f64>,
    table: &EmbeddingTable,
    hidden: HiddenState<f64>,
    horizon: u32,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(RolloutSegment, HiddenState<f64>), RlError> {
    let mut tape = Tape::new();
    let raw = tape.register_params(params)?;
    let ids = net.resolve_ids(params, &raw);
    let mut h = tape.constant(hidden.h)?;
    let mut c = tape.constant(hidden.c)?;

    let mut steps = Vec::new();
    let mut logits_nodes = Vec::new();
    let mut value_nodes = Vec::new();

    for _ in 0..horizon {
        if env.over() {
            break;
        }
        let (nodes, _) = net.forward_on_tape(
            &mut tape,
            &ids,
            &env.obs,
            &env.state.target.clone(),
            table,
            h,
            c,
            mode,
            rng,
        )?;
        let logits = tape.value(nodes.logits).data().to_vec();
        let lsm = log_softmax(&logits);
        let probs: Vec<f64> = lsm.iter().map(|l| l.exp()).collect();
        let action_idx = sample_categorical(&probs, rng);
        let action = Action::from_index(action_idx).expect("sampled in range");
        let value = tape.value(nodes.value).item();

        let reward = env.step(action, rng);
        let entropy = -probs
            .iter()
            .zip(&lsm)
            .map(|(p, l)| if *p > 0.0 { p * l } else { 0.0 })
            .sum::<f64>();

        steps.push(StepRecord {
            action: action_idx,
            reward,
            value,
            log_prob: lsm[action_idx],
            entropy,
            probs,
            done: env.state.done,
        });
        logits_nodes.push(nodes.logits);
        value_nodes.push(nodes.value);
        h = nodes.h;
        c = nodes.c;
    }

    if steps.is_empty() {
        return Err(RlError::EmptySegment);
    }

    let carried = HiddenState {
        h: tape.value(h).clone(),
        c: tape.value(c).clone(),
    };

    let terminated = env.over();
    let bootstrap = if terminated {
        0.0
    } else {
        // Extra value-only forward at the post-segment state; its hidden
        // outputs are discarded.
        let (nodes, _) = net.forward_on_tape(
            &mut tape,
            &ids,
            &env.obs,
            &env.state.target.clone(),
            table,
            h,
            c,
            mode,
            rng,
        )?;
        tape.value(nodes.value).item()
    };

    Ok((
        RolloutSegment {
            steps,
            bootstrap,
            terminated,
            tape,
            logits_nodes,
            value_nodes,
        },
        carried,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::desk_catalog;
    use crate::embed::synth_embeddings;
    use crate::model::ModelConfig;
    use crate::sim::{generate_scene, parent_prob_table, GenConfig, Split, HEADINGS};

    fn fixture() -> (crate::catalog::ClassCatalog, Scene, ParentProbTable, EmbeddingTable) {
        let cat = desk_catalog(3);
        // The prob table needs every child class to co-occur with a parent
        // somewhere, so it is built over a handful of scenes.
        let scenes: Vec<Scene> = (0..8)
            .map(|k| {
                generate_scene(&cat, &GenConfig::default(), 7 + k, &format!("r{k}"), Split::Train)
                    .unwrap()
            })
            .collect();
        let ptable = parent_prob_table(&scenes, &cat).unwrap();
        let table = synth_embeddings(&cat, 8, 0.1, 3).unwrap();
        (cat, scenes.into_iter().next().unwrap(), ptable, table)
    }

    fn start_pose(scene: &Scene, rng: &mut Rng) -> AgentPose {
        let free = scene.free_cells();
        let (i, j) = free[rng.usize_below(free.len())];
        AgentPose::new(i, j, HEADINGS[rng.usize_below(8)], 0)
    }

    #[test]
    fn segment_respects_horizon_and_episode_end() {
        let (_cat, scene, ptable, table) = fixture();
        let cam = CameraConfig::default();
        let net = PolicyNet::new(ModelConfig::tiny(8));
        let params = net.init_params::<f64>(3);
        let mut rng = Rng::new(5);
        let target = scene.present_child_classes()[0].clone();
        let start = start_pose(&scene, &mut rng);

        // Cap the episode at 3 steps; a horizon of 5 must stop at 3.
        let mut env = EnvSession::begin(
            &scene, &cam, &ptable, start, &target, None, 3, &mut rng,
        );
        let (seg, _) = collect_rollout(
            &mut env,
            &net,
            &params,
            &table,
            HiddenState::zeros(net.cfg.d_hidden),
            5,
            Mode::Eval,
            &mut rng,
        )
        .unwrap();
        assert!(seg.steps.len() <= 3);
        if env.over() {
            assert_eq!(seg.bootstrap, 0.0);
            assert!(seg.terminated);
        }
    }

    #[test]
    fn deterministic_given_seed_and_params() {
        let (_cat, scene, ptable, table) = fixture();
        let cam = CameraConfig::default();
        let net = PolicyNet::new(ModelConfig::tiny(8));
        let params = net.init_params::<f64>(3);
        let run = || {
            let mut rng = Rng::new(11);
            let start = start_pose(&scene, &mut rng);
            let target = scene.present_child_classes()[0].clone();
            let mut env = EnvSession::begin(
                &scene, &cam, &ptable, start, &target, None, 50, &mut rng,
            );
            let (seg, _) = collect_rollout(
                &mut env,
                &net,
                &params,
                &table,
                HiddenState::zeros(net.cfg.d_hidden),
                20,
                Mode::Train,
                &mut rng,
            )
            .unwrap();
            seg.steps
                .iter()
                .map(|s| (s.action, s.reward.to_bits(), s.value.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn recorded_entropy_matches_direct_recomputation() {
        let (_cat, scene, ptable, table) = fixture();
        let cam = CameraConfig::default();
        let net = PolicyNet::new(ModelConfig::tiny(8));
        let params = net.init_params::<f64>(9);
        let mut rng = Rng::new(2);
        let start = start_pose(&scene, &mut rng);
        let target = scene.present_child_classes()[0].clone();
        let mut env = EnvSession::begin(
            &scene, &cam, &ptable, start, &target, None, 60, &mut rng,
        );
        let (seg, _) = collect_rollout(
            &mut env,
            &net,
            &params,
            &table,
            HiddenState::zeros(net.cfg.d_hidden),
            30,
            Mode::Eval,
            &mut rng,
        )
        .unwrap();
        for s in &seg.steps {
            let direct: f64 = -s
                .probs
                .iter()
                .filter(|p| **p > 0.0)
                .map(|p| p * p.ln())
                .sum::<f64>();
            assert!((s.entropy - direct).abs() < 1e-12);
            let psum: f64 = s.probs.iter().sum();
            assert!((psum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_classes_never_reach_observations() {
        let (_cat, scene, ptable, table) = fixture();
        let cam = CameraConfig::default();
        let net = PolicyNet::new(ModelConfig::tiny(8));
        let params = net.init_params::<f64>(4);
        let mut rng = Rng::new(8);
        let masked: BTreeSet<String> = ["mug", "cup"].iter().map(|s| s.to_string()).collect();
        let present = scene.present_child_classes();
        let target = present
            .iter()
            .find(|c| !masked.contains(*c))
            .expect("unmasked target exists")
            .clone();
        let start = start_pose(&scene, &mut rng);
        let mut env = EnvSession::begin(
            &scene, &cam, &ptable, start, &target, Some(&masked), 80, &mut rng,
        );
        let (seg, _) = collect_rollout(
            &mut env,
            &net,
            &params,
            &table,
            HiddenState::zeros(net.cfg.d_hidden),
            80,
            Mode::Eval,
            &mut rng,
        )
        .unwrap();
        assert_eq!(env.masked_leaks, 0);
        assert!(!seg.steps.is_empty());
    }
}
