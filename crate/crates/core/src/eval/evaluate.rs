//! SR/SPL evaluation over sampled episodes.
//!
//! Episodes are drawn up front (deterministically in the seed) until both
//! the L>=1 and L>=5 bucket quotas are met; every accepted episode has a
//! reachable target and lands in the L>=1 bucket, those with optimal length
//! at least five also in the L>=5 bucket. Rollouts then run greedily (or
//! sampled) across worker threads; the merge is index-ordered so thread
//! count never changes the result.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingTable;
use crate::grad::{Mode, ParamSet};
use crate::hash::fnv64;
use crate::model::{HiddenState, PolicyNet};
use crate::rng::{derive_seed, Rng};
use crate::sim::{
    optimal_path_length, run_episode, AgentPose, CameraConfig, ParentProbTable, Scene, SimError,
    HEADINGS,
};

use super::report::{sr_spl, BucketReport, ClassReport, EpisodeOutcome, EvalReport};
use super::EvalError;

pub const EVAL_REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Quota per bucket (L>=1 and L>=5).
    pub episodes_per_bucket: u32,
    pub max_episode_steps: u32,
    pub seed: u64,
    /// Greedy argmax action selection; false samples from the policy.
    pub greedy: bool,
    /// Worker threads for rollouts.
    pub threads: u32,
    /// Give up filling a bucket after this many draws per requested episode.
    pub draw_cap_factor: u32,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episodes_per_bucket: 250,
            max_episode_steps: 100,
            seed: 7,
            greedy: true,
            threads: 2,
            draw_cap_factor: 400,
        }
    }
}

/// Who is being evaluated.
enum Agent<'a> {
    Model {
        net: &'a PolicyNet,
        params: &'a ParamSet<f64>,
        table: &'a EmbeddingTable,
    },
    Random,
}

#[derive(Debug, Clone)]
struct EpisodeSpec {
    scene_idx: usize,
    start: AgentPose,
    target: String,
    optimal: u32,
}

fn draw_specs(
    scenes: &[Scene],
    cam: &CameraConfig,
    targets: &[String],
    cfg: &EvalConfig,
) -> Result<(Vec<EpisodeSpec>, bool, bool), EvalError> {
    // (scene, free cells, eligible targets) triples.
    let metas: Vec<(usize, Vec<(u32, u32)>, Vec<String>)> = scenes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let present = s.present_child_classes();
            let eligible: Vec<String> = present
                .into_iter()
                .filter(|c| targets.contains(c))
                .collect();
            (i, s.free_cells(), eligible)
        })
        .filter(|(_, free, eligible)| !free.is_empty() && !eligible.is_empty())
        .collect();
    if metas.is_empty() {
        return Err(EvalError::NoEligibleEpisodes);
    }

    let mut rng = Rng::new(derive_seed(cfg.seed, 0xD0A));
    let quota = cfg.episodes_per_bucket as usize;
    let cap = (cfg.draw_cap_factor as usize).saturating_mul(quota).max(1);
    let mut specs = Vec::new();
    let (mut n1, mut n5) = (0usize, 0usize);

    for _ in 0..cap {
        if n1 >= quota && n5 >= quota {
            break;
        }
        let (scene_idx, free, eligible) = &metas[rng.usize_below(metas.len())];
        let (i, j) = free[rng.usize_below(free.len())];
        let start = AgentPose::new(i, j, HEADINGS[rng.usize_below(8)], 0);
        let target = eligible[rng.usize_below(eligible.len())].clone();
        let Some(l) = optimal_path_length(&scenes[*scene_idx], cam, &start, &target) else {
            continue;
        };
        if l < 1 {
            continue;
        }
        // Once L>=1 is full, only long-horizon episodes are still useful.
        if n1 >= quota && l < 5 {
            continue;
        }
        if l >= 5 {
            n5 += 1;
        }
        n1 += 1;
        specs.push(EpisodeSpec {
            scene_idx: *scene_idx,
            start,
            target,
            optimal: l,
        });
    }
    Ok((specs, n1 >= quota, n5 >= quota))
}

fn run_specs(
    agent: &Agent,
    scenes: &[Scene],
    cam: &CameraConfig,
    ptable: &ParentProbTable,
    specs: &[EpisodeSpec],
    cfg: &EvalConfig,
) -> Result<Vec<EpisodeOutcome>, EvalError> {
    let results: Vec<Mutex<Option<Result<EpisodeOutcome, EvalError>>>> =
        (0..specs.len()).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let threads = cfg.threads.max(1) as usize;

    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= specs.len() {
                    break;
                }
                let out = run_one(agent, scenes, cam, ptable, &specs[idx], cfg, idx);
                *results[idx].lock().expect("result slot") = Some(out);
            });
        }
    });

    results
        .into_iter()
        .map(|m| m.into_inner().expect("slot").expect("episode ran"))
        .collect()
}

fn run_one(
    agent: &Agent,
    scenes: &[Scene],
    cam: &CameraConfig,
    ptable: &ParentProbTable,
    spec: &EpisodeSpec,
    cfg: &EvalConfig,
    idx: usize,
) -> Result<EpisodeOutcome, EvalError> {
    let scene = &scenes[spec.scene_idx];
    let mut rng = Rng::new(derive_seed(cfg.seed, 0xE9_0000 + idx as u64));
    let mut hidden = match agent {
        Agent::Model { net, .. } => HiddenState::<f64>::zeros(net.cfg.d_hidden),
        Agent::Random => HiddenState::<f64>::zeros(1),
    };

    let mut policy = |obs: &[crate::model::Detection],
                      _state: &crate::sim::EpisodeState|
     -> Result<crate::sim::PolicyStep, SimError> {
        match agent {
            Agent::Random => Ok((rng.usize_below(crate::model::N_ACTIONS), None)),
            Agent::Model { net, params, table } => {
                let (out, next_hidden, trace) = net
                    .step(params, obs, &spec.target, table, &hidden, Mode::Eval, &mut rng)
                    .map_err(|e| SimError::Policy(e.to_string()))?;
                hidden = next_hidden;
                let action = if cfg.greedy {
                    argmax(&out.logits)
                } else {
                    sample_logits(&out.logits, &mut rng)
                };
                Ok((action, trace))
            }
        }
    };

    let (result, _) = run_episode(
        scene,
        cam,
        ptable,
        spec.start,
        &spec.target,
        cfg.max_episode_steps,
        None,
        &mut policy,
    )?;
    debug_assert_eq!(result.optimal_len, Some(spec.optimal));
    if result.success && result.steps < spec.optimal {
        return Err(EvalError::Invariant(format!(
            "episode {idx}: successful path of {} actions beat the BFS optimum {}",
            result.steps, spec.optimal
        )));
    }
    Ok(EpisodeOutcome {
        success: result.success,
        steps: result.steps,
        optimal: spec.optimal,
    })
}

fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in logits.iter().enumerate() {
        if *v > logits[best] {
            best = i;
        }
    }
    best
}

fn sample_logits(logits: &[f64], rng: &mut Rng) -> usize {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut x = rng.next_f64() * total;
    for (i, e) in exps.iter().enumerate() {
        x -= e;
        if x < 0.0 {
            return i;
        }
    }
    exps.len() - 1
}

fn assemble_report(
    specs: &[EpisodeSpec],
    outcomes: &[EpisodeOutcome],
    full1: bool,
    full5: bool,
    scenes: &[Scene],
    split: &str,
    seed: u64,
    checkpoint_hash: Option<String>,
) -> EvalReport {
    let l1: Vec<EpisodeOutcome> = outcomes.to_vec();
    let l5: Vec<EpisodeOutcome> = specs
        .iter()
        .zip(outcomes)
        .filter(|(s, _)| s.optimal >= 5)
        .map(|(_, o)| *o)
        .collect();

    let bucket = |eps: &[EpisodeOutcome], complete: bool| {
        if eps.is_empty() {
            BucketReport::empty()
        } else {
            let (sr, spl) = sr_spl(eps);
            BucketReport {
                sr,
                spl,
                episodes: eps.len() as u32,
                complete,
            }
        }
    };

    let mut classes: Vec<String> = specs.iter().map(|s| s.target.clone()).collect();
    classes.sort();
    classes.dedup();
    let per_class = classes
        .into_iter()
        .map(|class| {
            let eps: Vec<EpisodeOutcome> = specs
                .iter()
                .zip(outcomes)
                .filter(|(s, _)| s.target == class)
                .map(|(_, o)| *o)
                .collect();
            let (sr, spl) = sr_spl(&eps);
            ClassReport {
                class,
                sr,
                spl,
                episodes: eps.len() as u32,
            }
        })
        .collect();

    EvalReport {
        version: EVAL_REPORT_VERSION,
        checkpoint_hash,
        split: split.to_string(),
        seed,
        scene_ids: scenes.iter().map(|s| s.id.clone()).collect(),
        l1: bucket(&l1, full1),
        l5: bucket(&l5, full5),
        per_class,
    }
}

/// Evaluate a trained parameter set. `targets` restricts candidate target
/// classes (seen/unseen/all); `split` is a provenance label only.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    net: &PolicyNet,
    params: &ParamSet<f64>,
    table: &EmbeddingTable,
    scenes: &[Scene],
    cam: &CameraConfig,
    ptable: &ParentProbTable,
    targets: &[String],
    split: &str,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let (specs, full1, full5) = draw_specs(scenes, cam, targets, cfg)?;
    if specs.is_empty() {
        return Err(EvalError::NoEligibleEpisodes);
    }
    let agent = Agent::Model { net, params, table };
    let outcomes = run_specs(&agent, scenes, cam, ptable, &specs, cfg)?;
    let hash = {
        let mut bytes = Vec::new();
        for (name, t) in params.entries() {
            bytes.extend_from_slice(name.as_bytes());
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        Some(format!("{:016x}", fnv64(&bytes)))
    };
    Ok(assemble_report(
        &specs, &outcomes, full1, full5, scenes, split, cfg.seed, hash,
    ))
}

/// Uniform-random agent through the same pipeline; the reference point for
/// the trained-vs-random acceptance ratios.
pub fn random_baseline(
    scenes: &[Scene],
    cam: &CameraConfig,
    ptable: &ParentProbTable,
    targets: &[String],
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let (specs, full1, full5) = draw_specs(scenes, cam, targets, cfg)?;
    if specs.is_empty() {
        return Err(EvalError::NoEligibleEpisodes);
    }
    let outcomes = run_specs(&Agent::Random, scenes, cam, ptable, &specs, cfg)?;
    Ok(assemble_report(
        &specs, &outcomes, full1, full5, scenes, "random", cfg.seed, None,
    ))
}
