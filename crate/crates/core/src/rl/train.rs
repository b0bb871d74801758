//! Asynchronous advantage actor-critic training.
//!
//! N workers each own an environment stream and a local gradient buffer.
//! Shared state (parameters, optimizer moments, episode counter, metrics) is
//! mutated only inside a single-writer critical section per update; workers
//! snapshot parameters at segment boundaries, so staleness is possible and
//! harmless. With one worker the whole run is bit-deterministic in the seed.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::catalog::ClassCatalog;
use crate::embed::EmbeddingTable;
use crate::grad::{optimizer_step, AdamConfig, AdamState, GradError, Gradients, Mode, ParamSet};
use crate::model::{HiddenState, PolicyNet};
use crate::rng::{derive_seed, Rng};
use crate::sim::{AgentPose, CameraConfig, ParentProbTable, Scene, HEADINGS};

use super::checkpoint::{save_checkpoint, Checkpoint};
use super::loss::a3c_loss;
use super::rollout::{collect_rollout, EnvSession};
use super::RlError;

/// Training hyperparameters and run controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub entropy_beta: f64,
    pub value_weight: f64,
    /// Steps per gradient segment.
    pub horizon: u32,
    pub workers: u32,
    /// Total episode budget across all workers.
    pub episodes: u64,
    pub lr: f64,
    /// Global gradient-norm clip.
    pub clip: f64,
    pub seed: u64,
    pub max_episode_steps: u32,
    /// Emit one metrics record every this many completed episodes.
    pub log_every: u64,
    /// Write a checkpoint every this many completed episodes (0 = only at
    /// the end).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            entropy_beta: 0.01,
            value_weight: 0.5,
            horizon: 30,
            workers: 1,
            episodes: 10_000,
            lr: 1e-4,
            clip: 40.0,
            seed: 1,
            max_episode_steps: 100,
            log_every: 200,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let ok = self.gamma > 0.0
            && self.gamma <= 1.0
            && self.horizon >= 1
            && self.workers >= 1
            && self.episodes >= 1
            && self.lr > 0.0
            && self.clip > 0.0
            && self.max_episode_steps >= 1
            && self.log_every >= 1;
        if ok {
            Ok(())
        } else {
            Err(RlError::BadConfig(format!("invalid train config {self:?}")))
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            clip: self.clip,
            ..AdamConfig::default()
        }
    }
}

/// Everything the trainer reads but never mutates.
pub struct TrainInputs<'a> {
    pub scenes: &'a [Scene],
    pub catalog: &'a ClassCatalog,
    pub table: &'a EmbeddingTable,
    pub ptable: &'a ParentProbTable,
    pub cam: &'a CameraConfig,
    pub net: &'a PolicyNet,
    /// Classes removed from every observation (zero-shot training).
    pub masked_classes: &'a BTreeSet<String>,
}

/// Parameters plus optimizer moments behind one lock: the single writer.
pub struct SharedOpt {
    pub params: ParamSet<f64>,
    pub adam: AdamState<f64>,
}

/// Result of pushing one worker's gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied { version: u64 },
    SkippedNonFinite,
}

/// Apply local gradients to the shared parameters under the lock. Non-finite
/// gradients skip the update and leave everything untouched.
pub fn apply_worker_update(
    shared: &Mutex<SharedOpt>,
    adam_cfg: &AdamConfig,
    grads: &mut Gradients<f64>,
) -> UpdateOutcome {
    let mut guard = shared.lock().expect("optimizer lock poisoned");
    let SharedOpt { params, adam } = &mut *guard;
    match optimizer_step(params, adam, adam_cfg, grads) {
        Ok(()) => UpdateOutcome::Applied {
            version: params.version(),
        },
        Err(GradError::NonFiniteGrad) => UpdateOutcome::SkippedNonFinite,
        Err(e) => panic!("optimizer misuse: {e}"),
    }
}

#[derive(Serialize)]
struct MetricsRecord {
    episode: u64,
    mean_reward: f64,
    mean_length: f64,
    success_rate: f64,
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    updates: u64,
    version: u64,
}

#[derive(Default)]
struct Window {
    episodes: u64,
    reward: f64,
    length: f64,
    successes: u64,
    policy: f64,
    value: f64,
    entropy: f64,
    steps: f64,
    updates: u64,
}

struct Metrics {
    completed: u64,
    window: Window,
    lines: Vec<String>,
}

struct Shared {
    opt: Mutex<SharedOpt>,
    claims: AtomicU64,
    nan_skips: AtomicU64,
    masked_leaks: AtomicU64,
    updates: AtomicU64,
    metrics: Mutex<Metrics>,
    worker_rng: Mutex<Vec<[u64; 4]>>,
    error: Mutex<Option<RlError>>,
}

/// Per-episode record a worker hands to the metrics sink.
struct EpisodeStats {
    reward: f64,
    steps: u32,
    success: bool,
    policy: f64,
    value: f64,
    entropy: f64,
    updates: u64,
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// JSONL metric records in emission order.
    pub metrics: Vec<String>,
    pub episodes_done: u64,
    pub updates: u64,
    pub nan_skips: u64,
    /// Masked-class detections that leaked into observations (audit; 0).
    pub masked_leaks: u64,
}

struct SceneMeta {
    free: Vec<(u32, u32)>,
    targets: Vec<String>,
}

fn scene_metas(inputs: &TrainInputs) -> Result<(Vec<SceneMeta>, Vec<usize>), RlError> {
    let metas: Vec<SceneMeta> = inputs
        .scenes
        .iter()
        .map(|s| {
            let targets = s
                .present_child_classes()
                .into_iter()
                .filter(|c| !inputs.masked_classes.contains(c))
                .filter(|c| inputs.table.contains(c))
                .collect();
            SceneMeta {
                free: s.free_cells(),
                targets,
            }
        })
        .collect();
    let eligible: Vec<usize> = metas
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.targets.is_empty() && !m.free.is_empty())
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        return Err(RlError::BadConfig(
            "no scene offers an unmasked, embedded target class".into(),
        ));
    }
    Ok((metas, eligible))
}

fn record_episode(
    shared: &Shared,
    cfg: &TrainConfig,
    stats: EpisodeStats,
    version_now: u64,
) -> u64 {
    let mut m = shared.metrics.lock().expect("metrics lock poisoned");
    m.completed += 1;
    let w = &mut m.window;
    w.episodes += 1;
    w.reward += stats.reward;
    w.length += stats.steps as f64;
    w.successes += stats.success as u64;
    w.policy += stats.policy;
    w.value += stats.value;
    w.entropy += stats.entropy;
    w.steps += stats.steps as f64;
    w.updates += stats.updates;
    if m.completed % cfg.log_every == 0 {
        let w = std::mem::take(&mut m.window);
        let n = w.episodes.max(1) as f64;
        let record = MetricsRecord {
            episode: m.completed,
            mean_reward: w.reward / n,
            mean_length: w.length / n,
            success_rate: w.successes as f64 / n,
            policy_loss: w.policy / n,
            value_loss: w.value / n,
            entropy: w.entropy / w.steps.max(1.0),
            updates: w.updates,
            version: version_now,
        };
        m.lines
            .push(serde_json::to_string(&record).expect("metrics serialize"));
    }
    m.completed
}

fn maybe_checkpoint(
    shared: &Shared,
    cfg: &TrainConfig,
    config_hash: u64,
    completed: u64,
    dir: Option<&Path>,
) -> Result<(), RlError> {
    let Some(dir) = dir else { return Ok(()) };
    if cfg.checkpoint_every == 0 || completed % cfg.checkpoint_every != 0 {
        return Ok(());
    }
    let ckpt = snapshot_checkpoint(shared, config_hash, completed);
    let path = dir.join(format!("ckpt_{completed:08}.bin"));
    save_checkpoint(&ckpt, &path)?;
    save_checkpoint(&ckpt, &dir.join("ckpt_latest.bin"))?;
    Ok(())
}

fn snapshot_checkpoint(shared: &Shared, config_hash: u64, episodes_done: u64) -> Checkpoint {
    let guard = shared.opt.lock().expect("optimizer lock poisoned");
    let worker_rng = shared.worker_rng.lock().expect("rng lock").clone();
    Checkpoint {
        config_hash,
        episodes_done,
        params: guard.params.clone(),
        adam: guard.adam.clone(),
        worker_rng,
    }
}

#[allow(clippy::too_many_arguments)]
fn worker_loop(
    shared: &Shared,
    inputs: &TrainInputs,
    cfg: &TrainConfig,
    metas: &[SceneMeta],
    eligible: &[usize],
    worker_idx: usize,
    config_hash: u64,
    ckpt_dir: Option<&Path>,
) -> Result<(), RlError> {
    let mut rng = {
        let states = shared.worker_rng.lock().expect("rng lock");
        Rng::from_state(states[worker_idx])
    };
    let adam_cfg = cfg.adam();

    loop {
        let claim = shared.claims.fetch_add(1, Ordering::SeqCst);
        if claim >= cfg.episodes {
            // Hand the unused claim back so the counter ends exactly at the
            // budget even when several workers race past it.
            shared.claims.fetch_sub(1, Ordering::SeqCst);
            return Ok(());
        }

        let scene_idx = eligible[rng.usize_below(eligible.len())];
        let scene = &inputs.scenes[scene_idx];
        let meta = &metas[scene_idx];
        let (i, j) = meta.free[rng.usize_below(meta.free.len())];
        let heading = HEADINGS[rng.usize_below(HEADINGS.len())];
        let start = AgentPose::new(i, j, heading, 0);
        let target = meta.targets[rng.usize_below(meta.targets.len())].clone();

        let masked = (!inputs.masked_classes.is_empty()).then_some(inputs.masked_classes);
        let mut env = EnvSession::begin(
            scene,
            inputs.cam,
            inputs.ptable,
            start,
            &target,
            masked,
            cfg.max_episode_steps,
            &mut rng,
        );
        let mut hidden = HiddenState::zeros(inputs.net.cfg.d_hidden);
        let mut stats = EpisodeStats {
            reward: 0.0,
            steps: 0,
            success: false,
            policy: 0.0,
            value: 0.0,
            entropy: 0.0,
            updates: 0,
        };
        let mut version_now = 0;

        while !env.over() {
            let snapshot = {
                let guard = shared.opt.lock().expect("optimizer lock poisoned");
                guard.params.clone()
            };
            let (mut seg, carried) = collect_rollout(
                &mut env,
                inputs.net,
                &snapshot,
                inputs.table,
                hidden,
                cfg.horizon,
                Mode::Train,
                &mut rng,
            )?;
            hidden = carried;
            let (loss_node, parts) =
                a3c_loss(&mut seg, cfg.gamma, cfg.entropy_beta, cfg.value_weight)?;
            stats.policy += parts.policy;
            stats.value += parts.value;
            stats.entropy += parts.entropy;
            stats.reward += seg.steps.iter().map(|s| s.reward).sum::<f64>();

            match seg.tape.backward(loss_node) {
                Ok(mut grads) => {
                    match apply_worker_update(&shared.opt, &adam_cfg, &mut grads) {
                        UpdateOutcome::Applied { version } => {
                            version_now = version;
                            stats.updates += 1;
                            shared.updates.fetch_add(1, Ordering::Relaxed);
                        }
                        UpdateOutcome::SkippedNonFinite => {
                            shared.nan_skips.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                }
                Err(GradError::NonFinite { .. }) => {
                    shared.nan_skips.fetch_add(1, Ordering::Relaxed);
                }
                Err(e) => return Err(e.into()),
            }
        }

        stats.steps = env.state.steps;
        stats.success = env.state.success;
        shared
            .masked_leaks
            .fetch_add(env.masked_leaks, Ordering::Relaxed);
        {
            let mut states = shared.worker_rng.lock().expect("rng lock");
            states[worker_idx] = rng.state();
        }
        let completed = record_episode(shared, cfg, stats, version_now);
        maybe_checkpoint(shared, cfg, config_hash, completed, ckpt_dir)?;
    }
}

/// Train a fresh or resumed policy. `config_hash` stamps checkpoints so a
/// resume under a different configuration is refused at load time.
pub fn train(
    inputs: &TrainInputs,
    cfg: &TrainConfig,
    config_hash: u64,
    resume: Option<Checkpoint>,
    ckpt_dir: Option<&Path>,
) -> Result<TrainOutcome, RlError> {
    cfg.validate()?;
    if let Some(dir) = ckpt_dir {
        std::fs::create_dir_all(dir)?;
    }
    let (metas, eligible) = scene_metas(inputs)?;

    let (params, adam, start_episodes, worker_rng) = match resume {
        Some(ckpt) => {
            let rng_states = if ckpt.worker_rng.len() == cfg.workers as usize {
                ckpt.worker_rng
            } else {
                fresh_worker_rng(cfg)
            };
            (ckpt.params, ckpt.adam, ckpt.episodes_done, rng_states)
        }
        None => {
            let params = inputs.net.init_params::<f64>(cfg.seed);
            let adam = AdamState::for_params(&params);
            (params, adam, 0, fresh_worker_rng(cfg))
        }
    };

    let shared = Shared {
        opt: Mutex::new(SharedOpt { params, adam }),
        claims: AtomicU64::new(start_episodes),
        nan_skips: AtomicU64::new(0),
        masked_leaks: AtomicU64::new(0),
        updates: AtomicU64::new(0),
        metrics: Mutex::new(Metrics {
            completed: start_episodes,
            window: Window::default(),
            lines: Vec::new(),
        }),
        worker_rng: Mutex::new(worker_rng),
        error: Mutex::new(None),
    };

    std::thread::scope(|scope| {
        for w in 0..cfg.workers as usize {
            let shared = &shared;
            let metas = &metas;
            let eligible = &eligible;
            scope.spawn(move || {
                if let Err(e) =
                    worker_loop(shared, inputs, cfg, metas, eligible, w, config_hash, ckpt_dir)
                {
                    let mut slot = shared.error.lock().expect("error lock");
                    if slot.is_none() {
                        *slot = Some(e);
                    }
                }
            });
        }
    });

    if let Some(e) = shared.error.lock().expect("error lock").take() {
        return Err(e);
    }

    let completed = shared.metrics.lock().expect("metrics lock").completed;
    let checkpoint = snapshot_checkpoint(&shared, config_hash, completed);
    if let Some(dir) = ckpt_dir {
        save_checkpoint(&checkpoint, &dir.join("ckpt_latest.bin"))?;
    }
    let metrics = std::mem::take(&mut shared.metrics.lock().expect("metrics lock").lines);
    Ok(TrainOutcome {
        checkpoint,
        metrics,
        episodes_done: completed,
        updates: shared.updates.load(Ordering::SeqCst),
        nan_skips: shared.nan_skips.load(Ordering::SeqCst),
        masked_leaks: shared.masked_leaks.load(Ordering::SeqCst),
    })
}

fn fresh_worker_rng(cfg: &TrainConfig) -> Vec<[u64; 4]> {
    (0..cfg.workers as u64)
        .map(|w| Rng::new(derive_seed(cfg.seed, 0x7071 + w)).state())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::desk_catalog;
    use crate::embed::synth_embeddings;
    use crate::grad::Tensor;
    use crate::model::{ModelConfig, PolicyNet};
    use crate::sim::{generate_scene, parent_prob_table, GenConfig, Split};

    fn small_world() -> (
        crate::catalog::ClassCatalog,
        Vec<Scene>,
        ParentProbTable,
        EmbeddingTable,
    ) {
        let cat = desk_catalog(2);
        let gen = GenConfig {
            grid_w: [8, 9],
            grid_h: [8, 9],
            ..GenConfig::default()
        };
        let scenes: Vec<Scene> = (0..8)
            .map(|k| generate_scene(&cat, &gen, 100 + k, &format!("s{k}"), Split::Train).unwrap())
            .collect();
        let ptable = parent_prob_table(&scenes, &cat).unwrap();
        let table = synth_embeddings(&cat, 8, 0.1, 3).unwrap();
        (cat, scenes, ptable, table)
    }

    fn run_small(seed: u64, workers: u32, episodes: u64) -> TrainOutcome {
        let (cat, scenes, ptable, table) = small_world();
        let net = PolicyNet::new(ModelConfig::tiny(8));
        let cam = CameraConfig::default();
        let masked = BTreeSet::new();
        let inputs = TrainInputs {
            scenes: &scenes,
            catalog: &cat,
            table: &table,
            ptable: &ptable,
            cam: &cam,
            net: &net,
            masked_classes: &masked,
        };
        let cfg = TrainConfig {
            workers,
            episodes,
            seed,
            max_episode_steps: 20,
            horizon: 10,
            log_every: 5,
            lr: 1e-3,
            ..TrainConfig::default()
        };
        train(&inputs, &cfg, 0xc0ffee, None, None).unwrap()
    }

    #[test]
    fn single_worker_fixed_seed_is_bit_reproducible() {
        let a = run_small(7, 1, 20);
        let b = run_small(7, 1, 20);
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.episodes_done, 20);
        for (x, y) in a
            .checkpoint
            .params
            .tensors()
            .zip(b.checkpoint.params.tensors())
        {
            assert_eq!(x.data(), y.data());
        }
        let c = run_small(8, 1, 20);
        assert_ne!(a.metrics, c.metrics);
    }

    #[test]
    fn episode_budget_is_exact_across_workers() {
        let out = run_small(3, 4, 25);
        assert_eq!(out.episodes_done, 25);
        assert_eq!(out.masked_leaks, 0);
        assert!(out.updates > 0);
        assert_eq!(out.checkpoint.episodes_done, 25);
    }

    #[test]
    fn no_updates_lost_under_worker_stress() {
        // Dummy single-parameter model: 8 threads hammer the shared
        // optimizer; version must count exactly the applied updates.
        let mut params = ParamSet::new();
        params
            .register("w", Tensor::row(vec![0.0f64; 4]))
            .unwrap();
        let adam = AdamState::for_params(&params);
        let shared = Mutex::new(SharedOpt { params, adam });
        let adam_cfg = AdamConfig::default();
        let skips = AtomicU64::new(0);
        let per_thread = 125u64;
        let threads = 8u64;
        std::thread::scope(|s| {
            for t in 0..threads {
                let shared = &shared;
                let skips = &skips;
                let adam_cfg = &adam_cfg;
                s.spawn(move || {
                    for k in 0..per_thread {
                        // Every 25th update is poisoned with NaN and must be skipped.
                        let bad = (t * per_thread + k) % 25 == 24;
                        let g = if bad { f64::NAN } else { 0.01 };
                        let mut grads =
                            Gradients::from_slots(vec![Tensor::row(vec![g; 4])]);
                        match apply_worker_update(shared, adam_cfg, &mut grads) {
                            UpdateOutcome::Applied { .. } => {}
                            UpdateOutcome::SkippedNonFinite => {
                                skips.fetch_add(1, Ordering::SeqCst);
                            }
                        }
                    }
                });
            }
        });
        let total = threads * per_thread;
        let skipped = skips.load(Ordering::SeqCst);
        let version = shared.lock().unwrap().params.version();
        assert_eq!(skipped, total / 25);
        assert_eq!(version, total - skipped, "lost updates");
    }

    #[test]
    fn resume_continues_episode_counter() {
        let (cat, scenes, ptable, table) = small_world();
        let net = PolicyNet::new(ModelConfig::tiny(8));
        let cam = CameraConfig::default();
        let masked = BTreeSet::new();
        let inputs = TrainInputs {
            scenes: &scenes,
            catalog: &cat,
            table: &table,
            ptable: &ptable,
            cam: &cam,
            net: &net,
            masked_classes: &masked,
        };
        let mut cfg = TrainConfig {
            workers: 1,
            episodes: 10,
            seed: 5,
            max_episode_steps: 15,
            horizon: 8,
            log_every: 5,
            ..TrainConfig::default()
        };
        let first = train(&inputs, &cfg, 42, None, None).unwrap();
        assert_eq!(first.episodes_done, 10);
        cfg.episodes = 16;
        let second = train(&inputs, &cfg, 42, Some(first.checkpoint), None).unwrap();
        assert_eq!(second.episodes_done, 16);
        let first_ep: u64 = 10;
        assert!(second.checkpoint.params.version() > 0);
        assert!(second.checkpoint.episodes_done > first_ep);
    }
}
