//! Operator entry point: scene generation, training, evaluation and
//! episode inspection over one workspace directory.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 1 runtime error.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};

use objnav_core::config::{ConfigError, RunConfig};
use objnav_core::eval::{
    attention_dump, evaluate, random_baseline, zero_shot_split, EvalReport, SplitSpec,
};
use objnav_core::model::PolicyNet;
use objnav_core::rl::{load_checkpoint, train, TrainInputs};
use objnav_core::rng::derive_seed;
use objnav_core::sim::{
    generate_scene, parent_prob_table, save_scene, AgentPose, ParentProbTable, Scene,
    SceneManifest, Split, HEADINGS, SCENE_FORMAT_VERSION,
};

#[derive(Parser)]
#[command(name = "objnav", version, about = "Object-goal navigation: synthetic scenes, A3C training, SR/SPL evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClassSplit {
    Seen,
    Unseen,
    All,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SceneSplit {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scene set plus its train/test manifest.
    GenScenes {
        /// Run configuration file (JSON). Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Workspace directory for all outputs.
        #[arg(long)]
        out: PathBuf,
        /// Override the configured scene count.
        #[arg(long)]
        count: Option<u32>,
        /// Override the configured scene seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a policy on the workspace's training scenes.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Resume from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override the configured worker count.
        #[arg(long)]
        workers: Option<u32>,
        /// Override the configured episode budget.
        #[arg(long)]
        episodes: Option<u64>,
    },
    /// Evaluate a checkpoint (or the random baseline) and write a report.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint to evaluate; required unless --baseline is given.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Evaluate the uniform-random baseline instead of a checkpoint.
        #[arg(long)]
        baseline: bool,
        /// Target-class filter; seen/unseen need a split in the config.
        #[arg(long, value_enum, default_value_t = ClassSplit::All)]
        split: ClassSplit,
        /// Which scene split to evaluate on.
        #[arg(long, value_enum, default_value_t = SceneSplit::Test)]
        scene_split: SceneSplit,
        /// Override episodes per bucket.
        #[arg(long)]
        episodes: Option<u32>,
    },
    /// Run one greedy episode and export its attention record (and render).
    Inspect {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Scene file to inspect.
        #[arg(long)]
        scene: PathBuf,
        /// Target class.
        #[arg(long)]
        target: String,
        /// Start pose "i,j,heading,pitch"; defaults to the first free cell.
        #[arg(long)]
        start: Option<String>,
        /// Also write a top-down SVG render.
        #[arg(long)]
        render: bool,
        #[arg(long, default_value_t = 100)]
        max_steps: u32,
    },
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}
runtime_from!(
    objnav_core::sim::SimError,
    objnav_core::rl::RlError,
    objnav_core::eval::EvalError,
    objnav_core::model::ModelError,
    objnav_core::embed::EmbedError,
    std::io::Error,
    serde_json::Error
);

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => {
            if !p.exists() {
                return Err(CliError::Usage(format!("config file {} not found", p.display())));
            }
            Ok(RunConfig::from_file(p)?)
        }
        None => Ok(RunConfig::default()),
    }
}

/// Workspace layout: everything lives under --out.
struct Workspace {
    root: PathBuf,
}

impl Workspace {
    fn new(root: &Path) -> std::io::Result<Self> {
        for sub in ["scenes", "checkpoints", "reports", "dumps"] {
            std::fs::create_dir_all(root.join(sub))?;
        }
        Ok(Workspace {
            root: root.to_path_buf(),
        })
    }
    fn scenes(&self) -> PathBuf {
        self.root.join("scenes")
    }
    fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }
    fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
    fn dumps(&self) -> PathBuf {
        self.root.join("dumps")
    }
    fn manifest(&self) -> PathBuf {
        self.scenes().join("manifest.json")
    }

    /// Persist the resolved config and a run-info header (the only place a
    /// timestamp appears).
    fn stamp(&self, cfg: &RunConfig, command: &str) -> Result<(), CliError> {
        cfg.save(&self.root.join("resolved_config.json"))?;
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let info = serde_json::json!({
            "command": command,
            "started_unix": now,
            "structural_hash": format!("{:016x}", cfg.structural_hash()),
        });
        std::fs::write(
            self.root.join("run_info.json"),
            serde_json::to_string_pretty(&info)? + "\n",
        )?;
        Ok(())
    }
}

fn resolve_split(cfg: &RunConfig) -> Result<Option<SplitSpec>, CliError> {
    match &cfg.split {
        None => Ok(None),
        Some(s) => {
            let catalog = cfg.build_catalog()?;
            let spec = zero_shot_split(&catalog, s.seen, s.unseen, s.seed)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(Some(spec))
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenScenes {
            config,
            out,
            count,
            seed,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(c) = count {
                cfg.scenes.count = c;
            }
            if let Some(s) = seed {
                cfg.scenes.seed = s;
            }
            cfg.validate()?;
            let ws = Workspace::new(&out)?;
            ws.stamp(&cfg, "gen-scenes")?;
            cmd_gen_scenes(&cfg, &ws)
        }
        Command::Train {
            config,
            out,
            resume,
            workers,
            episodes,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(w) = workers {
                cfg.train.workers = w;
            }
            if let Some(e) = episodes {
                cfg.train.episodes = e;
            }
            cfg.validate()?;
            let ws = Workspace::new(&out)?;
            ws.stamp(&cfg, "train")?;
            cmd_train(&cfg, &ws, resume.as_deref())
        }
        Command::Eval {
            config,
            out,
            checkpoint,
            baseline,
            split,
            scene_split,
            episodes,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(e) = episodes {
                cfg.eval.episodes_per_bucket = e;
            }
            cfg.validate()?;
            if checkpoint.is_none() && !baseline {
                return Err(CliError::Usage(
                    "eval needs --checkpoint or --baseline".into(),
                ));
            }
            let ws = Workspace::new(&out)?;
            ws.stamp(&cfg, "eval")?;
            cmd_eval(&cfg, &ws, checkpoint.as_deref(), baseline, split, scene_split)
        }
        Command::Inspect {
            config,
            out,
            checkpoint,
            scene,
            target,
            start,
            render,
            max_steps,
        } => {
            let cfg = load_config(&config)?;
            cfg.validate()?;
            let ws = Workspace::new(&out)?;
            ws.stamp(&cfg, "inspect")?;
            cmd_inspect(&cfg, &ws, &checkpoint, &scene, &target, start, render, max_steps)
        }
    }
}

fn cmd_gen_scenes(cfg: &RunConfig, ws: &Workspace) -> Result<(), CliError> {
    let catalog = cfg.build_catalog()?;
    let n = cfg.scenes.count;
    let n_train = ((n as f64) * cfg.scenes.train_ratio).round() as u32;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for k in 0..n {
        let split = if k < n_train { Split::Train } else { Split::Test };
        let id = format!("scene_{k:04}");
        let scene = generate_scene(
            &catalog,
            &cfg.generator,
            derive_seed(cfg.scenes.seed, k as u64),
            &id,
            split,
        )?;
        let file = format!("{id}.json");
        save_scene(&scene, &ws.scenes().join(&file))?;
        match split {
            Split::Train => train.push(file),
            Split::Test => test.push(file),
        }
    }
    let manifest = SceneManifest {
        version: SCENE_FORMAT_VERSION,
        train,
        test,
    };
    manifest.save(&ws.manifest())?;
    println!(
        "generated {} scenes ({} train / {} test) under {}",
        n,
        manifest.train.len(),
        manifest.test.len(),
        ws.scenes().display()
    );
    Ok(())
}

struct World {
    catalog: objnav_core::catalog::ClassCatalog,
    table: objnav_core::embed::EmbeddingTable,
    net: PolicyNet,
    train_scenes: Vec<Scene>,
    test_scenes: Vec<Scene>,
    ptable: ParentProbTable,
}

fn load_world(cfg: &RunConfig, ws: &Workspace) -> Result<World, CliError> {
    let resolved = cfg.resolve()?;
    if !ws.manifest().exists() {
        return Err(CliError::Runtime(format!(
            "no scene manifest at {}; run gen-scenes first",
            ws.manifest().display()
        )));
    }
    let manifest = SceneManifest::load(&ws.manifest())?;
    let train_scenes = manifest.load_scenes(&ws.scenes(), Split::Train)?;
    let test_scenes = manifest.load_scenes(&ws.scenes(), Split::Test)?;
    if train_scenes.is_empty() {
        return Err(CliError::Runtime("manifest holds no training scenes".into()));
    }
    let ptable = parent_prob_table(&train_scenes, &resolved.catalog)?;
    Ok(World {
        net: PolicyNet::new(resolved.model),
        catalog: resolved.catalog,
        table: resolved.table,
        train_scenes,
        test_scenes,
        ptable,
    })
}

fn cmd_train(cfg: &RunConfig, ws: &Workspace, resume: Option<&Path>) -> Result<(), CliError> {
    let world = load_world(cfg, ws)?;
    let split = resolve_split(cfg)?;
    let masked: BTreeSet<String> = split
        .as_ref()
        .map(|s| s.unseen.iter().cloned().collect())
        .unwrap_or_default();

    let hash = cfg.structural_hash();
    let resume_ckpt = match resume {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::Runtime(format!(
                    "checkpoint {} not found",
                    path.display()
                )));
            }
            Some(load_checkpoint(path, Some(hash))?)
        }
        None => None,
    };

    let inputs = TrainInputs {
        scenes: &world.train_scenes,
        catalog: &world.catalog,
        table: &world.table,
        ptable: &world.ptable,
        cam: &cfg.camera,
        net: &world.net,
        masked_classes: &masked,
    };
    let outcome = train(
        &inputs,
        &cfg.train,
        hash,
        resume_ckpt,
        Some(&ws.checkpoints()),
    )?;

    let mut log = outcome.metrics.join("\n");
    if !log.is_empty() {
        log.push('\n');
    }
    std::fs::write(ws.root.join("metrics.jsonl"), log)?;

    println!(
        "trained {} episodes, {} updates ({} non-finite skipped), masked-class leaks: {}",
        outcome.episodes_done, outcome.updates, outcome.nan_skips, outcome.masked_leaks
    );
    println!(
        "checkpoint: {}",
        ws.checkpoints().join("ckpt_latest.bin").display()
    );
    Ok(())
}

fn cmd_eval(
    cfg: &RunConfig,
    ws: &Workspace,
    checkpoint: Option<&Path>,
    baseline: bool,
    split_sel: ClassSplit,
    scene_split: SceneSplit,
) -> Result<(), CliError> {
    let world = load_world(cfg, ws)?;
    let split = resolve_split(cfg)?;
    let targets: Vec<String> = match (split_sel, &split) {
        (ClassSplit::All, _) => world.catalog.child_names(),
        (ClassSplit::Seen, Some(s)) => s.seen.clone(),
        (ClassSplit::Unseen, Some(s)) => s.unseen.clone(),
        (ClassSplit::Seen | ClassSplit::Unseen, None) => {
            return Err(CliError::Usage(
                "--split seen/unseen needs a split section in the config".into(),
            ))
        }
    };
    let scenes = match scene_split {
        SceneSplit::Train => &world.train_scenes,
        SceneSplit::Test => &world.test_scenes,
    };
    if scenes.is_empty() {
        return Err(CliError::Runtime("selected scene split is empty".into()));
    }

    let split_label = match split_sel {
        ClassSplit::All => "all",
        ClassSplit::Seen => "seen",
        ClassSplit::Unseen => "unseen",
    };

    let (report, label): (EvalReport, String) = if baseline {
        let report = random_baseline(scenes, &cfg.camera, &world.ptable, &targets, &cfg.eval)?;
        (report, format!("random_{split_label}"))
    } else {
        let path = checkpoint.expect("checked in run()");
        if !path.exists() {
            return Err(CliError::Runtime(format!(
                "checkpoint {} not found",
                path.display()
            )));
        }
        let ckpt = load_checkpoint(path, Some(cfg.structural_hash()))?;
        let report = evaluate(
            &world.net,
            &ckpt.params,
            &world.table,
            scenes,
            &cfg.camera,
            &world.ptable,
            &targets,
            split_label,
            &cfg.eval,
        )?;
        (report, split_label.to_string())
    };

    let out_path = ws.reports().join(format!("eval_{label}.json"));
    report.save_json(&out_path)?;
    println!("{}", report.render_row(&label));
    println!("report: {}", out_path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_inspect(
    cfg: &RunConfig,
    ws: &Workspace,
    checkpoint: &Path,
    scene_path: &Path,
    target: &str,
    start: Option<String>,
    render: bool,
    max_steps: u32,
) -> Result<(), CliError> {
    let world = load_world(cfg, ws)?;
    if !checkpoint.exists() {
        return Err(CliError::Runtime(format!(
            "checkpoint {} not found",
            checkpoint.display()
        )));
    }
    let ckpt = load_checkpoint(checkpoint, Some(cfg.structural_hash()))?;
    let scene = objnav_core::sim::load_scene(scene_path)?;
    let start_pose = match start {
        Some(text) => parse_pose(&text)?,
        None => {
            let free = scene.free_cells();
            AgentPose::new(free[0].0, free[0].1, HEADINGS[0], 0)
        }
    };

    let stem = format!("{}_{}", scene.id, target);
    let record = ws.dumps().join(format!("{stem}.jsonl"));
    let svg = render.then(|| ws.dumps().join(format!("{stem}.svg")));
    let summary = attention_dump(
        &world.net,
        &ckpt.params,
        &world.table,
        &scene,
        &cfg.camera,
        &world.ptable,
        start_pose,
        target,
        max_steps,
        cfg.eval.seed,
        &record,
        svg.as_deref(),
    )?;
    println!(
        "episode: success={} steps={} optimal={:?} target-top-corr={}",
        summary.result.success,
        summary.result.steps,
        summary.result.optimal_len,
        summary
            .target_top_corr_fraction
            .map(|f| format!("{f:.2}"))
            .unwrap_or_else(|| "n/a".into()),
    );
    println!("record: {}", record.display());
    if let Some(svg) = svg {
        println!("render: {}", svg.display());
    }
    Ok(())
}

fn parse_pose(text: &str) -> Result<AgentPose, CliError> {
    let parts: Vec<&str> = text.split(',').map(|s| s.trim()).collect();
    if parts.len() != 4 {
        return Err(CliError::Usage(format!(
            "--start must be \"i,j,heading,pitch\", got {text:?}"
        )));
    }
    let parse = |s: &str| -> Result<i64, CliError> {
        s.parse()
            .map_err(|_| CliError::Usage(format!("bad number {s:?} in --start")))
    };
    let (i, j) = (parse(parts[0])?, parse(parts[1])?);
    let heading = parse(parts[2])?;
    let pitch = parse(parts[3])?;
    if i < 0 || j < 0 || heading < 0 || heading % 45 != 0 || pitch % 30 != 0 || pitch.abs() > 30 {
        return Err(CliError::Usage(format!("invalid pose {text:?}")));
    }
    Ok(AgentPose::new(
        i as u32,
        j as u32,
        (heading % 360) as u16,
        pitch as i16,
    ))
}
