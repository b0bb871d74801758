//! Ablation campaigns: train and evaluate each module variant across seeds,
//! then tabulate SR/SPL per bucket with mean and standard error.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::catalog::ClassCatalog;
use crate::embed::EmbeddingTable;
use crate::model::{Ablation, ModelConfig, PolicyNet};
use crate::rl::{train, TrainConfig, TrainInputs};
use crate::sim::{CameraConfig, ParentProbTable, Scene};

use super::evaluate::{evaluate, EvalConfig};
use super::report::EvalReport;
use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

fn mean_stderr(xs: &[f64]) -> MeanStderr {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let stderr = if xs.len() < 2 {
        0.0
    } else {
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    MeanStderr { mean, stderr }
}

/// One variant row: SR/SPL for both buckets, aggregated over seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub l1_sr: MeanStderr,
    pub l1_spl: MeanStderr,
    pub l5_sr: MeanStderr,
    pub l5_spl: MeanStderr,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
    /// Raw per-(variant, seed) reports for archival.
    pub reports: Vec<(String, u64, EvalReport)>,
}

impl AblationTable {
    pub fn row(&self, variant: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    /// Aligned text table shaped like the usual module on/off grids.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} | {:>15} {:>15} | {:>15} {:>15}\n",
            "variant", "L>=1 SR(%)", "L>=1 SPL(%)", "L>=5 SR(%)", "L>=5 SPL(%)"
        ));
        out.push_str(&"-".repeat(82));
        out.push('\n');
        for r in &self.rows {
            let cell = |m: &MeanStderr| format!("{:6.1} ± {:4.1}", m.mean, m.stderr);
            out.push_str(&format!(
                "{:<12} | {:>15} {:>15} | {:>15} {:>15}\n",
                r.variant,
                cell(&r.l1_sr),
                cell(&r.l1_spl),
                cell(&r.l5_sr),
                cell(&r.l5_spl),
            ));
        }
        out
    }
}

/// Everything one ablation campaign needs.
pub struct AblationSpec<'a> {
    pub train_scenes: &'a [Scene],
    pub eval_scenes: &'a [Scene],
    pub catalog: &'a ClassCatalog,
    pub table: &'a EmbeddingTable,
    pub ptable: &'a ParentProbTable,
    pub cam: &'a CameraConfig,
    pub model_cfg: ModelConfig,
    pub train_cfg: TrainConfig,
    pub eval_cfg: EvalConfig,
    pub variants: Vec<Ablation>,
    pub seeds: Vec<u64>,
    /// Concurrent (variant, seed) cells; each cell trains single-worker so
    /// results stay deterministic.
    pub parallel_cells: u32,
}

/// Train and evaluate every (variant, seed) cell. Targets are the catalog's
/// full child vocabulary.
pub fn run_ablation(spec: &AblationSpec) -> Result<AblationTable, EvalError> {
    if spec.seeds.is_empty() || spec.variants.is_empty() {
        return Err(EvalError::BadSpec("ablation needs >=1 seed and variant".into()));
    }
    let cells: Vec<(Ablation, u64)> = spec
        .variants
        .iter()
        .flat_map(|v| spec.seeds.iter().map(move |s| (*v, *s)))
        .collect();

    let results: Vec<Mutex<Option<Result<(String, u64, EvalReport), EvalError>>>> =
        (0..cells.len()).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = spec.parallel_cells.max(1) as usize;

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= cells.len() {
                    break;
                }
                let (variant, seed) = cells[idx];
                let out = run_cell(spec, variant, seed);
                *results[idx].lock().expect("cell slot") = Some(out);
            });
        }
    });

    let mut reports = Vec::new();
    for slot in results {
        reports.push(slot.into_inner().expect("slot").expect("cell ran")?);
    }

    let mut rows = Vec::new();
    for variant in &spec.variants {
        let label = variant.label().to_string();
        let of: Vec<&EvalReport> = reports
            .iter()
            .filter(|(v, _, _)| v == &label)
            .map(|(_, _, r)| r)
            .collect();
        let col = |f: &dyn Fn(&EvalReport) -> f64| {
            mean_stderr(&of.iter().map(|r| f(r)).collect::<Vec<f64>>())
        };
        rows.push(AblationRow {
            variant: label,
            l1_sr: col(&|r| r.l1.sr),
            l1_spl: col(&|r| r.l1.spl),
            l5_sr: col(&|r| r.l5.sr),
            l5_spl: col(&|r| r.l5.spl),
        });
    }
    Ok(AblationTable {
        seeds: spec.seeds.clone(),
        rows,
        reports,
    })
}

fn run_cell(
    spec: &AblationSpec,
    variant: Ablation,
    seed: u64,
) -> Result<(String, u64, EvalReport), EvalError> {
    let mut model_cfg = spec.model_cfg;
    model_cfg.ablation = variant;
    let net = PolicyNet::new(model_cfg);
    let masked = BTreeSet::new();
    let inputs = TrainInputs {
        scenes: spec.train_scenes,
        catalog: spec.catalog,
        table: spec.table,
        ptable: spec.ptable,
        cam: spec.cam,
        net: &net,
        masked_classes: &masked,
    };
    let mut train_cfg = spec.train_cfg;
    train_cfg.seed = seed;
    train_cfg.workers = 1;
    let outcome = train(&inputs, &train_cfg, 0, None, None)?;

    let mut eval_cfg = spec.eval_cfg;
    eval_cfg.seed = seed ^ 0xEEE;
    let targets = spec.catalog.child_names();
    let report = evaluate(
        &net,
        &outcome.checkpoint.params,
        spec.table,
        spec.eval_scenes,
        spec.cam,
        spec.ptable,
        &targets,
        variant.label(),
        &eval_cfg,
    )?;
    Ok((variant.label().to_string(), seed, report))
}
