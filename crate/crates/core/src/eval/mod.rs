//! Evaluation harness: SR/SPL buckets, zero-shot splits, ablation grids,
//! random baseline, and attention/trajectory export.

mod ablation;
mod dump;
mod evaluate;
mod report;
mod split;

pub use ablation::{run_ablation, AblationRow, AblationSpec, AblationTable, MeanStderr};
pub use dump::{attention_dump, render_svg, DumpSummary};
pub use evaluate::{evaluate, random_baseline, EvalConfig, EVAL_REPORT_VERSION};
pub use report::{sr_spl, BucketReport, ClassReport, EpisodeOutcome, EvalReport};
pub use split::{zero_shot_split, SplitSpec};

use thiserror::Error;

use crate::embed::EmbedError;
use crate::model::ModelError;
use crate::rl::RlError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("no scene offers an eligible target for this evaluation")]
    NoEligibleEpisodes,
    #[error("infeasible zero-shot split: {0}")]
    InfeasibleSplit(String),
    #[error("bad ablation spec: {0}")]
    BadSpec(String),
    #[error("metric invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
