//! Evaluation report types and the SR/SPL arithmetic.

use serde::{Deserialize, Serialize};

/// One evaluated episode, reduced to what the metrics need.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeOutcome {
    pub success: bool,
    /// Actions taken, Done included.
    pub steps: u32,
    /// Optimal motion-action count from the start state.
    pub optimal: u32,
}

/// Success rate and success-weighted-by-path-length, both in percent.
/// SPL term per episode: S * L / max(L, e).
pub fn sr_spl(outcomes: &[EpisodeOutcome]) -> (f64, f64) {
    if outcomes.is_empty() {
        return (0.0, 0.0);
    }
    let n = outcomes.len() as f64;
    let mut sr = 0.0;
    let mut spl = 0.0;
    for o in outcomes {
        if o.success {
            sr += 1.0;
            spl += o.optimal as f64 / (o.optimal.max(o.steps) as f64);
        }
    }
    (100.0 * sr / n, 100.0 * spl / n)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BucketReport {
    pub sr: f64,
    pub spl: f64,
    pub episodes: u32,
    /// False marks a bucket whose quota could not be filled.
    pub complete: bool,
}

impl BucketReport {
    pub fn empty() -> Self {
        BucketReport {
            sr: 0.0,
            spl: 0.0,
            episodes: 0,
            complete: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClassReport {
    pub class: String,
    pub sr: f64,
    pub spl: f64,
    pub episodes: u32,
}

/// Full evaluation output with provenance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub version: u32,
    /// Hex FNV of the evaluated parameter set; None for the random baseline.
    pub checkpoint_hash: Option<String>,
    /// Which class filter produced this report (all/seen/unseen/random).
    pub split: String,
    pub seed: u64,
    pub scene_ids: Vec<String>,
    /// Bucket of episodes with optimal length >= 1.
    pub l1: BucketReport,
    /// Bucket of episodes with optimal length >= 5 (subset of l1).
    pub l5: BucketReport,
    pub per_class: Vec<ClassReport>,
}

impl EvalReport {
    /// Aligned two-bucket summary, one row per report.
    pub fn render_row(&self, label: &str) -> String {
        format!(
            "{label:<16} | L>=1: SR {:6.1}%  SPL {:6.1}%  (n={:4}{}) | L>=5: SR {:6.1}%  SPL {:6.1}%  (n={:4}{})",
            self.l1.sr,
            self.l1.spl,
            self.l1.episodes,
            if self.l1.complete { "" } else { ", short" },
            self.l5.sr,
            self.l5.spl,
            self.l5.episodes,
            if self.l5.complete { "" } else { ", short" },
        )
    }

    pub fn save_json(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self).unwrap() + "\n")
    }
}
