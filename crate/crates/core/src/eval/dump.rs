//! Qualitative inspection: per-step attention records and a top-down SVG
//! render of the trajectory.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::embed::EmbeddingTable;
use crate::grad::{Mode, ParamSet};
use crate::model::{Detection, HiddenState, PolicyNet};
use crate::rng::{derive_seed, Rng};
use crate::sim::{
    run_episode, AgentPose, CameraConfig, EpisodeResult, ParentProbTable, Scene, SimError,
    StepLog,
};

use super::EvalError;

#[derive(Serialize)]
struct MetaLine<'a> {
    r#type: &'static str,
    scene: &'a str,
    target: &'a str,
    start: &'a AgentPose,
    success: bool,
    steps: u32,
    optimal_len: Option<u32>,
    total_reward: f64,
    /// Fraction of steps where the target, when detected, carried the
    /// highest correspondence score. Reported, not asserted.
    target_top_corr_fraction: Option<f64>,
}

#[derive(Serialize)]
struct StepLine<'a> {
    r#type: &'static str,
    step: usize,
    pose: &'a AgentPose,
    action: &'static str,
    reward: f64,
    detections: &'a [Detection],
    v_corr: Option<&'a [f64]>,
    v_att: Option<&'a [f64]>,
}

#[derive(Debug, Clone)]
pub struct DumpSummary {
    pub result: EpisodeResult,
    pub steps_recorded: usize,
    pub target_top_corr_fraction: Option<f64>,
}

/// Run one greedy episode, writing a JSONL record (meta line + one line per
/// step) and optionally a top-down SVG of the trajectory.
#[allow(clippy::too_many_arguments)]
pub fn attention_dump(
    net: &PolicyNet,
    params: &ParamSet<f64>,
    table: &EmbeddingTable,
    scene: &Scene,
    cam: &CameraConfig,
    ptable: &ParentProbTable,
    start: AgentPose,
    target: &str,
    max_steps: u32,
    seed: u64,
    record_path: &Path,
    render_path: Option<&Path>,
) -> Result<DumpSummary, EvalError> {
    let mut rng = Rng::new(derive_seed(seed, 0xD0D0));
    let mut hidden = HiddenState::<f64>::zeros(net.cfg.d_hidden);
    let target_owned = target.to_string();

    let mut policy = |obs: &[Detection],
                      _state: &crate::sim::EpisodeState|
     -> Result<crate::sim::PolicyStep, SimError> {
        let (out, next_hidden, trace) = net
            .step(params, obs, &target_owned, table, &hidden, Mode::Eval, &mut rng)
            .map_err(|e| SimError::Policy(e.to_string()))?;
        hidden = next_hidden;
        let mut best = 0;
        for (i, v) in out.logits.iter().enumerate() {
            if *v > out.logits[best] {
                best = i;
            }
        }
        Ok((best, trace))
    };

    let (result, logs) = run_episode(
        scene, cam, ptable, start, target, max_steps, None, &mut policy,
    )?;

    // How often the detected target won the correspondence ranking.
    let mut with_target = 0usize;
    let mut target_top = 0usize;
    for log in &logs {
        if let Some(trace) = &log.trace {
            let target_rows: Vec<usize> = trace
                .detections
                .iter()
                .enumerate()
                .filter(|(_, d)| d.class == target)
                .map(|(i, _)| i)
                .collect();
            if target_rows.is_empty() {
                continue;
            }
            with_target += 1;
            let argmax = trace
                .v_corr
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            if target_rows.contains(&argmax) {
                target_top += 1;
            }
        }
    }
    let fraction = (with_target > 0).then(|| target_top as f64 / with_target as f64);

    let mut file = std::io::BufWriter::new(std::fs::File::create(record_path)?);
    let meta = MetaLine {
        r#type: "meta",
        scene: &scene.id,
        target,
        start: &start,
        success: result.success,
        steps: result.steps,
        optimal_len: result.optimal_len,
        total_reward: result.total_reward,
        target_top_corr_fraction: fraction,
    };
    writeln!(file, "{}", serde_json::to_string(&meta)?)?;
    for (k, log) in logs.iter().enumerate() {
        let line = StepLine {
            r#type: "step",
            step: k,
            pose: &log.pose,
            action: log.action.name(),
            reward: log.reward,
            detections: &log.detections,
            v_corr: log.trace.as_ref().map(|t| t.v_corr.as_slice()),
            v_att: log.trace.as_ref().map(|t| t.v_att.as_slice()),
        };
        writeln!(file, "{}", serde_json::to_string(&line)?)?;
    }
    file.flush()?;

    if let Some(path) = render_path {
        std::fs::write(path, render_svg(scene, &logs, target))?;
    }

    Ok(DumpSummary {
        result,
        steps_recorded: logs.len(),
        target_top_corr_fraction: fraction,
    })
}

/// Top-down vector render: grid, blocked cells, objects, the trajectory
/// polyline and a field-of-view wedge at sampled poses.
pub fn render_svg(scene: &Scene, logs: &[StepLog], target: &str) -> String {
    let scale = 40.0; // px per cell
    let w = scene.grid.w as f64 * scale;
    let h = scene.grid.h as f64 * scale;
    let px = |meters: f64| meters / scene.grid.cell_m * scale;
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    s.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"#fbfaf7\" stroke=\"#444\"/>\n"
    ));
    // Grid lines.
    for i in 1..scene.grid.w {
        let x = i as f64 * scale;
        s.push_str(&format!(
            "<line x1=\"{x}\" y1=\"0\" x2=\"{x}\" y2=\"{h}\" stroke=\"#eee\"/>\n"
        ));
    }
    for j in 1..scene.grid.h {
        let y = j as f64 * scale;
        s.push_str(&format!(
            "<line x1=\"0\" y1=\"{y}\" x2=\"{w}\" y2=\"{y}\" stroke=\"#eee\"/>\n"
        ));
    }
    for &(i, j) in &scene.blocked {
        s.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{scale}\" height=\"{scale}\" fill=\"#b9b3a8\"/>\n",
            i as f64 * scale,
            j as f64 * scale
        ));
    }
    for obj in &scene.objects {
        let (cx, cy) = (px(obj.x_w), px(obj.y_w));
        let r = px(obj.s / 2.0).clamp(3.0, scale * 1.4);
        let (fill, stroke) = if obj.class == target {
            ("#9ecbff", "#0052cc")
        } else if obj.is_parent {
            ("#d8c9a7", "#8a7545")
        } else {
            ("#cfe3cf", "#4a7a4a")
        };
        s.push_str(&format!(
            "<circle cx=\"{cx:.1}\" cy=\"{cy:.1}\" r=\"{r:.1}\" fill=\"{fill}\" stroke=\"{stroke}\"/>\n"
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"9\" fill=\"#333\">{}</text>\n",
            cx + r + 2.0,
            cy + 3.0,
            obj.class
        ));
    }
    // Field-of-view wedges at sampled poses.
    let stride = (logs.len() / 8).max(1);
    for log in logs.iter().step_by(stride) {
        let (cx, cy) = cell_px(scene, &log.pose, scale);
        let heading = (log.pose.heading_deg as f64).to_radians();
        let reach = scale * 4.0;
        for side in [-1.0f64, 1.0] {
            let a = heading + side * 45f64.to_radians();
            s.push_str(&format!(
                "<line x1=\"{cx:.1}\" y1=\"{cy:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#e8b0b0\" stroke-width=\"0.8\" opacity=\"0.6\"/>\n",
                cx + reach * a.cos(),
                cy + reach * a.sin()
            ));
        }
    }
    // Trajectory polyline.
    if !logs.is_empty() {
        let pts: Vec<String> = logs
            .iter()
            .map(|l| {
                let (x, y) = cell_px(scene, &l.pose, scale);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#d04040\" stroke-width=\"2\"/>\n",
            pts.join(" ")
        ));
        let (sx, sy) = cell_px(scene, &logs[0].pose, scale);
        s.push_str(&format!(
            "<circle cx=\"{sx:.1}\" cy=\"{sy:.1}\" r=\"5\" fill=\"#2d8a2d\"/>\n"
        ));
        let (ex, ey) = cell_px(scene, &logs[logs.len() - 1].pose, scale);
        s.push_str(&format!(
            "<circle cx=\"{ex:.1}\" cy=\"{ey:.1}\" r=\"5\" fill=\"none\" stroke=\"#d04040\" stroke-width=\"2\"/>\n"
        ));
    }
    s.push_str("</svg>\n");
    s
}

fn cell_px(scene: &Scene, pose: &AgentPose, scale: f64) -> (f64, f64) {
    let (x, y) = scene.cell_center(pose.i, pose.j);
    (x / scene.grid.cell_m * scale, y / scene.grid.cell_m * scale)
}
