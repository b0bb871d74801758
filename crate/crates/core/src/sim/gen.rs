//! Procedural scene generation.
//!
//! Parents (furniture) are placed first, one instance of every parent class
//! plus extras, each blocking its cell; random obstacle cells follow; the
//! free space is rejected unless fully connected under the 8-neighborhood.
//! Children are placed near a parent instance sampled from their placement
//! prior, or uniformly with the residual probability.

use serde::{Deserialize, Serialize};

use crate::catalog::{ClassCatalog, ClassSpec};
use crate::rng::Rng;

use super::scene::{q6, GridSpec, ObjectInstance, Scene, Split, CELL_M, SCENE_FORMAT_VERSION};
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    /// Inclusive grid width range, in cells.
    pub grid_w: [u32; 2],
    pub grid_h: [u32; 2],
    /// Fraction of cells turned into freestanding obstacles.
    pub blocked_frac: f64,
    /// Extra parent instances beyond one per parent class.
    pub extra_parents: [u32; 2],
    /// Child instance count range.
    pub children: [u32; 2],
    /// Minimum Chebyshev separation between parent cells.
    pub min_parent_sep_cells: u32,
    /// Children placed near a parent land within this distance of it.
    pub child_radius_m: f64,
    /// Probability a child is placed near a prior-sampled parent instead of
    /// uniformly.
    pub child_near_parent_prob: f64,
    /// Within-cell position jitter.
    pub jitter_m: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            grid_w: [11, 14],
            grid_h: [11, 14],
            blocked_frac: 0.06,
            extra_parents: [1, 2],
            children: [5, 9],
            min_parent_sep_cells: 3,
            child_radius_m: 0.6,
            child_near_parent_prob: 0.85,
            jitter_m: 0.08,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.grid_w[0] >= 3
            && self.grid_w[0] <= self.grid_w[1]
            && self.grid_h[0] >= 3
            && self.grid_h[0] <= self.grid_h[1]
            && (0.0..0.5).contains(&self.blocked_frac)
            && self.extra_parents[0] <= self.extra_parents[1]
            && self.children[0] <= self.children[1]
            && self.child_radius_m > 0.0
            && (0.0..=1.0).contains(&self.child_near_parent_prob)
            && self.jitter_m >= 0.0
            && self.jitter_m < CELL_M / 2.0;
        if ok {
            Ok(())
        } else {
            Err(SimError::UnsatisfiableConfig(format!(
                "invalid generator config {self:?}"
            )))
        }
    }
}

fn range_sample(rng: &mut Rng, range: [u32; 2]) -> u32 {
    range[0] + rng.below((range[1] - range[0] + 1) as u64) as u32
}

fn connected(w: u32, h: u32, blocked: &[(u32, u32)]) -> bool {
    let is_blocked = |i: i64, j: i64| blocked.binary_search(&(i as u32, j as u32)).is_ok();
    let mut free = Vec::new();
    for i in 0..w {
        for j in 0..h {
            if !is_blocked(i as i64, j as i64) {
                free.push((i, j));
            }
        }
    }
    if free.is_empty() {
        return false;
    }
    let idx = |i: u32, j: u32| (j * w + i) as usize;
    let mut seen = vec![false; (w * h) as usize];
    let mut stack = vec![free[0]];
    seen[idx(free[0].0, free[0].1)] = true;
    let mut count = 1;
    while let Some((i, j)) = stack.pop() {
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni < 0 || nj < 0 || ni >= w as i64 || nj >= h as i64 {
                    continue;
                }
                let (ni, nj) = (ni as u32, nj as u32);
                if !seen[idx(ni, nj)] && !is_blocked(ni as i64, nj as i64) {
                    seen[idx(ni, nj)] = true;
                    count += 1;
                    stack.push((ni, nj));
                }
            }
        }
    }
    count == free.len()
}

/// Deterministic in (catalog, config, seed); same seed, same scene.
pub fn generate_scene(
    catalog: &ClassCatalog,
    cfg: &GenConfig,
    seed: u64,
    id: &str,
    split: Split,
) -> Result<Scene, SimError> {
    cfg.validate()?;
    let mut rng = Rng::new(seed);
    let parent_classes: Vec<&ClassSpec> = catalog.parents().collect();
    let child_classes: Vec<&ClassSpec> = catalog.children().collect();
    if parent_classes.is_empty() || child_classes.is_empty() {
        return Err(SimError::UnsatisfiableConfig(
            "catalog needs at least one parent and one child class".into(),
        ));
    }

    'attempt: for _ in 0..64 {
        let w = range_sample(&mut rng, cfg.grid_w);
        let h = range_sample(&mut rng, cfg.grid_h);

        // Parent instances: one per class plus extras.
        let mut parent_specs: Vec<&ClassSpec> = parent_classes.clone();
        for _ in 0..range_sample(&mut rng, cfg.extra_parents) {
            parent_specs.push(parent_classes[rng.usize_below(parent_classes.len())]);
        }
        if parent_specs.len() as u32 * (cfg.min_parent_sep_cells.max(1).pow(2)) > w * h {
            return Err(SimError::UnsatisfiableConfig(format!(
                "{} parents cannot fit a {w}x{h} grid at separation {}",
                parent_specs.len(),
                cfg.min_parent_sep_cells
            )));
        }

        let mut parent_cells: Vec<(u32, u32)> = Vec::new();
        for _ in &parent_specs {
            let mut placed = false;
            for _ in 0..200 {
                let cand = (rng.below(w as u64) as u32, rng.below(h as u64) as u32);
                let far_enough = parent_cells.iter().all(|&(i, j)| {
                    let d = (i as i64 - cand.0 as i64)
                        .abs()
                        .max((j as i64 - cand.1 as i64).abs());
                    d >= cfg.min_parent_sep_cells as i64
                });
                if far_enough {
                    parent_cells.push(cand);
                    placed = true;
                    break;
                }
            }
            if !placed {
                continue 'attempt;
            }
        }

        // Obstacles on cells not taken by parents.
        let mut blocked: Vec<(u32, u32)> = parent_cells.clone();
        blocked.sort();
        let n_obstacles = (cfg.blocked_frac * (w * h) as f64).floor() as usize;
        let mut guard = 0;
        while blocked.len() < parent_cells.len() + n_obstacles {
            let cand = (rng.below(w as u64) as u32, rng.below(h as u64) as u32);
            if let Err(pos) = blocked.binary_search(&cand) {
                blocked.insert(pos, cand);
            }
            guard += 1;
            if guard > 10_000 {
                continue 'attempt;
            }
        }
        if blocked.len() >= (w * h) as usize || !connected(w, h, &blocked) {
            continue 'attempt;
        }

        let cell_center =
            |(i, j): (u32, u32)| ((i as f64 + 0.5) * CELL_M, (j as f64 + 0.5) * CELL_M);
        let mut objects: Vec<ObjectInstance> = Vec::new();
        for (spec, &cell) in parent_specs.iter().zip(&parent_cells) {
            let (cx, cy) = cell_center(cell);
            objects.push(ObjectInstance {
                class: spec.name.clone(),
                x_w: q6(cx + rng.uniform(-cfg.jitter_m, cfg.jitter_m)),
                y_w: q6(cy + rng.uniform(-cfg.jitter_m, cfg.jitter_m)),
                z_w: q6(rng.uniform(spec.z_range[0], spec.z_range[1])),
                s: spec.size_m,
                is_parent: true,
            });
        }

        // Children.
        let free: Vec<(u32, u32)> = {
            let mut v = Vec::new();
            for i in 0..w {
                for j in 0..h {
                    if blocked.binary_search(&(i, j)).is_err() {
                        v.push((i, j));
                    }
                }
            }
            v
        };
        let n_children = range_sample(&mut rng, cfg.children);
        for _ in 0..n_children {
            let spec = child_classes[rng.usize_below(child_classes.len())];
            let near_parent = rng.chance(cfg.child_near_parent_prob) && !spec.placement.is_empty();
            let (mut x, mut y) = if near_parent {
                let weights: Vec<f64> = spec.placement.iter().map(|(_, w)| *w).collect();
                let pclass = &spec.placement[rng.weighted(&weights)].0;
                let anchors: Vec<&ObjectInstance> = objects
                    .iter()
                    .filter(|o| &o.class == pclass)
                    .collect();
                let anchor = anchors[rng.usize_below(anchors.len())];
                let (ax, ay) = (anchor.x_w, anchor.y_w);
                // Candidate cells near the anchor: its own cell or free ones.
                let anchor_cell = (
                    (ax / CELL_M).floor().min(w as f64 - 1.0) as u32,
                    (ay / CELL_M).floor().min(h as f64 - 1.0) as u32,
                );
                let mut cands: Vec<(u32, u32)> = Vec::new();
                for &cell in free.iter().chain(std::iter::once(&anchor_cell)) {
                    let (cx, cy) = cell_center(cell);
                    if ((cx - ax).powi(2) + (cy - ay).powi(2)).sqrt() <= cfg.child_radius_m {
                        cands.push(cell);
                    }
                }
                let cell = if cands.is_empty() {
                    anchor_cell
                } else {
                    cands[rng.usize_below(cands.len())]
                };
                let (cx, cy) = cell_center(cell);
                let mut x = cx + rng.uniform(-cfg.jitter_m, cfg.jitter_m);
                let mut y = cy + rng.uniform(-cfg.jitter_m, cfg.jitter_m);
                // Keep the jittered point inside the radius.
                let d = ((x - ax).powi(2) + (y - ay).powi(2)).sqrt();
                if d > cfg.child_radius_m {
                    let scale = cfg.child_radius_m * 0.95 / d;
                    x = ax + (x - ax) * scale;
                    y = ay + (y - ay) * scale;
                }
                (x, y)
            } else {
                let cell = free[rng.usize_below(free.len())];
                let (cx, cy) = cell_center(cell);
                (
                    cx + rng.uniform(-cfg.jitter_m, cfg.jitter_m),
                    cy + rng.uniform(-cfg.jitter_m, cfg.jitter_m),
                )
            };
            x = x.clamp(0.0, w as f64 * CELL_M);
            y = y.clamp(0.0, h as f64 * CELL_M);
            objects.push(ObjectInstance {
                class: spec.name.clone(),
                x_w: q6(x),
                y_w: q6(y),
                z_w: q6(rng.uniform(spec.z_range[0], spec.z_range[1])),
                s: spec.size_m,
                is_parent: false,
            });
        }

        let scene = Scene {
            version: SCENE_FORMAT_VERSION,
            id: id.to_string(),
            grid: GridSpec {
                w,
                h,
                cell_m: CELL_M,
            },
            blocked,
            objects,
            split,
        };
        scene.validate()?;
        return Ok(scene);
    }
    Err(SimError::UnsatisfiableConfig(
        "scene generation exhausted retries; config too dense for the grid".into(),
    ))
}
