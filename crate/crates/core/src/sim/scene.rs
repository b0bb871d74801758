//! Scene representation and its on-disk form.
//!
//! One scene per file, versioned JSON with a fixed field order. All floats
//! are quantized to 1e-6 at generation time so the shortest-round-trip
//! printing stays within nine significant digits and write -> read -> write
//! is byte-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;

pub const SCENE_FORMAT_VERSION: u32 = 1;
pub const CELL_M: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub w: u32,
    pub h: u32,
    pub cell_m: f64,
}

/// A placed object. Position is continuous within the grid; `s` is the
/// physical size used by the projection model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectInstance {
    pub class: String,
    pub x_w: f64,
    pub y_w: f64,
    pub z_w: f64,
    pub s: f64,
    pub is_parent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub version: u32,
    pub id: String,
    pub grid: GridSpec,
    /// Sorted (i, j) cells the agent cannot occupy (includes parent cells).
    pub blocked: Vec<(u32, u32)>,
    pub objects: Vec<ObjectInstance>,
    pub split: Split,
}

impl Scene {
    pub fn in_bounds(&self, i: i64, j: i64) -> bool {
        i >= 0 && j >= 0 && (i as u32) < self.grid.w && (j as u32) < self.grid.h
    }

    pub fn is_blocked(&self, i: u32, j: u32) -> bool {
        self.blocked.binary_search(&(i, j)).is_ok()
    }

    pub fn is_free(&self, i: i64, j: i64) -> bool {
        self.in_bounds(i, j) && !self.is_blocked(i as u32, j as u32)
    }

    pub fn free_cells(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for i in 0..self.grid.w {
            for j in 0..self.grid.h {
                if !self.is_blocked(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// World coordinates of a cell center.
    pub fn cell_center(&self, i: u32, j: u32) -> (f64, f64) {
        (
            (i as f64 + 0.5) * self.grid.cell_m,
            (j as f64 + 0.5) * self.grid.cell_m,
        )
    }

    pub fn instances_of<'a>(
        &'a self,
        class: &'a str,
    ) -> impl Iterator<Item = (usize, &'a ObjectInstance)> + 'a {
        self.objects
            .iter()
            .enumerate()
            .filter(move |(_, o)| o.class == class)
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.objects.iter().any(|o| o.class == class)
    }

    /// Child classes present in this scene (deduplicated, sorted).
    pub fn present_child_classes(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .objects
            .iter()
            .filter(|o| !o.is_parent)
            .map(|o| o.class.clone())
            .collect();
        v.sort();
        v.dedup();
        v
    }

    /// Structural invariants: at least one free cell, objects in bounds,
    /// children only in scenes that also hold a parent instance, blocked
    /// list sorted and in bounds.
    pub fn validate(&self) -> Result<(), SimError> {
        if self.version != SCENE_FORMAT_VERSION {
            return Err(SimError::InvalidScene(format!(
                "unsupported scene version {}",
                self.version
            )));
        }
        if self.free_cells().is_empty() {
            return Err(SimError::InvalidScene("no free cells".into()));
        }
        if self
            .blocked
            .windows(2)
            .any(|w| w[0] >= w[1])
        {
            return Err(SimError::InvalidScene("blocked list not sorted".into()));
        }
        for &(i, j) in &self.blocked {
            if !self.in_bounds(i as i64, j as i64) {
                return Err(SimError::InvalidScene(format!(
                    "blocked cell ({i}, {j}) out of bounds"
                )));
            }
        }
        let (wx, wy) = (
            self.grid.w as f64 * self.grid.cell_m,
            self.grid.h as f64 * self.grid.cell_m,
        );
        let any_parent = self.objects.iter().any(|o| o.is_parent);
        for o in &self.objects {
            if o.x_w < 0.0 || o.x_w > wx || o.y_w < 0.0 || o.y_w > wy {
                return Err(SimError::InvalidScene(format!(
                    "object {} at ({}, {}) outside {}x{} m room",
                    o.class, o.x_w, o.y_w, wx, wy
                )));
            }
            if o.s <= 0.0 {
                return Err(SimError::InvalidScene(format!(
                    "object {} has nonpositive size",
                    o.class
                )));
            }
            if !o.is_parent && !any_parent {
                return Err(SimError::InvalidScene(format!(
                    "child {} placed in a scene without any parent instance",
                    o.class
                )));
            }
        }
        Ok(())
    }
}

/// Quantize to 1e-6 m; keeps scene files byte-stable across round trips.
pub fn q6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Index of a generated scene set: file names per split, relative to the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub version: u32,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SceneManifest {
    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SceneManifest, SimError> {
        let m: SceneManifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if m.version != SCENE_FORMAT_VERSION {
            return Err(SimError::InvalidScene(format!(
                "unsupported manifest version {}",
                m.version
            )));
        }
        let dup = m.train.iter().any(|t| m.test.contains(t));
        if dup {
            return Err(SimError::InvalidScene(
                "manifest train/test sets overlap".into(),
            ));
        }
        Ok(m)
    }

    /// Load the scene files of one side of the split.
    pub fn load_scenes(&self, dir: &Path, split: Split) -> Result<Vec<Scene>, SimError> {
        let names = match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        };
        names.iter().map(|n| load_scene(&dir.join(n))).collect()
    }
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<(), SimError> {
    let text = serde_json::to_string_pretty(scene)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_scene(path: &Path) -> Result<Scene, SimError> {
    let text = std::fs::read_to_string(path)?;
    let scene: Scene = serde_json::from_str(&text)?;
    scene.validate()?;
    Ok(scene)
}
