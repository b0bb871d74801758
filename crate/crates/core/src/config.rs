//! Run configuration: one structured file covering catalog, embeddings,
//! world generation, model dimensions, training, evaluation and the
//! optional zero-shot split. Unknown keys are rejected; every command
//! persists the fully resolved form next to its outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{desk_catalog, CatalogError, ClassCatalog, ClassSpec};
use crate::embed::{load_text_embeddings, synth_embeddings, EmbedError, EmbeddingTable};
use crate::eval::EvalConfig;
use crate::hash::fnv64;
use crate::model::ModelConfig;
use crate::rl::TrainConfig;
use crate::sim::{CameraConfig, GenConfig, SimError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which classes exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum CatalogConfig {
    /// Built-in desk catalog: 4 parents, 4 prototype clusters with this
    /// many child classes each (1..=3).
    Desk { children_per_cluster: usize },
    /// Explicit class list.
    Explicit { classes: Vec<ClassSpec> },
}

/// Where word embeddings come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingConfig {
    Synthetic { dim: usize, noise_sigma: f64, seed: u64 },
    File { path: String },
}

/// Zero-shot class split sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub seen: usize,
    pub unseen: usize,
    pub seed: u64,
}

/// Scene-set shape for generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSetConfig {
    pub count: u32,
    pub train_ratio: f64,
    pub seed: u64,
}

impl Default for SceneSetConfig {
    fn default() -> Self {
        SceneSetConfig {
            count: 50,
            train_ratio: 0.8,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub catalog: CatalogConfig,
    pub embeddings: EmbeddingConfig,
    pub scenes: SceneSetConfig,
    pub generator: GenConfig,
    pub camera: CameraConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub split: Option<SplitConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            catalog: CatalogConfig::Desk {
                children_per_cluster: 2,
            },
            embeddings: EmbeddingConfig::Synthetic {
                dim: 32,
                noise_sigma: 0.1,
                seed: 7,
            },
            scenes: SceneSetConfig::default(),
            generator: GenConfig::default(),
            camera: CameraConfig::default(),
            model: ModelConfig::desk(32),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            split: None,
        }
    }
}

/// Catalog and embeddings materialized from a [`RunConfig`], with the model
/// width locked to the table dimension.
pub struct Resolved {
    pub catalog: ClassCatalog,
    pub table: EmbeddingTable,
    pub model: ModelConfig,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match &self.catalog {
            CatalogConfig::Desk {
                children_per_cluster,
            } => {
                if !(1..=3).contains(children_per_cluster) {
                    return Err(ConfigError::Invalid(
                        "children_per_cluster must be 1..=3".into(),
                    ));
                }
            }
            CatalogConfig::Explicit { classes } => {
                ClassCatalog::new(classes.clone())?;
            }
        }
        if let EmbeddingConfig::Synthetic { dim, noise_sigma, .. } = &self.embeddings {
            if *dim < 2 {
                return Err(ConfigError::Invalid("embedding dim must be >= 2".into()));
            }
            if *noise_sigma < 0.0 {
                return Err(ConfigError::Invalid("noise sigma must be >= 0".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.scenes.train_ratio) || self.scenes.count == 0 {
            return Err(ConfigError::Invalid("bad scene set config".into()));
        }
        self.generator.validate().map_err(ConfigError::Sim)?;
        self.train
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.model.dropout < 0.0 || self.model.dropout >= 1.0 {
            return Err(ConfigError::Invalid("dropout must be in [0, 1)".into()));
        }
        if let Some(split) = &self.split {
            if split.seen == 0 || split.unseen == 0 {
                return Err(ConfigError::Invalid(
                    "split sides must both be nonempty".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn build_catalog(&self) -> Result<ClassCatalog, ConfigError> {
        Ok(match &self.catalog {
            CatalogConfig::Desk {
                children_per_cluster,
            } => desk_catalog(*children_per_cluster),
            CatalogConfig::Explicit { classes } => ClassCatalog::new(classes.clone())?,
        })
    }

    /// Materialize catalog + embedding table; the model reads its input
    /// width from the table.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let catalog = self.build_catalog()?;
        let table = match &self.embeddings {
            EmbeddingConfig::Synthetic {
                dim,
                noise_sigma,
                seed,
            } => synth_embeddings(&catalog, *dim, *noise_sigma, *seed)?,
            EmbeddingConfig::File { path } => {
                load_text_embeddings(Path::new(path), &catalog.names())?
            }
        };
        let mut model = self.model;
        model.embed_dim = table.dim();
        Ok(Resolved {
            catalog,
            table,
            model,
        })
    }

    /// Fingerprint of the parts a checkpoint depends on: world, embeddings,
    /// camera and model dimensions. Run knobs (episode budgets, worker
    /// counts, eval settings) stay out so training can resume with a larger
    /// budget.
    pub fn structural_hash(&self) -> u64 {
        #[derive(Serialize)]
        struct Structural<'a> {
            catalog: &'a CatalogConfig,
            embeddings: &'a EmbeddingConfig,
            scenes: &'a SceneSetConfig,
            generator: &'a GenConfig,
            camera: &'a CameraConfig,
            model: &'a ModelConfig,
            split: &'a Option<SplitConfig>,
        }
        let s = Structural {
            catalog: &self.catalog,
            embeddings: &self.embeddings,
            scenes: &self.scenes,
            generator: &self.generator,
            camera: &self.camera,
            model: &self.model,
            split: &self.split,
        };
        fnv64(serde_json::to_string(&s).expect("config serializes").as_bytes())
    }
}
