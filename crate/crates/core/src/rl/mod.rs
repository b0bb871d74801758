//! Actor-critic training: rollout collection, loss, asynchronous workers
//! against shared parameters, and checkpoint persistence.

mod checkpoint;
mod loss;
mod rollout;
mod train;

pub use checkpoint::{decode, encode, load_checkpoint, save_checkpoint, Checkpoint};
pub use loss::{a3c_loss, a3c_loss_from_parts, discounted_returns, LossParts};
pub use rollout::{collect_rollout, EnvSession, RolloutSegment, StepRecord};
pub use train::{
    apply_worker_update, train, SharedOpt, TrainConfig, TrainInputs, TrainOutcome, UpdateOutcome,
};

use thiserror::Error;

use crate::grad::GradError;
use crate::model::ModelError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum RlError {
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("rollout segment is empty")]
    EmptySegment,
    #[error("bad training config: {0}")]
    BadConfig(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint config hash {found:#018x} does not match expected {expected:#018x}")]
    ConfigHashMismatch { expected: u64, found: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
