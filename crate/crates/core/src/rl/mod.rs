//! Policy-gradient learners: PPO (standard and feature-masked) and A2C.

pub mod a2c;
pub mod advantage;
pub mod ppo;

pub use a2c::{train_a2c, A2cConfig, A2cRun, Transition};
pub use advantage::{clip_term, gae, normalize, ppo_clip_loss};
pub use ppo::{
    argmax, evaluate, ppo_update, train_ppo, ActorCritic, CurvePoint, FeatureMask, PpoBatch, PpoConfig, PpoRun,
    UpdateStats,
};

use thiserror::Error;

use crate::envcore::EnvError;
use crate::numcore::NumError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RlError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("invalid config: {0}")]
    Config(String),
}
