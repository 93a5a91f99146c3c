//! Behaviour cloning for the six policy variants: demonstrations, DART
//! augmentation, input wiring, training and acting.

mod dart;
mod demos;
mod train;

use thiserror::Error;

pub use dart::{dart_augment, DartConfig};
pub use demos::{multitask_recipe, DemoSet};
pub use train::{act, mse_loss, train, wire, Adam, Optimizer, TrainConfig, TrainOutcome, TrainedPolicy, WiredSample};

use crate::abstraction::AbstractionError;
use crate::nn::NnError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum ImitationError {
    #[error("demonstration set is empty")]
    EmptyDemos,
    #[error("demonstrations come from different catalogs")]
    CatalogMismatch,
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("{0} needs an abstraction pipeline")]
    MissingAbstractor(crate::nn::Variant),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sim(#[from] SimError),
}
