//! Tensor math, layers with manual backprop, the policy network, the text
//! embedder and checkpoints.

mod checkpoint;
mod embed;
pub mod gradcheck;
mod layers;
mod net;
mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use embed::{cosine, embed_text, EMBED_DIM};
pub use layers::{BatchNorm, Conv2d, Linear, Mode, Param};
pub use net::{
    ConvSpec, ConvTower, ForwardCache, ImageInput, PolicyArch, PolicyInput, PolicyNet, TextInput, TowerConfig, Variant,
    ACTION_DIM, TEXT_FEATURES,
};
pub use tensor::{Real, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("embedding error: {0}")]
    Embedding(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
