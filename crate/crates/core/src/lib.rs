//! Language-guided state abstraction for imitation learning.
//!
//! The crate is organised around the pieces of the pipeline:
//!
//! - [`sim`]: a deterministic 2D tabletop world with object/texture catalogs,
//!   rendering, segmentation, high-level pick/rotate/sweep actions and an
//!   oracle demonstrator.
//! - [`scenario`]: the task registry (utterances and their ground-truth
//!   feature distributions).
//! - [`abstraction`]: textualization, feature abstraction and instantiation
//!   of goal masks, plus the interactive refinement loop.
//! - [`lm`]: relevance backends (live chat-completions client, rule oracle,
//!   response cache, and a stub server for local testing).
//! - [`nn`]: a small from-scratch CNN/MLP stack with manual backprop and a
//!   deterministic text embedder.
//! - [`imitation`]: losses, DART augmentation, variant wiring and training.
//! - [`harness`]: evaluation and the three experiment protocols.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod abstraction;
pub mod harness;
pub mod imitation;
pub mod lm;
pub mod nn;
pub mod scenario;
pub mod sim;
mod util;

pub use abstraction::{AbstractFeatureSet, AbstractObservation, FeatureSet};
pub use scenario::{Registry, ScenarioSpec, TaskKind};
pub use sim::{Action, Catalog, Scene};
