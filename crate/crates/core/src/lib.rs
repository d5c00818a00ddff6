//! Politeness-controllable dialogue generation.
//!
//! A politeness classifier scores text; three strategies use it to steer a
//! sequence-to-sequence dialogue model: late fusion with a polite language
//! model, label fine-tuning with a scaled style-label embedding, and
//! policy-gradient training with classifier reward. Retrieval baselines and
//! automatic metrics round out the toolkit.

pub mod checkpoint;
pub mod classifier;
pub mod config;
pub mod corpus;
pub mod dialogue;
pub mod error;
pub mod evalkit;
pub mod layers;
pub mod numerics;
pub mod retrieval;
pub mod style;

pub use checkpoint::{Checkpoint, LoadedModel, ModelKind};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use numerics::{Float, ParamStore, Rng, Tensor};
