//! Emotion-eliciting dialogue generation: weak emotion labels, a dual-branch
//! encoder-decoder steered by λ, beam search, training, and a simulator-based
//! evaluation.

pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod decoding;
pub mod emotion;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod model;
pub mod provenance;
pub mod training;
pub mod text;

pub use error::{Error, Result};
