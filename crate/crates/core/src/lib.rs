//! Live-stream content foresight for recommendation.
//!
//! Segment embeddings are quantized into semantic ids, each author's id stream
//! is stored run-length compressed, an encoder–decoder predicts the next id,
//! and the predictor's history and foresight embeddings feed a multi-task
//! ranking model.

pub mod error;
pub mod eval;
pub mod numerics;
pub mod pipeline;
pub mod predictor;
pub mod quantizer;
pub mod ranker;
pub mod seqstore;
pub mod synth;

pub use error::{Error, Result};
