//! Curvature of sentence trajectories through the layers of GPT-2-family
//! language models.
//!
//! This crate is `no_std` (it needs `alloc`) and holds everything that is pure
//! computation: dense kernels, the byte-level BPE tokenizer, the transformer
//! forward pass with hidden-state capture and ablation, decoding strategies,
//! trajectory curvature metrics, n-gram surprisal, correlation statistics and
//! CoNLL-U sentence parsing/filtering. File formats, weight loading and the
//! experiment CLI live in the `straighten` crate.

#![no_std]

extern crate alloc;

pub mod corpus;
pub mod error;
pub mod generation;
pub mod geometry;
pub mod model;
pub mod ngram;
pub mod rng;
pub mod stats;
pub mod tensor;
pub mod tokenizer;

pub use error::{Error, Result};
pub use geometry::{CurvatureProfile, DegeneratePolicy, LayerTrajectory};
pub use model::{Component, HiddenStates, Model, ModelConfig};
pub use ngram::NgramModel;
pub use tensor::Tensor2D;
pub use tokenizer::{TokenSequence, Vocabulary};
