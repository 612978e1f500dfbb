//! Multi-modal topic modelling with collapsed Gibbs sampling, held-out
//! fold-in, document similarity measures, and Mantel matrix comparison.
//!
//! The pipeline: continuous features are vector-quantized into discrete
//! "words" ([`vq`]), per-modality bags are assembled into a [`corpus::Corpus`],
//! a topic model with shared per-document topic proportions is trained by
//! collapsed Gibbs sampling ([`sampler`]), held-out documents are folded in
//! against the frozen model ([`inference`]), pairwise document similarities
//! are computed ([`similarity`]), and similarity matrices are compared with a
//! permutation Mantel test over Spearman correlation ([`mantel`]).
//! [`experiments`] wires these into stability and cross-group studies;
//! [`synthetic`] generates ground-truth corpora for them.

pub mod corpus;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod mantel;
pub mod math;
pub mod rng;
pub mod sampler;
pub mod similarity;
pub mod synthetic;
pub mod vq;

pub use error::{Error, Result};
