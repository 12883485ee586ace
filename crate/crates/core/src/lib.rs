//! Updating synthetic-image detectors for new generators.
//!
//! The crate covers the whole loop on a desk-scale synthetic benchmark:
//!
//! - [`nn`]: a small dense classifier with exact gradients and plain SGD.
//! - [`synth`]: real patches, versioned generators, blur and DCT compression.
//! - [`select`]: confidence / gradient-sensitivity boundary sample selection.
//! - [`merge`]: three-way weight-space merging.
//! - [`pipeline`]: pre-training, the two fine-tuned branches, and evaluation.

pub mod dct;
pub mod error;
pub mod merge;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod select;
pub mod synth;

pub use error::{Error, Result};
pub use merge::{merge_params, MergeConfig};
pub use nn::{Activation, Architecture, Gradient, Label, ModelParams, ProbPair, SgdConfig};
pub use pipeline::{DetectorBundle, Evaluation, UpdatePlan};
pub use select::{CandidateBuffer, RepresentativeSet, ScoreRecord};
pub use synth::{ContentSeed, Dataset, GeneratorSpec, Origin, PatchSample, Split};
