//! Three-way weight-space merge of a base model and two fine-tuned branches.

use crate::error::{Error, Result};
use crate::nn::ModelParams;

/// Balancing coefficient `k` in `[0, 0.5]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeConfig {
    k: f64,
}

impl MergeConfig {
    pub const DEFAULT_K: f64 = 0.2;

    pub fn new(k: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&k) {
            return Err(Error::InvalidArgument(format!("merge coefficient {k} outside [0, 0.5]")));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> f64 {
        self.k
    }
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self { k: Self::DEFAULT_K }
    }
}

/// `(1 - 2k) * base + k * (branch_a + branch_b)`, element-wise.
///
/// The branches are summed before scaling, so swapping them yields a
/// bit-identical result. At `k = 0` the base is returned unchanged.
pub fn merge_params(
    base: &ModelParams,
    branch_a: &ModelParams,
    branch_b: &ModelParams,
    cfg: MergeConfig,
) -> Result<ModelParams> {
    if base.arch() != branch_a.arch() || base.arch() != branch_b.arch() {
        return Err(Error::ArchitectureMismatch);
    }
    let merged = merge_weights(base.weights(), branch_a.weights(), branch_b.weights(), cfg);
    ModelParams::from_weights(base.arch().clone(), merged)
}

/// The merge rule on raw flat vectors of equal length.
pub fn merge_weights(base: &[f64], branch_a: &[f64], branch_b: &[f64], cfg: MergeConfig) -> Vec<f64> {
    assert!(base.len() == branch_a.len() && base.len() == branch_b.len());
    if cfg.k == 0.0 {
        return base.to_vec();
    }
    let anchor = 1.0 - 2.0 * cfg.k;
    base.iter()
        .zip(branch_a)
        .zip(branch_b)
        .map(|((&w0, &w1), &w2)| anchor * w0 + cfg.k * (w1 + w2))
        .collect()
}
