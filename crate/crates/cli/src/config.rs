//! Experiment configuration: one flat JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use liteupdate_core::nn::{Activation, Architecture, INPUT_SIZE, OUTPUT_SIZE};
use liteupdate_core::{GeneratorSpec, SgdConfig, UpdatePlan};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Main,
    AblateKn,
    AblateK,
    AblateComponents,
    Efficiency,
    Multi,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Main => "main",
            ExperimentKind::AblateKn => "ablate_kn",
            ExperimentKind::AblateK => "ablate_k",
            ExperimentKind::AblateComponents => "ablate_components",
            ExperimentKind::Efficiency => "efficiency",
            ExperimentKind::Multi => "multi",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub version_id: String,
    pub artifact_freq: u32,
    pub artifact_phase: f64,
    pub artifact_amp: f64,
    pub residual_noise_sd: f64,
}

impl From<&GeneratorSpec> for GeneratorConfig {
    fn from(g: &GeneratorSpec) -> Self {
        Self {
            version_id: g.version_id.clone(),
            artifact_freq: g.artifact_freq,
            artifact_phase: g.artifact_phase,
            artifact_amp: g.artifact_amp,
            residual_noise_sd: g.residual_noise_sd,
        }
    }
}

impl From<&GeneratorConfig> for GeneratorSpec {
    fn from(g: &GeneratorConfig) -> Self {
        Self {
            version_id: g.version_id.clone(),
            artifact_freq: g.artifact_freq,
            artifact_phase: g.artifact_phase,
            artifact_amp: g.artifact_amp,
            residual_noise_sd: g.residual_noise_sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub old_generator: GeneratorConfig,
    pub new_generators: Vec<GeneratorConfig>,
    pub hidden_layers: Vec<usize>,
    pub n: usize,
    pub k_n: f64,
    pub k: f64,
    pub pretrain_epochs: usize,
    pub pretrain_batch: usize,
    pub finetune_epochs: usize,
    pub finetune_batch: usize,
    pub lr: f64,
    pub finetune_lr: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    pub kn_grid: Vec<f64>,
    pub k_grid: Vec<f64>,
    pub sample_grid: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let plan = UpdatePlan::default();
        let sizes = plan.arch.layer_sizes();
        Self {
            kind: ExperimentKind::Main,
            old_generator: (&GeneratorSpec::default_old()).into(),
            new_generators: GeneratorSpec::default_new().iter().map(Into::into).collect(),
            hidden_layers: sizes[1..sizes.len() - 1].to_vec(),
            n: plan.n,
            k_n: plan.k_n,
            k: plan.k,
            pretrain_epochs: plan.pretrain.epochs,
            pretrain_batch: plan.pretrain.batch_size,
            finetune_epochs: plan.finetune.epochs,
            finetune_batch: plan.finetune.batch_size,
            lr: plan.pretrain.lr,
            finetune_lr: plan.finetune.lr,
            train_per_class: plan.train_per_class,
            test_per_class: plan.test_per_class,
            seeds: (0..10).collect(),
            out_dir: None,
            kn_grid: vec![0.1, 0.3, 0.5, 0.7, 0.9, 1.0],
            k_grid: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            sample_grid: vec![100, 500, 1000, 5000],
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn old(&self) -> GeneratorSpec {
        (&self.old_generator).into()
    }

    pub fn new_gens(&self) -> Vec<GeneratorSpec> {
        self.new_generators.iter().map(Into::into).collect()
    }

    pub fn architecture(&self) -> Result<Architecture, HarnessError> {
        let mut sizes = vec![INPUT_SIZE];
        sizes.extend(&self.hidden_layers);
        sizes.push(OUTPUT_SIZE);
        Ok(Architecture::new(sizes, Activation::Tanh)?)
    }

    /// The update plan for one seed.
    pub fn plan(&self, seed: u64) -> Result<UpdatePlan, HarnessError> {
        Ok(UpdatePlan {
            arch: self.architecture()?,
            n: self.n,
            k_n: self.k_n,
            k: self.k,
            pretrain: SgdConfig { epochs: self.pretrain_epochs, batch_size: self.pretrain_batch, lr: self.lr },
            finetune: SgdConfig { epochs: self.finetune_epochs, batch_size: self.finetune_batch, lr: self.finetune_lr },
            train_per_class: self.train_per_class,
            test_per_class: self.test_per_class,
            seed,
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        if self.new_generators.is_empty() {
            return bad("no new generators configured".into());
        }
        self.old().validate()?;
        for g in self.new_gens() {
            g.validate()?;
        }
        let mut ids: Vec<&str> = std::iter::once(&self.old_generator)
            .chain(&self.new_generators)
            .map(|g| g.version_id.as_str())
            .collect();
        let total = ids.len();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != total {
            return bad("generator version ids must be distinct".into());
        }
        self.plan(self.seeds[0])?.validate()?;
        if let Some(k) = self.k_grid.iter().find(|k| !(0.0..=0.5).contains(*k)) {
            return bad(format!("k grid value {k} outside [0, 0.5]"));
        }
        if let Some(k) = self.kn_grid.iter().find(|k| !(0.0..=1.0).contains(*k)) {
            return bad(format!("k_n grid value {k} outside [0, 1]"));
        }
        if self.sample_grid.iter().any(|&n| n == 0) {
            return bad("sample grid values must be positive".into());
        }
        let grid_empty = match self.kind {
            ExperimentKind::AblateKn => self.kn_grid.is_empty(),
            ExperimentKind::AblateK => self.k_grid.is_empty(),
            ExperimentKind::Efficiency => self.sample_grid.is_empty(),
            _ => false,
        };
        if grid_empty {
            return bad(format!("grid for {} is empty", self.kind.as_str()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_json() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert_eq!(cfg.plan(3).unwrap(), UpdatePlan::default().with_seed(3));
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"kind": "ablate_k", "seeds": [4, 5]}"#).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::AblateK);
        assert_eq!(cfg.seeds, vec![4, 5]);
        assert_eq!(cfg.n, 500);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_json(r#"{"seed": [1]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"kind": "sideways"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"seeds": []}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"k": 0.7}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"k_grid": [0.1, 0.6]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"hidden_layers": []}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"new_generators": []}"#).is_err());
    }
}
