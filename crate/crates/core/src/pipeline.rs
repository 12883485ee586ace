//! End-to-end detector update: pre-train on the old generator, fine-tune one
//! branch on the representative set and one on random samples from the new
//! generator, then merge both branches back into the pre-trained weights.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::merge::{merge_params, MergeConfig};
use crate::nn::{init_params, sgd_epochs_augmented, Architecture, ModelParams, SgdConfig};
use crate::select::{
    assemble_representative_multi, build_buffer, refine_positives_by_gradient, score_confidence,
    CandidateBuffer, RepresentativeSet, ScoreRecord, DEFAULT_K_N, DEFAULT_N,
};
use crate::seed::{derive_seed, hash_str, rng_for};
use crate::synth::{
    apply_corruption, content_seed, draw_corruption, make_dataset, render, sample_real,
    CorruptionMode, Dataset, GeneratorSpec, PatchSample, Split,
};

/// Default learning rate for both pre-training and fine-tuning.
pub const DEFAULT_LR: f64 = 0.1;

// Stream tags for the stages of one run.
const TAG_INIT: u64 = 0x11;
const TAG_PRETRAIN: u64 = 0x12;
const TAG_FT_REP: u64 = 0x13;
const TAG_FT_RANDOM: u64 = 0x14;
const TAG_RANDOM_SET: u64 = 0x15;
const TAG_AUGMENT: u64 = 0x16;
const TAG_EVAL: u64 = 0x17;
const TAG_TEST_SET: u64 = 0x18;
const TAG_SELECT_VIEW: u64 = 0x19;

/// Everything that parameterizes one update run.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdatePlan {
    pub arch: Architecture,
    /// Representative set size.
    pub n: usize,
    pub k_n: f64,
    pub k: f64,
    pub pretrain: SgdConfig,
    pub finetune: SgdConfig,
    /// Samples per class in the pre-training pool.
    pub train_per_class: usize,
    /// Samples per class in each test set.
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for UpdatePlan {
    fn default() -> Self {
        Self {
            arch: Architecture::default_detector(),
            n: DEFAULT_N,
            k_n: DEFAULT_K_N,
            k: MergeConfig::DEFAULT_K,
            pretrain: SgdConfig { epochs: 10, batch_size: 32, lr: DEFAULT_LR },
            finetune: SgdConfig { epochs: 5, batch_size: 8, lr: DEFAULT_LR },
            train_per_class: 2000,
            test_per_class: 500,
            seed: 0,
        }
    }
}

impl UpdatePlan {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("representative size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.k_n) {
            return Err(Error::InvalidArgument(format!("k_n {} outside [0, 1]", self.k_n)));
        }
        MergeConfig::new(self.k)?;
        for (name, c) in [("pretrain", &self.pretrain), ("finetune", &self.finetune)] {
            if c.batch_size == 0 {
                return Err(Error::InvalidArgument(format!("{name} batch size must be positive")));
            }
            if !(c.lr.is_finite() && c.lr > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} learning rate must be positive")));
            }
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::InvalidArgument("dataset sizes must be positive".into()));
        }
        Ok(())
    }

    /// The balanced pre-training pool for `g_old`.
    pub fn training_pool(&self, g_old: &GeneratorSpec) -> Result<Dataset> {
        make_dataset(g_old, self.train_per_class, self.train_per_class, Split::Train, self.seed)
    }

    /// The balanced test set for generator `g`.
    pub fn test_set(&self, g: &GeneratorSpec) -> Result<Dataset> {
        let seed = derive_seed(&[self.seed, TAG_TEST_SET, hash_str(&g.version_id)]);
        make_dataset(g, self.test_per_class, self.test_per_class, Split::Test, seed)
    }
}

/// The four detectors of one update plus how they were produced.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorBundle {
    pub theta0: ModelParams,
    pub theta1: ModelParams,
    pub theta2: ModelParams,
    pub theta_new: ModelParams,
    pub buffer: CandidateBuffer,
    pub notes: Vec<String>,
}

fn train(
    start: &ModelParams,
    samples: &[PatchSample],
    cfg: SgdConfig,
    seed: u64,
) -> Result<ModelParams> {
    sgd_epochs_augmented(start, samples, cfg, seed, |epoch, idx, s: &PatchSample| {
        let mut rng = rng_for(&[seed, TAG_AUGMENT, epoch as u64, idx as u64]);
        let plan = draw_corruption(CorruptionMode::Train, &mut rng);
        if plan.compress_qf.is_none() && plan.blur_sigma.is_none() {
            None
        } else {
            Some(apply_corruption(s, plan).pixels)
        }
    })
}

/// Trains `theta0` on the old generator's pool with train-mode corruption.
pub fn pretrain(g_old: &GeneratorSpec, plan: &UpdatePlan, seed: u64) -> Result<ModelParams> {
    plan.validate()?;
    let start = init_params(&plan.arch, derive_seed(&[seed, TAG_INIT]));
    if plan.pretrain.epochs == 0 {
        return Ok(start);
    }
    let pool = plan.training_pool(g_old)?;
    train(&start, &pool.samples, plan.pretrain, derive_seed(&[seed, TAG_PRETRAIN]))
}

/// `n / 2` fresh renders spread round-robin over `generators` plus the rest as
/// fresh real patches.
pub fn random_update_set(generators: &[GeneratorSpec], n: usize, seed: u64) -> Result<Vec<PatchSample>> {
    if generators.is_empty() {
        return Err(Error::InvalidArgument("no new generators given".into()));
    }
    let n_gen = n / 2;
    let base = derive_seed(&[seed, TAG_RANDOM_SET]);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let content = content_seed(base, Split::Fresh, i);
        if i < n_gen {
            out.push(render(&generators[i % generators.len()], content));
        } else {
            out.push(sample_real(content));
        }
    }
    Ok(out)
}

/// Fine-tunes `theta0` on `n` random samples (half from `g_new`, half real).
pub fn finetune_random(
    theta0: &ModelParams,
    g_new: &GeneratorSpec,
    n: usize,
    plan: &UpdatePlan,
    seed: u64,
) -> Result<ModelParams> {
    finetune_random_multi(theta0, std::slice::from_ref(g_new), n, plan, seed)
}

pub fn finetune_random_multi(
    theta0: &ModelParams,
    generators: &[GeneratorSpec],
    n: usize,
    plan: &UpdatePlan,
    seed: u64,
) -> Result<ModelParams> {
    if n == 0 {
        return Err(Error::InvalidArgument("random fine-tune needs at least one sample".into()));
    }
    for g in generators {
        g.validate()?;
    }
    let samples = random_update_set(generators, n, seed)?;
    train(theta0, &samples, plan.finetune, derive_seed(&[seed, TAG_FT_RANDOM]))
}

/// Fine-tunes `theta0` on the representative set.
pub fn finetune_representative(
    theta0: &ModelParams,
    rep: &RepresentativeSet,
    plan: &UpdatePlan,
    seed: u64,
) -> Result<ModelParams> {
    if rep.is_empty() {
        return Err(Error::EmptyDataset);
    }
    train(theta0, &rep.samples(), plan.finetune, derive_seed(&[seed, TAG_FT_REP]))
}

/// The pool as the detector meets it during training: every sample under one
/// fixed draw of the train-mode corruption, keyed by `(seed, index)`. Ids and
/// content seeds are those of `pool`.
pub fn training_view(pool: &Dataset, seed: u64) -> Dataset {
    let samples = pool
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = rng_for(&[seed, TAG_SELECT_VIEW, i as u64]);
            apply_corruption(s, draw_corruption(CorruptionMode::Train, &mut rng))
        })
        .collect();
    Dataset { samples, split: pool.split }
}

/// Scores the training view of the old pool with `theta0` and builds the
/// gradient-refined buffer. Buffer ids index into `pool`.
pub fn select_buffer(theta0: &ModelParams, pool: &Dataset, plan: &UpdatePlan) -> Result<CandidateBuffer> {
    select_buffer_with_scores(theta0, pool, plan).map(|(b, _)| b)
}

/// [`select_buffer`] that also returns the per-sample score records.
pub fn select_buffer_with_scores(
    theta0: &ModelParams,
    pool: &Dataset,
    plan: &UpdatePlan,
) -> Result<(CandidateBuffer, Vec<ScoreRecord>)> {
    let view = training_view(pool, plan.seed);
    let mut scores = score_confidence(theta0, &view)?;
    let buffer = build_buffer(&scores, plan.n, plan.k_n)?;
    let refined = refine_positives_by_gradient(&buffer, &mut scores, theta0, &view)?;
    Ok((refined, scores))
}

pub fn lite_update(
    theta0: &ModelParams,
    g_old: &GeneratorSpec,
    g_new: &GeneratorSpec,
    plan: &UpdatePlan,
) -> Result<DetectorBundle> {
    lite_update_multi(theta0, g_old, std::slice::from_ref(g_new), plan)
}

/// Full update against one or more new generators. Generated buffer members
/// and the random branch's generated half are spread round-robin over the
/// new generators.
pub fn lite_update_multi(
    theta0: &ModelParams,
    g_old: &GeneratorSpec,
    g_new_list: &[GeneratorSpec],
    plan: &UpdatePlan,
) -> Result<DetectorBundle> {
    if g_new_list.is_empty() {
        return Err(Error::InvalidArgument("no new generators given".into()));
    }
    plan.validate()?;
    if theta0.arch() != &plan.arch {
        return Err(Error::ArchitectureMismatch);
    }
    let pool = plan.training_pool(g_old)?;
    let buffer = select_buffer(theta0, &pool, plan)?;
    let rep = assemble_representative_multi(&buffer, &pool, g_new_list)?;

    let mut notes = vec![
        format!("pool: {} ({} samples)", g_old.version_id, pool.len()),
        format!(
            "buffer: {} negatives, {} positives (target {})",
            buffer.negatives.len(),
            buffer.positives.len(),
            buffer.target
        ),
        format!(
            "representative: {} real, {} regenerated by {}",
            rep.real_samples.len(),
            rep.regenerated_samples.len(),
            g_new_list.iter().map(|g| g.version_id.as_str()).collect::<Vec<_>>().join("+")
        ),
    ];
    if buffer.has_shortfall() {
        notes.push(format!(
            "warning: buffer shortfall (negatives {}/{}, positives {}/{})",
            buffer.negatives.len(),
            buffer.negative_quota(),
            buffer.positives.len(),
            buffer.positive_quota()
        ));
    }

    let (theta1, theta2) = rayon::join(
        || finetune_representative(theta0, &rep, plan, plan.seed),
        || finetune_random_multi(theta0, g_new_list, plan.n, plan, plan.seed),
    );
    let (theta1, theta2) = (theta1?, theta2?);
    let theta_new = merge_params(theta0, &theta1, &theta2, MergeConfig::new(plan.k)?)?;
    Ok(DetectorBundle { theta0: theta0.clone(), theta1, theta2, theta_new, buffer, notes })
}

/// Per-dataset accuracies (percent) and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracies: Vec<(String, f64)>,
    pub mean: f64,
}

impl Evaluation {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.accuracies.iter().find(|(n, _)| n == name).map(|(_, a)| *a)
    }
}

/// Accuracy of a single dataset under test-mode corruption keyed by
/// `(seed, name, index)`.
pub fn accuracy(theta: &ModelParams, name: &str, dataset: &Dataset, seed: u64) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let key = hash_str(name);
    let correct = dataset
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = rng_for(&[seed, TAG_EVAL, key, i as u64]);
            let corrupted = apply_corruption(s, draw_corruption(CorruptionMode::Test, &mut rng));
            let p = crate::nn::forward(theta, &corrupted.pixels)?;
            Ok((p.argmax() == s.label) as usize)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(100.0 * correct as f64 / dataset.len() as f64)
}

pub fn evaluate(theta: &ModelParams, datasets: &[(String, Dataset)], seed: u64) -> Result<Evaluation> {
    if datasets.is_empty() {
        return Err(Error::InvalidArgument("nothing to evaluate".into()));
    }
    let accuracies = datasets
        .iter()
        .map(|(name, ds)| Ok((name.clone(), accuracy(theta, name, ds, seed)?)))
        .collect::<Result<Vec<_>>>()?;
    let mean = accuracies.iter().map(|(_, a)| a).sum::<f64>() / accuracies.len() as f64;
    Ok(Evaluation { accuracies, mean })
}
