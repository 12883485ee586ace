//! Representative sample selection.
//!
//! Samples are scored by the confidence the detector assigns to their true
//! label. A candidate buffer takes the `ceil(k_n N)` least-wrong misclassified
//! samples (confidence just below 0.5) and the `ceil(k_p N)` least-confident
//! correct ones. The positive side can then be re-ranked by the L2 norm of
//! each sample's loss gradient. Finally, generated members of the buffer are
//! re-rendered with the new generator from the same content seed.
//!
//! All rankings break ties by ascending sample id.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{backward, forward, grad_norm, ModelParams};
use crate::synth::{render, Dataset, GeneratorSpec, Origin, PatchSample};

/// Confidence threshold separating the two sides of the buffer.
pub const BOUNDARY: f64 = 0.5;
pub const DEFAULT_N: usize = 500;
pub const DEFAULT_K_N: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRecord {
    pub sample_id: usize,
    /// Probability assigned to the true label.
    pub confidence: f64,
    /// Gradient norm, filled in by [`refine_positives_by_gradient`].
    pub grad_sensitivity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateBuffer {
    /// Ids with confidence below 0.5, highest confidence first.
    pub negatives: Vec<usize>,
    /// Ids with confidence at or above 0.5.
    pub positives: Vec<usize>,
    pub target: usize,
    pub k_n: f64,
    pub k_p: f64,
    pub negative_shortfall: bool,
    pub positive_shortfall: bool,
}

impl CandidateBuffer {
    pub fn negative_quota(&self) -> usize {
        quota(self.k_n, self.target)
    }

    pub fn positive_quota(&self) -> usize {
        quota(self.k_p, self.target)
    }

    pub fn has_shortfall(&self) -> bool {
        self.negative_shortfall || self.positive_shortfall
    }

    pub fn len(&self) -> usize {
        self.negatives.len() + self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Negatives followed by positives.
    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.negatives.iter().chain(&self.positives).copied()
    }
}

/// `ceil(fraction * n)`, tolerant of representation error in `fraction`.
pub fn quota(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    let rounded = x.round();
    if (x - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        x.ceil() as usize
    }
}

/// The buffer after regeneration: pass-through reals and re-rendered
/// generated samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentativeSet {
    pub real_samples: Vec<PatchSample>,
    pub regenerated_samples: Vec<PatchSample>,
    /// Carried over from the buffer.
    pub shortfall: bool,
}

impl RepresentativeSet {
    pub fn len(&self) -> usize {
        self.real_samples.len() + self.regenerated_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn samples(&self) -> Vec<PatchSample> {
        self.real_samples.iter().chain(&self.regenerated_samples).cloned().collect()
    }
}

/// Confidence of every sample in dataset order.
pub fn score_confidence(params: &ModelParams, dataset: &Dataset) -> Result<Vec<ScoreRecord>> {
    dataset
        .samples
        .par_iter()
        .enumerate()
        .map(|(id, s)| {
            let p = forward(params, &s.pixels)?;
            Ok(ScoreRecord { sample_id: id, confidence: p.get(s.label), grad_sensitivity: None })
        })
        .collect()
}

fn by_confidence_desc(a: &ScoreRecord, b: &ScoreRecord) -> Ordering {
    b.confidence.total_cmp(&a.confidence).then(a.sample_id.cmp(&b.sample_id))
}

fn by_confidence_asc(a: &ScoreRecord, b: &ScoreRecord) -> Ordering {
    a.confidence.total_cmp(&b.confidence).then(a.sample_id.cmp(&b.sample_id))
}

/// Two-sided boundary buffer. Sides that run short are flagged, not
/// backfilled from across the boundary.
pub fn build_buffer(scores: &[ScoreRecord], n: usize, k_n: f64) -> Result<CandidateBuffer> {
    if n < 1 {
        return Err(Error::InvalidArgument("buffer size N must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&k_n) {
        return Err(Error::InvalidArgument(format!("k_n {k_n} outside [0, 1]")));
    }
    let k_p = 1.0 - k_n;
    let (neg_quota, pos_quota) = (quota(k_n, n), quota(k_p, n));

    let mut below: Vec<&ScoreRecord> = scores.iter().filter(|s| s.confidence < BOUNDARY).collect();
    let mut above: Vec<&ScoreRecord> = scores.iter().filter(|s| s.confidence >= BOUNDARY).collect();
    below.sort_by(|a, b| by_confidence_desc(a, b));
    above.sort_by(|a, b| by_confidence_asc(a, b));

    Ok(CandidateBuffer {
        negative_shortfall: below.len() < neg_quota,
        positive_shortfall: above.len() < pos_quota,
        negatives: below.iter().take(neg_quota).map(|s| s.sample_id).collect(),
        positives: above.iter().take(pos_quota).map(|s| s.sample_id).collect(),
        target: n,
        k_n,
        k_p,
    })
}

/// Picks `quota` positive-side ids by descending gradient sensitivity.
/// Every record with confidence at or above 0.5 must carry a sensitivity.
pub fn top_by_gradient(scores: &[ScoreRecord], quota: usize) -> Vec<usize> {
    let mut side: Vec<(usize, f64)> = scores
        .iter()
        .filter(|s| s.confidence >= BOUNDARY)
        .map(|s| (s.sample_id, s.grad_sensitivity.expect("sensitivity computed for positive side")))
        .collect();
    side.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    side.into_iter().take(quota).map(|(id, _)| id).collect()
}

/// Fills in the gradient sensitivity of every positive-side record and
/// replaces the buffer's positives with the largest-gradient ones. The
/// negatives are left exactly as they were.
pub fn refine_positives_by_gradient(
    buffer: &CandidateBuffer,
    scores: &mut [ScoreRecord],
    params: &ModelParams,
    dataset: &Dataset,
) -> Result<CandidateBuffer> {
    let sensitivities: Vec<Option<f64>> = scores
        .par_iter()
        .map(|s| {
            if s.confidence < BOUNDARY {
                return Ok(None);
            }
            let sample = dataset.samples.get(s.sample_id).ok_or(Error::UnknownSample(s.sample_id))?;
            Ok(Some(grad_norm(&backward(params, &sample.pixels, sample.label)?)))
        })
        .collect::<Result<_>>()?;
    for (s, g) in scores.iter_mut().zip(sensitivities) {
        if g.is_some() {
            s.grad_sensitivity = g;
        }
    }
    let positives = top_by_gradient(scores, buffer.positive_quota());
    Ok(CandidateBuffer {
        positive_shortfall: positives.len() < buffer.positive_quota(),
        positives,
        ..buffer.clone()
    })
}

/// Splits the buffer into real and generated members and re-renders the
/// generated ones with `g_new` from the same content seed.
pub fn assemble_representative(
    buffer: &CandidateBuffer,
    dataset: &Dataset,
    g_new: &GeneratorSpec,
) -> Result<RepresentativeSet> {
    assemble_representative_multi(buffer, dataset, std::slice::from_ref(g_new))
}

/// Like [`assemble_representative`], with the generated members assigned to
/// the new generators round-robin in buffer order.
pub fn assemble_representative_multi(
    buffer: &CandidateBuffer,
    dataset: &Dataset,
    generators: &[GeneratorSpec],
) -> Result<RepresentativeSet> {
    if generators.is_empty() {
        return Err(Error::InvalidArgument("no new generators given".into()));
    }
    for g in generators {
        g.validate()?;
    }
    let mut real_samples = Vec::new();
    let mut regenerated_samples = Vec::new();
    for id in buffer.ids() {
        let s = dataset.samples.get(id).ok_or(Error::UnknownSample(id))?;
        match s.origin {
            Origin::Real => real_samples.push(s.clone()),
            Origin::Generated(_) => {
                let g = &generators[regenerated_samples.len() % generators.len()];
                regenerated_samples.push(render(g, s.content));
            }
        }
    }
    Ok(RepresentativeSet { real_samples, regenerated_samples, shortfall: buffer.has_shortfall() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, Architecture, Label};
    use crate::synth::{make_dataset, Split};

    fn recs(conf: &[f64]) -> Vec<ScoreRecord> {
        conf.iter()
            .enumerate()
            .map(|(i, &c)| ScoreRecord { sample_id: i, confidence: c, grad_sensitivity: None })
            .collect()
    }

    #[test]
    fn quotas_at_default_setting() {
        assert_eq!(quota(0.9, 500), 450);
        assert_eq!(quota(1.0 - 0.9, 500), 50);
        assert_eq!(quota(0.5, 3), 2);
        assert_eq!(quota(0.0, 10), 0);
    }

    #[test]
    fn small_worked_example() {
        let b = build_buffer(&recs(&[0.1, 0.4, 0.45, 0.6, 0.9]), 2, 0.5).unwrap();
        assert_eq!(b.negatives, vec![2]);
        assert_eq!(b.positives, vec![3]);
        assert!(!b.has_shortfall());
    }

    #[test]
    fn no_negatives_flags_shortfall() {
        let b = build_buffer(&recs(&[0.6, 0.7, 0.99]), 2, 0.5).unwrap();
        assert!(b.negatives.is_empty());
        assert!(b.negative_shortfall);
        assert_eq!(b.positives, vec![0]);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(build_buffer(&recs(&[0.2]), 0, 0.5).is_err());
        assert!(build_buffer(&recs(&[0.2]), 1, 1.5).is_err());
        assert!(build_buffer(&recs(&[0.2]), 1, -0.1).is_err());
    }

    #[test]
    fn ties_break_by_id() {
        let b = build_buffer(&recs(&[0.4, 0.4, 0.4, 0.5, 0.5]), 4, 0.5).unwrap();
        assert_eq!(b.negatives, vec![0, 1]);
        assert_eq!(b.positives, vec![3, 4]);
    }

    fn small_world() -> (ModelParams, Dataset) {
        let arch = Architecture::new(vec![256, 6, 2], crate::nn::Activation::Tanh).unwrap();
        let params = init_params(&arch, 3);
        let ds = make_dataset(&GeneratorSpec::default_old(), 20, 20, Split::Train, 5).unwrap();
        (params, ds)
    }

    #[test]
    fn zero_model_scores_one_half() {
        let (params, ds) = small_world();
        let zero = ModelParams::zeros(params.arch().clone());
        assert!(score_confidence(&zero, &ds).unwrap().iter().all(|r| r.confidence == 0.5));
    }

    #[test]
    fn confidence_is_true_label_probability() {
        let (params, ds) = small_world();
        let scores = score_confidence(&params, &ds).unwrap();
        for (r, s) in scores.iter().zip(&ds.samples) {
            let p = forward(&params, &s.pixels).unwrap();
            let want = if s.label == Label::Real { p.p0 } else { p.p1 };
            assert_eq!(r.confidence, want);
        }
    }

    #[test]
    fn refine_leaves_negatives_and_respects_empty_quota() {
        let (params, ds) = small_world();
        let mut scores = score_confidence(&params, &ds).unwrap();
        let buf = build_buffer(&scores, 10, 0.7).unwrap();
        let refined = refine_positives_by_gradient(&buf, &mut scores, &params, &ds).unwrap();
        assert_eq!(refined.negatives, buf.negatives);
        assert_eq!(refined.positives.len(), buf.positive_quota().min(
            scores.iter().filter(|s| s.confidence >= BOUNDARY).count()));
        for s in &scores {
            assert_eq!(s.grad_sensitivity.is_some(), s.confidence >= BOUNDARY);
        }

        let buf = build_buffer(&scores, 10, 1.0).unwrap();
        let refined = refine_positives_by_gradient(&buf, &mut scores, &params, &ds).unwrap();
        assert!(refined.positives.is_empty());
        assert_eq!(refined.negatives, buf.negatives);
    }

    #[test]
    fn assemble_regenerates_only_generated_members() {
        let (_, ds) = small_world();
        let g_new = &GeneratorSpec::default_new()[0];
        let all_real: Vec<usize> = (0..ds.len()).filter(|&i| ds.samples[i].label == Label::Real).collect();
        let all_gen: Vec<usize> = (0..ds.len()).filter(|&i| ds.samples[i].label == Label::Generated).collect();
        let mk = |neg: Vec<usize>, pos: Vec<usize>| CandidateBuffer {
            negatives: neg,
            positives: pos,
            target: 40,
            k_n: 0.5,
            k_p: 0.5,
            negative_shortfall: false,
            positive_shortfall: false,
        };

        let rep = assemble_representative(&mk(all_real.clone(), vec![]), &ds, g_new).unwrap();
        assert!(rep.regenerated_samples.is_empty());
        assert_eq!(rep.real_samples.len(), all_real.len());
        assert!(rep.real_samples.iter().zip(&all_real).all(|(s, &i)| *s == ds.samples[i]));

        let rep = assemble_representative(&mk(all_gen.clone(), vec![]), &ds, g_new).unwrap();
        assert_eq!(rep.regenerated_samples.len(), all_gen.len());
        for (s, &i) in rep.regenerated_samples.iter().zip(&all_gen) {
            assert_eq!(s.origin.as_str(), g_new.version_id);
            assert_eq!(s.content, ds.samples[i].content);
        }

        assert_eq!(
            assemble_representative(&mk(vec![999], vec![]), &ds, g_new),
            Err(Error::UnknownSample(999))
        );
    }

    #[test]
    fn round_robin_assignment() {
        let ds = make_dataset(&GeneratorSpec::default_old(), 0, 48, Split::Train, 1).unwrap();
        let buf = CandidateBuffer {
            negatives: (0..48).collect(),
            positives: vec![],
            target: 48,
            k_n: 1.0,
            k_p: 0.0,
            negative_shortfall: false,
            positive_shortfall: false,
        };
        let gens = GeneratorSpec::default_new();
        let rep = assemble_representative_multi(&buf, &ds, &gens).unwrap();
        for g in &gens {
            let n = rep.regenerated_samples.iter().filter(|s| s.origin.as_str() == g.version_id).count();
            assert_eq!(n, 12);
        }
        assert!(assemble_representative_multi(&buf, &ds, &[]).is_err());
    }
}
