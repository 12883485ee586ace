//! Synthetic image world: real patches, versioned generators, and the
//! blur / compression corruptions used during training and testing.
//!
//! A "real" patch is a 16x16 random field with spectral amplitude
//! `1 / (1 + r)` where `r` is the radial DCT frequency index. A generator
//! renders the same content plus a periodic grid artifact and a little
//! residual noise. The content seed plays the role of a text prompt: rendering
//! one seed under two generators yields "the same image" from each.

use std::f64::consts::PI;
use std::fmt;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dct::{dct_basis, scaled_quant_table, transform};
use crate::error::{Error, Result};
use crate::nn::{Example, Label};
use crate::seed::{derive_seed, hash_str, rng_for};

pub const PATCH_SIDE: usize = 16;
pub const PATCH_PIXELS: usize = PATCH_SIDE * PATCH_SIDE;
const BLOCK: usize = 8;

fn basis16() -> &'static [f64] {
    static B: OnceLock<Vec<f64>> = OnceLock::new();
    B.get_or_init(|| dct_basis(PATCH_SIDE))
}

fn basis8() -> &'static [f64] {
    static B: OnceLock<Vec<f64>> = OnceLock::new();
    B.get_or_init(|| dct_basis(BLOCK))
}

/// Deterministic key of a sample's underlying content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentSeed(pub u64);

/// A synthetic generator version and its artifact signature.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub version_id: String,
    /// Grid cycles per patch, in `[2, 8]`.
    pub artifact_freq: u32,
    /// Radians, in `[0, 2pi)`.
    pub artifact_phase: f64,
    pub artifact_amp: f64,
    pub residual_noise_sd: f64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.version_id.is_empty() || self.version_id == REAL_ORIGIN {
            return Err(Error::InvalidGenerator(format!(
                "version id {:?} is reserved or empty",
                self.version_id
            )));
        }
        if !(2..=8).contains(&self.artifact_freq) {
            return Err(Error::InvalidGenerator(format!(
                "artifact_freq {} outside [2, 8]",
                self.artifact_freq
            )));
        }
        if !(0.0..2.0 * PI).contains(&self.artifact_phase) {
            return Err(Error::InvalidGenerator(format!(
                "artifact_phase {} outside [0, 2pi)",
                self.artifact_phase
            )));
        }
        if !self.artifact_amp.is_finite() || self.artifact_amp < 0.0 {
            return Err(Error::InvalidGenerator("artifact_amp must be finite and >= 0".into()));
        }
        if !self.residual_noise_sd.is_finite() || self.residual_noise_sd < 0.0 {
            return Err(Error::InvalidGenerator("residual_noise_sd must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// The pre-training generator.
    pub fn default_old() -> Self {
        Self {
            version_id: "gen-v1".into(),
            artifact_freq: 3,
            artifact_phase: 0.4,
            artifact_amp: 0.12,
            residual_noise_sd: DEFAULT_NOISE_SD,
        }
    }

    /// The four newer generators, one per artifact frequency 4..=7.
    pub fn default_new() -> Vec<Self> {
        [(4, 1.3), (5, 2.5), (6, 3.7), (7, 5.0)]
            .iter()
            .enumerate()
            .map(|(i, &(freq, phase))| Self {
                version_id: format!("gen-v{}", i + 2),
                artifact_freq: freq,
                artifact_phase: phase,
                artifact_amp: 0.10,
                residual_noise_sd: DEFAULT_NOISE_SD,
            })
            .collect()
    }
}

const DEFAULT_NOISE_SD: f64 = 0.01;
/// Pixel standard deviation of a real patch before clipping.
const REAL_CONTRAST: f64 = 1.0 / 6.0;

pub const REAL_ORIGIN: &str = "real";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Origin {
    Real,
    Generated(String),
}

impl Origin {
    pub fn as_str(&self) -> &str {
        match self {
            Origin::Real => REAL_ORIGIN,
            Origin::Generated(v) => v,
        }
    }

    pub fn parse(s: &str) -> Origin {
        if s == REAL_ORIGIN {
            Origin::Real
        } else {
            Origin::Generated(s.to_string())
        }
    }

    pub fn label(&self) -> Label {
        match self {
            Origin::Real => Label::Real,
            Origin::Generated(_) => Label::Generated,
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One 16x16 grayscale patch, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSample {
    pub pixels: Vec<f64>,
    pub label: Label,
    pub origin: Origin,
    pub content: ContentSeed,
}

impl PatchSample {
    fn with_pixels(&self, pixels: Vec<f64>) -> Self {
        Self { pixels, label: self.label, origin: self.origin.clone(), content: self.content }
    }
}

impl Example for PatchSample {
    fn pixels(&self) -> &[f64] {
        &self.pixels
    }
    fn label(&self) -> Label {
        self.label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
    /// Seeds drawn on demand, e.g. for random fine-tuning sets.
    Fresh,
}

impl Split {
    fn code(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
            Split::Fresh => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Fresh => "fresh",
        }
    }
}

/// Samples in a fixed order; the index of a sample is its id.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<PatchSample>,
    pub split: Split,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(real, generated)` counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let generated = self.samples.iter().filter(|s| s.label == Label::Generated).count();
        (self.samples.len() - generated, generated)
    }
}

const INDEX_BITS: u32 = 22;
const SPLIT_BITS: u32 = 2;

/// Content seed for slot `index` of `split` under run seed `seed`.
///
/// The low bits hold the split and slot so seeds from different slots or
/// splits of one run never collide.
pub fn content_seed(seed: u64, split: Split, index: usize) -> ContentSeed {
    assert!((index as u64) < (1 << INDEX_BITS), "slot index too large");
    let high = derive_seed(&[seed, 0xC0_47E7]) << (INDEX_BITS + SPLIT_BITS);
    ContentSeed(high | (split.code() << INDEX_BITS) | index as u64)
}

fn clip_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Real patch for `content`: a 1/f-spectrum Gaussian field, standardized around 0.5.
pub fn sample_real(content: ContentSeed) -> PatchSample {
    PatchSample {
        pixels: real_field(content),
        label: Label::Real,
        origin: Origin::Real,
        content,
    }
}

fn real_field(content: ContentSeed) -> Vec<f64> {
    let mut rng = rng_for(&[content.0, 0x8EA1]);
    let mut coeffs = vec![0.0; PATCH_PIXELS];
    for u in 0..PATCH_SIDE {
        for v in 0..PATCH_SIDE {
            let z: f64 = rng.sample(StandardNormal);
            if u == 0 && v == 0 {
                continue;
            }
            let r = ((u * u + v * v) as f64).sqrt();
            coeffs[u * PATCH_SIDE + v] = z / (1.0 + r);
        }
    }
    let field = transform(&coeffs, basis16(), PATCH_SIDE, true);
    let n = PATCH_PIXELS as f64;
    let mean = field.iter().sum::<f64>() / n;
    let sd = (field.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd <= 0.0 {
        return vec![0.5; PATCH_PIXELS];
    }
    field.iter().map(|x| clip_unit(0.5 + REAL_CONTRAST * (x - mean) / sd)).collect()
}

/// Unit-amplitude grid artifact: mean of a horizontal and a vertical cosine.
pub fn artifact_pattern(freq: u32, phase: f64) -> Vec<f64> {
    let w = 2.0 * PI * freq as f64 / PATCH_SIDE as f64;
    let mut out = Vec::with_capacity(PATCH_PIXELS);
    for y in 0..PATCH_SIDE {
        for x in 0..PATCH_SIDE {
            out.push(0.5 * ((w * x as f64 + phase).cos() + (w * y as f64 + phase).cos()));
        }
    }
    out
}

/// Renders `content` with generator `gen`.
pub fn render(gen: &GeneratorSpec, content: ContentSeed) -> PatchSample {
    let base = real_field(content);
    let pattern = artifact_pattern(gen.artifact_freq, gen.artifact_phase);
    let mut rng = rng_for(&[content.0, hash_str(&gen.version_id), 0x2015E]);
    let pixels = base
        .iter()
        .zip(&pattern)
        .map(|(&b, &p)| {
            let noise = if gen.residual_noise_sd > 0.0 {
                gen.residual_noise_sd * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            clip_unit(b + gen.artifact_amp * p + noise)
        })
        .collect();
    PatchSample {
        pixels,
        label: Label::Generated,
        origin: Origin::Generated(gen.version_id.clone()),
        content,
    }
}

/// Normalized discrete Gaussian kernel of radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|k| k / total).collect()
}

/// Half-sample symmetric reflection (`... 1 0 | 0 1 ... n-1 | n-1 n-2 ...`).
/// With a symmetric kernel this keeps the patch sum unchanged.
fn reflect(i: i64, n: i64) -> usize {
    let period = 2 * n;
    let m = i.rem_euclid(period);
    if m >= n {
        (period - 1 - m) as usize
    } else {
        m as usize
    }
}

/// Separable Gaussian blur with reflected borders; `sigma < 0.05` is a no-op.
pub fn blur_patch(s: &PatchSample, sigma: f64) -> PatchSample {
    if !(sigma >= 0.05) {
        return s.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let n = PATCH_SIDE as i64;
    let mut rows = vec![0.0; PATCH_PIXELS];
    for y in 0..PATCH_SIDE {
        for x in 0..PATCH_SIDE {
            rows[y * PATCH_SIDE + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * s.pixels[y * PATCH_SIDE + reflect(x as i64 + k as i64 - r, n)])
                .sum();
        }
    }
    let mut out = vec![0.0; PATCH_PIXELS];
    for y in 0..PATCH_SIDE {
        for x in 0..PATCH_SIDE {
            let v: f64 = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * rows[reflect(y as i64 + k as i64 - r, n) * PATCH_SIDE + x])
                .sum();
            out[y * PATCH_SIDE + x] = clip_unit(v);
        }
    }
    s.with_pixels(out)
}

/// JPEG-like lossy round trip: per 8x8 block, level-shifted orthonormal DCT,
/// quantization by the QF-scaled luminance table, and inverse DCT.
pub fn compress_patch(s: &PatchSample, qf: u8) -> Result<PatchSample> {
    if !(1..=100).contains(&qf) {
        return Err(Error::InvalidArgument(format!("quality factor {qf} outside [1, 100]")));
    }
    let table = scaled_quant_table(qf);
    let mut out = vec![0.0; PATCH_PIXELS];
    let mut block = vec![0.0; BLOCK * BLOCK];
    for by in (0..PATCH_SIDE).step_by(BLOCK) {
        for bx in (0..PATCH_SIDE).step_by(BLOCK) {
            for y in 0..BLOCK {
                for x in 0..BLOCK {
                    block[y * BLOCK + x] = s.pixels[(by + y) * PATCH_SIDE + bx + x] * 255.0 - 128.0;
                }
            }
            let mut coeffs = transform(&block, basis8(), BLOCK, false);
            // The DC term uses a unit step so block means survive every quality.
            coeffs[0] = coeffs[0].round();
            for (c, q) in coeffs.iter_mut().zip(table.iter()).skip(1) {
                *c = (*c / q).round() * q;
            }
            let rec = transform(&coeffs, basis8(), BLOCK, true);
            for y in 0..BLOCK {
                for x in 0..BLOCK {
                    out[(by + y) * PATCH_SIDE + bx + x] = clip_unit((rec[y * BLOCK + x] + 128.0) / 255.0);
                }
            }
        }
    }
    Ok(s.with_pixels(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionMode {
    Train,
    Test,
}

pub const TRAIN_EVENT_PROB: f64 = 0.10;
pub const TRAIN_BLUR_SIGMA: (f64, f64) = (0.1, 3.0);
pub const TRAIN_QF: (u8, u8) = (30, 100);
pub const TEST_EVENT_PROB: f64 = 0.50;
pub const TEST_BLUR_SIGMA: f64 = 1.0;
pub const TEST_QF: u8 = 50;

/// Random draws consumed by [`corrupt`]. Implemented for every [`Rng`];
/// tests substitute scripted sources.
pub trait CorruptionDraws {
    /// Bernoulli event with probability `p`.
    fn fires(&mut self, p: f64) -> bool;
    /// Uniform real in `[lo, hi)`.
    fn uniform(&mut self, lo: f64, hi: f64) -> f64;
    /// Uniform integer in `[lo, hi]`.
    fn uniform_int(&mut self, lo: u8, hi: u8) -> u8;
}

impl<R: Rng> CorruptionDraws for R {
    fn fires(&mut self, p: f64) -> bool {
        self.random::<f64>() < p
    }
    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.random_range(lo..hi)
    }
    fn uniform_int(&mut self, lo: u8, hi: u8) -> u8 {
        self.random_range(lo..=hi)
    }
}

/// What [`corrupt`] decided to apply.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CorruptionPlan {
    pub compress_qf: Option<u8>,
    pub blur_sigma: Option<f64>,
}

/// Draws the corruption events for one sample. Compression is drawn first.
pub fn draw_corruption<D: CorruptionDraws + ?Sized>(mode: CorruptionMode, draws: &mut D) -> CorruptionPlan {
    match mode {
        CorruptionMode::Train => {
            let compress = draws.fires(TRAIN_EVENT_PROB);
            let blur = draws.fires(TRAIN_EVENT_PROB);
            CorruptionPlan {
                compress_qf: compress.then(|| draws.uniform_int(TRAIN_QF.0, TRAIN_QF.1)),
                blur_sigma: blur.then(|| draws.uniform(TRAIN_BLUR_SIGMA.0, TRAIN_BLUR_SIGMA.1)),
            }
        }
        CorruptionMode::Test => {
            let compress = draws.fires(TEST_EVENT_PROB);
            let blur = draws.fires(TEST_EVENT_PROB);
            CorruptionPlan {
                compress_qf: compress.then_some(TEST_QF),
                blur_sigma: blur.then_some(TEST_BLUR_SIGMA),
            }
        }
    }
}

/// Applies a plan: compression first, then blur.
pub fn apply_corruption(s: &PatchSample, plan: CorruptionPlan) -> PatchSample {
    let mut out = match plan.compress_qf {
        // Plans only carry in-range quality factors.
        Some(qf) => compress_patch(s, qf).expect("quality factor in range"),
        None => s.clone(),
    };
    if let Some(sigma) = plan.blur_sigma {
        out = blur_patch(&out, sigma);
    }
    out
}

pub fn corrupt<D: CorruptionDraws + ?Sized>(s: &PatchSample, mode: CorruptionMode, draws: &mut D) -> PatchSample {
    apply_corruption(s, draw_corruption(mode, draws))
}

/// Balanced-or-not dataset of `n_real` real and `n_gen` rendered patches,
/// interleaved real/generated while both remain.
pub fn make_dataset(
    gen: &GeneratorSpec,
    n_real: usize,
    n_gen: usize,
    split: Split,
    seed: u64,
) -> Result<Dataset> {
    gen.validate()?;
    let total = n_real + n_gen;
    let mut samples = Vec::with_capacity(total);
    let (mut r, mut g) = (0, 0);
    for slot in 0..total {
        let take_real = if r < n_real && g < n_gen { slot % 2 == 0 } else { r < n_real };
        let content = content_seed(seed, split, slot);
        if take_real {
            samples.push(sample_real(content));
            r += 1;
        } else {
            samples.push(render(gen, content));
            g += 1;
        }
    }
    Ok(Dataset { samples, split })
}
