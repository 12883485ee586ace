use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use liteupdate_core::nn::{backward, forward, init_params};
use liteupdate_core::select::build_buffer;
use liteupdate_core::synth::{blur_patch, compress_patch, render};
use liteupdate_core::{merge_params, Architecture, ContentSeed, GeneratorSpec, MergeConfig, ScoreRecord};

fn network(c: &mut Criterion) {
    let params = init_params(&Architecture::default_detector(), 1);
    let patch = render(&GeneratorSpec::default_old(), ContentSeed(3));
    c.bench_function("forward", |b| b.iter(|| forward(&params, black_box(&patch.pixels)).unwrap()));
    c.bench_function("backward", |b| b.iter(|| backward(&params, black_box(&patch.pixels), patch.label).unwrap()));
}

fn corruption(c: &mut Criterion) {
    let gen = GeneratorSpec::default_old();
    c.bench_function("render", |b| b.iter(|| render(&gen, black_box(ContentSeed(9)))));
    let patch = render(&gen, ContentSeed(4));
    c.bench_function("compress qf50", |b| b.iter(|| compress_patch(black_box(&patch), 50).unwrap()));
    c.bench_function("blur sigma1", |b| b.iter(|| blur_patch(black_box(&patch), 1.0)));
}

fn selection(c: &mut Criterion) {
    let scores: Vec<ScoreRecord> = (0..4000)
        .map(|i| ScoreRecord { sample_id: i, confidence: ((i * 7919) % 4000) as f64 / 4000.0, grad_sensitivity: None })
        .collect();
    c.bench_function("build_buffer 4000", |b| b.iter(|| build_buffer(black_box(&scores), 500, 0.9).unwrap()));
}

fn merging(c: &mut Criterion) {
    let arch = Architecture::default_detector();
    let (t0, t1, t2) = (init_params(&arch, 1), init_params(&arch, 2), init_params(&arch, 3));
    let cfg = MergeConfig::new(0.2).unwrap();
    c.bench_function("merge", |b| b.iter(|| merge_params(black_box(&t0), &t1, &t2, cfg).unwrap()));
}

criterion_group!(benches, network, corruption, selection, merging);
criterion_main!(benches);
