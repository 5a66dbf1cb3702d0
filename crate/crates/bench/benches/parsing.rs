use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spanparse::chart::{cky_decode, ChartScores};
use spanparse::encoder::{Encoder, EncoderConfig};
use spanparse::experiments::{builtin_suite, synth_generate};
use spanparse::metrics::{evalb_score, EvalConfig};
use spanparse::tensor::ParamStore;

fn cky(c: &mut Criterion) {
    let mut group = c.benchmark_group("cky_decode");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for n in [10, 20, 40] {
        let chart = ChartScores::from_fn(n, 30, |_, _, _| rng.gen_range(-1.0..1.0));
        group.bench_with_input(BenchmarkId::from_parameter(n), &chart, |b, chart| b.iter(|| cky_decode(black_box(chart), true)));
    }
    group.finish();
}

fn encoder(c: &mut Criterion) {
    let mut group = c.benchmark_group("encoder_forward");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let cfg = EncoderConfig { vocab_size: 500, ..EncoderConfig::default() };
    let enc = Encoder::new(&mut store, "enc", cfg, &mut rng).unwrap();
    for n in [10, 25] {
        let ids: Vec<usize> = (0..n).map(|_| rng.gen_range(2..500)).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &ids, |b, ids| b.iter(|| enc.encode(&store, black_box(ids)).unwrap()));
    }
    group.finish();
}

fn evalb(c: &mut Criterion) {
    let gold = synth_generate(&builtin_suite(), 500, None, 2, 40).unwrap();
    let pred = gold.clone();
    let cfg = EvalConfig::default();
    c.bench_function("evalb_500", |b| b.iter(|| evalb_score(black_box(&gold), black_box(&pred), &cfg).unwrap()));
}

criterion_group!(benches, cky, encoder, evalb);
criterion_main!(benches);
