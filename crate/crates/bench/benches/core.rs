use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use safediff_bench::{model, molecules};
use safediff_core::denoiser::Denoiser;
use safediff_core::diffusion::SeqState;
use safediff_core::grammar::{canonicalize, parse, TokenTable, MASK_ID};
use safediff_core::sampler::{generate, SamplerParams, Template};

fn grammar(c: &mut Criterion) {
    let mols = molecules(100);
    c.bench_function("parse 100 molecules", |b| {
        b.iter(|| {
            for s in &mols {
                black_box(parse(s, true).unwrap());
            }
        })
    });
    let graphs: Vec<_> = mols.iter().map(|s| parse(s, true).unwrap()).collect();
    c.bench_function("canonicalize 100 molecules", |b| {
        b.iter(|| {
            for g in &graphs {
                black_box(canonicalize(g).unwrap());
            }
        })
    });
}

fn denoiser(c: &mut Criterion) {
    let m = model();
    let ids = TokenTable::standard().tokenize("C1CCNCC1.C1CO").unwrap();
    let mut half = ids.clone();
    for i in (0..half.len()).step_by(2) {
        half[i] = MASK_ID;
    }
    let z = SeqState::new(half, 0.5);
    c.bench_function("forward pass, 13 tokens", |b| b.iter(|| black_box(m.predict(&z).unwrap())));

    let params = SamplerParams::default();
    for len in [16usize, 32] {
        c.bench_function(&format!("generate {len} masked tokens, N=1"), |b| {
            b.iter_batched(
                || ChaCha8Rng::seed_from_u64(1),
                |mut rng| black_box(generate(&m, &Template::fully_masked(len), &params, None, &mut rng).unwrap()),
                BatchSize::SmallInput,
            )
        });
    }
}

criterion_group!(benches, grammar, denoiser);
criterion_main!(benches);
