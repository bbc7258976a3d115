use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use sca_core::cpa::{hypotheses, N_GUESSES};
use sca_core::{
    cpa_attack, encrypt_block, simulate_campaign, wrong_horse_scan, Aes128, Block,
    CorrelationAccumulator, LeakageConfig,
};

fn key() -> Block {
    Block::from_hex("2b7e151628aed2a6abf7158809cf4f3c").unwrap()
}

fn noisy() -> LeakageConfig {
    LeakageConfig::equal_weights(1.0).with_noise(4.0)
}

fn bench_aes(c: &mut Criterion) {
    let mut g = c.benchmark_group("aes");
    g.throughput(Throughput::Elements(1));
    let pt = Block([0x5a; 16]);
    g.bench_function("encrypt_block", |b| {
        b.iter(|| encrypt_block(black_box(&key()), black_box(&pt)))
    });
    let cipher = Aes128::new(&key());
    g.bench_function("last_round_states", |b| {
        b.iter(|| cipher.last_round_states(black_box(&pt)))
    });
    g.finish();
}

fn bench_simulate(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate_campaign");
    for n in [1_000usize, 20_000] {
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| simulate_campaign(&key(), n, &noisy(), 1).unwrap())
        });
    }
    g.finish();
}

fn bench_accumulator(c: &mut Criterion) {
    let ts = simulate_campaign(&key(), 1_000, &noisy().with_samples(8, 3), 2).unwrap();
    let mut g = c.benchmark_group("accumulator");
    g.throughput(Throughput::Elements(ts.n_traces() as u64));
    g.bench_function("update_256x8", |b| {
        b.iter(|| {
            let mut acc = CorrelationAccumulator::new(N_GUESSES, 8);
            let mut hyp = [0u8; N_GUESSES];
            for (row, ct) in ts.traces().zip(ts.ciphertexts()) {
                hypotheses(ct, 0, &mut hyp);
                acc.update(&hyp, row);
            }
            acc
        })
    });
    g.finish();
}

fn bench_attack(c: &mut Criterion) {
    let ts = simulate_campaign(&key(), 20_000, &noisy(), 3).unwrap();
    let mut g = c.benchmark_group("analysis");
    g.sample_size(20);
    g.throughput(Throughput::Elements(ts.n_traces() as u64));
    g.bench_function("cpa_attack_20k", |b| {
        b.iter(|| cpa_attack(&ts, 0, 100).unwrap())
    });
    g.bench_function("wrong_horse_scan_20k", |b| {
        b.iter(|| wrong_horse_scan(&ts, 0, 0xd0, 0).unwrap())
    });
    g.finish();
}

criterion_group!(
    benches,
    bench_aes,
    bench_simulate,
    bench_accumulator,
    bench_attack
);
criterion_main!(benches);
