use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ledgerair_core::ledger::{decode_log, encode_log, verify_log_bytes};
use ledgerair_core::testkit::fixture_chain;

fn verify(c: &mut Criterion) {
    let mut group = c.benchmark_group("verify_chain");
    for blocks in [10, 50] {
        let (chain, _, members) = fixture_chain(1, blocks, 4);
        group.bench_with_input(BenchmarkId::from_parameter(blocks), &chain, |b, chain| {
            b.iter(|| black_box(chain.verify(&members)))
        });
    }
    group.finish();
}

fn log_codec(c: &mut Criterion) {
    let (chain, _, members) = fixture_chain(2, 50, 4);
    let bytes = encode_log(chain.blocks());
    c.bench_function("encode_log/50", |b| {
        b.iter(|| black_box(encode_log(chain.blocks())))
    });
    c.bench_function("decode_log/50", |b| {
        b.iter(|| black_box(decode_log(&bytes).unwrap()))
    });
    c.bench_function("verify_log_bytes/50", |b| {
        b.iter(|| black_box(verify_log_bytes(&bytes, &members)))
    });
}

criterion_group!(benches, verify, log_codec);
criterion_main!(benches);
