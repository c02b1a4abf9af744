use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use ledgerair_core::consensus::{ClusterWorld, QuorumConfig};
use ledgerair_core::platform::{BookingRequest, Platform, PlatformConfig};
use ledgerair_core::testkit::{fixture_author_keys, fixture_workload};

fn commit_to_quiescence(c: &mut Criterion) {
    let mut group = c.benchmark_group("cluster_commit_20_txs");
    for n in [3, 4, 7] {
        let keys = fixture_author_keys(9);
        let txs = fixture_workload(&keys, 19);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter_batched(
                || ClusterWorld::new(QuorumConfig::majority(n), 9, keys.clone()).unwrap(),
                |mut world| {
                    for tx in &txs {
                        world.submit(tx.clone());
                    }
                    black_box(world.run_until_idle(10_000))
                },
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn booking_round_trip(c: &mut Criterion) {
    let req = BookingRequest {
        customer: "Bench".into(),
        flight: "BG147".into(),
        payment_method: "Credit Card".into(),
    };
    c.bench_function("initiate_booking", |b| {
        b.iter_batched(
            || Platform::new(PlatformConfig::default()).unwrap(),
            |mut p| black_box(p.initiate_booking(&req).unwrap()),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, commit_to_quiescence, booking_round_trip);
criterion_main!(benches);
