use cip_bench::layered_dag;
use cip_core::graph::{d_separated, is_valid_adjustment, NodeSet};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn queries(c: &mut Criterion) {
    let g = layered_dag(6, 5, 0.4, 0);
    let x = NodeSet::of(&["L0_0", "L0_1"]);
    let y = NodeSet::of(&["L5_0"]);
    let s = NodeSet::of(&["L2_0", "L2_3", "L3_1"]);
    c.bench_function("d_separated_30_nodes", |b| {
        b.iter(|| d_separated(black_box(&g), &x, &y, &s).unwrap())
    });
    c.bench_function("valid_adjustment_30_nodes", |b| {
        b.iter(|| is_valid_adjustment(black_box(&g), &x, &y, &s).unwrap())
    });
}

criterion_group!(benches, queries);
criterion_main!(benches);
