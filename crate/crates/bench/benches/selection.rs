use std::hint::black_box;

use clusterkv::clustering::{cluster_prefill, ClusterConfig};
use clusterkv::harness::{run_simulation, PolicyConfig, PolicyKind};
use clusterkv::selection::{build_index, exact_topb, page_select, select_tokens, PageRepr};
use clusterkv::trace::{generate_synthetic, SynthSpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn spec(prompt_len: usize, decode_len: usize) -> SynthSpec {
    SynthSpec {
        prompt_len,
        decode_len,
        n_layers: 1,
        n_heads: 1,
        ..SynthSpec::default()
    }
}

fn prefill(c: &mut Criterion) {
    let mut group = c.benchmark_group("prefill_kmeans");
    group.sample_size(10);
    for len in [1024, 4096] {
        let bundle = generate_synthetic(&spec(len, 1)).unwrap();
        let keys = &bundle.traces[0].prompt_keys;
        group.bench_with_input(BenchmarkId::from_parameter(len), keys, |b, keys| {
            b.iter(|| cluster_prefill(keys.view(), &ClusterConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn selection(c: &mut Criterion) {
    let bundle = generate_synthetic(&spec(4096, 8)).unwrap();
    let trace = &bundle.traces[0];
    let keys = trace.prompt_keys.view();
    let q = trace.decode_queries.row(0);
    let model = cluster_prefill(keys, &ClusterConfig::default()).unwrap();
    let index = build_index(&model);

    let mut group = c.benchmark_group("select");
    for budget in [256, 1024] {
        group.bench_with_input(BenchmarkId::new("clusterkv", budget), &budget, |b, &budget| {
            b.iter(|| select_tokens(black_box(q), &model, &index, budget, &[]))
        });
        group.bench_with_input(BenchmarkId::new("exact_topb", budget), &budget, |b, &budget| {
            b.iter(|| exact_topb(black_box(q), keys, budget))
        });
        group.bench_with_input(BenchmarkId::new("page16", budget), &budget, |b, &budget| {
            b.iter(|| page_select(black_box(q), keys, budget, 16, PageRepr::Max))
        });
    }
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let bundle = generate_synthetic(&spec(2048, 32)).unwrap();
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    for policy in [PolicyKind::ClusterKv, PolicyKind::Page] {
        let cfg = PolicyConfig::new(policy, 512);
        group.bench_function(policy.name(), |b| b.iter(|| run_simulation(&bundle, &cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, prefill, selection, simulation);
criterion_main!(benches);
