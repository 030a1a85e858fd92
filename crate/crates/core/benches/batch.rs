use std::fs;
use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, Criterion};
use fedsim_core::flow::Scenario;
use fedsim_core::par;
use fedsim_core::suites::delegation_corpus;
use fedsim_core::translation::validate_chain;

fn scenarios() -> Vec<Scenario> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .expect("scenario directory")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| Scenario::load(&fs::read_to_string(p).unwrap()).unwrap())
        .collect()
}

fn scenario_batch(c: &mut Criterion) {
    // Several copies so the pool has more work than cores.
    let one = scenarios();
    let batch: Vec<Scenario> = (0..8).flat_map(|_| one.iter().cloned()).collect();
    let mut g = c.benchmark_group("scenarios");
    g.bench_function("parallel", |b| b.iter(|| par::run_all(black_box(&batch), Some(1))));
    g.bench_function("sequential", |b| b.iter(|| par::run_all_sequential(black_box(&batch), Some(1))));
    g.finish();
}

fn chain_batch(c: &mut Criterion) {
    let corpus = delegation_corpus(1);
    let check = |case: &fedsim_core::suites::ChainCase| validate_chain(&case.anchors, &case.chain, case.now).is_ok();
    let mut g = c.benchmark_group("chains");
    g.bench_function("parallel", |b| b.iter(|| par::map(black_box(&corpus), check)));
    g.bench_function("sequential", |b| b.iter(|| par::map_sequential(black_box(&corpus), check)));
    g.finish();
}

criterion_group!(batch, scenario_batch, chain_batch);
criterion_main!(batch);
