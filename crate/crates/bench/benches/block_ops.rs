use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use adaptidx_core::block_store::{encode_block, exact_rows, read_block, write_block};
use adaptidx_core::dataset::gen_synthetic;
use adaptidx_core::{build_index, Value};

fn index_build(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_index");
    for rows in [10_000usize, 100_000] {
        let table = gen_synthetic(rows, 1).unwrap();
        let block = table.block(0, 0..rows).unwrap();
        group.throughput(Throughput::Elements(rows as u64));
        group.bench_with_input(BenchmarkId::from_parameter(rows), &block, |b, block| {
            b.iter(|| build_index(black_box(block), "b", 1024).unwrap())
        });
    }
    group.finish();
}

fn sparse_lookup(c: &mut Criterion) {
    let rows = 262_144;
    let table = gen_synthetic(rows, 2).unwrap();
    let (sorted, _, index) = build_index(&table.block(0, 0..rows).unwrap(), "b", 1024).unwrap();
    let keys = sorted.column("b").unwrap();
    let (low, high) = (Value::Int(400_000), Value::Int(402_000));
    c.bench_function("sparse_lookup", |b| {
        b.iter(|| {
            let candidate = index.candidate_rows(black_box(&low), black_box(&high));
            exact_rows(keys, candidate, &low, &high)
        })
    });
}

fn block_io(c: &mut Criterion) {
    let rows = 100_000;
    let table = gen_synthetic(rows, 3).unwrap();
    let block = table.block(0, 0..rows).unwrap();
    let bytes = encode_block(&block).unwrap().len() as u64;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("blk");
    let mut group = c.benchmark_group("block_io");
    group.throughput(Throughput::Bytes(bytes));
    group.bench_function("write", |b| b.iter(|| write_block(black_box(&block), &path).unwrap()));
    write_block(&block, &path).unwrap();
    group.bench_function("read_full", |b| b.iter(|| read_block(&path, None, None).unwrap()));
    group.bench_function("read_one_column", |b| b.iter(|| read_block(&path, Some(&["c"]), None).unwrap()));
    group.finish();
}

criterion_group!(benches, index_build, sparse_lookup, block_io);
criterion_main!(benches);
