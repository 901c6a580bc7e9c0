#![allow(dead_code)]

use std::path::Path;

use adaptidx_core::adaptive_policy::{PolicyConfig, TimingConfig};
use adaptidx_core::dataset::{gen_synthetic, Table};
use adaptidx_core::exec::{JobSpec, OfferSetting, Predicate};
use adaptidx_core::{Cluster, ClusterConfig, Engine, EngineConfig, IndexerConfig, Value};

pub fn cluster_config(root: &Path, nodes: u16, slots: u16, r: u8, block_records: u64, page: u32) -> ClusterConfig {
    ClusterConfig {
        node_count: nodes,
        slots_per_node: slots,
        replication_factor: r,
        block_records,
        page_size_records: page,
        storage_root: root.to_owned(),
        ..Default::default()
    }
}

/// Queues large enough that no offer is ever rejected.
pub fn roomy_indexer() -> IndexerConfig {
    IndexerConfig { build_queue_capacity: 1024, write_queue_capacity: 16, ..Default::default() }
}

pub fn engine(config: ClusterConfig, table: &Table, upload_indexes: &[&str], engine: EngineConfig) -> Engine {
    let cluster = Cluster::open(config, roomy_indexer()).expect("open cluster");
    cluster.upload_dataset(table, upload_indexes).expect("upload");
    Engine::new(cluster, engine).expect("engine")
}

pub fn job(id: impl Into<String>, attr: &str, low: Value, high: Value, projection: &[&str], offer: OfferSetting) -> JobSpec {
    let mut j = JobSpec::new(id, Predicate::new(attr, low, high), projection.iter().map(|s| s.to_string()).collect());
    j.offer = Some(offer);
    j.collect_output = true;
    j
}

/// Brute-force selection over the whole table, sorted.
pub fn oracle(table: &Table, attr: &str, low: &Value, high: &Value, projection: &[&str]) -> Vec<Vec<Value>> {
    let key = table.column(attr).unwrap();
    let cols: Vec<_> = projection.iter().map(|p| table.column(p).unwrap()).collect();
    let mut out: Vec<Vec<Value>> = (0..table.row_count())
        .filter(|&i| {
            let v = key.value(i);
            v >= *low && v <= *high
        })
        .map(|i| cols.iter().map(|c| c.value(i)).collect())
        .collect();
    out.sort();
    out
}

pub fn sorted(mut rows: Vec<Vec<Value>>) -> Vec<Vec<Value>> {
    rows.sort();
    rows
}

// Eager-progression setup shared by the acceptance suite and the parameter
// search: 100 blocks on 12 single-slot nodes.
pub const EAGER_NODES: u16 = 12;
pub const EAGER_SLOTS: u16 = 1;
pub const EAGER_BLOCKS: usize = 100;
pub const EAGER_BLOCK_RECORDS: u64 = 2000;
pub const EAGER_PAGE: u32 = 256;
pub const EAGER_SEED: u64 = 4;
pub const EAGER_ATTR: &str = "b";
pub const EAGER_LOW: i64 = 500_000;
pub const EAGER_HIGH: i64 = 500_999;
pub const ALL_SYNTHETIC: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

pub fn eager_table() -> Table {
    gen_synthetic(EAGER_BLOCKS * EAGER_BLOCK_RECORDS as usize, EAGER_SEED).unwrap()
}

pub fn eager_engine(root: &Path, table: &Table, policy: PolicyConfig, timing: TimingConfig) -> Engine {
    eager_engine_on(root, table, EAGER_NODES, EAGER_SLOTS, policy, timing)
}

pub fn eager_engine_on(root: &Path, table: &Table, nodes: u16, slots: u16, policy: PolicyConfig, timing: TimingConfig) -> Engine {
    let config = cluster_config(root, nodes, slots, 3, EAGER_BLOCK_RECORDS, EAGER_PAGE);
    engine(config, table, &[], EngineConfig { policy, timing, ..Default::default() })
}

pub fn eager_job(k: usize, offer: OfferSetting) -> JobSpec {
    job(format!("eager{k}"), EAGER_ATTR, Value::Int(EAGER_LOW), Value::Int(EAGER_HIGH), &ALL_SYNTHETIC, offer)
}
