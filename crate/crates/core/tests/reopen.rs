mod common;

use adaptidx_core::adaptive_policy::{PolicyConfig, PolicyMode};
use adaptidx_core::dataset::gen_synthetic;
use adaptidx_core::exec::OfferSetting;
use adaptidx_core::{Cluster, Engine, EngineConfig, Value};

use common::*;

#[test]
fn reopened_cluster_keeps_indexes_and_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let table = gen_synthetic(12_000, 5).unwrap();
    let config = cluster_config(dir.path(), 3, 1, 2, 1000, 64);
    let eager = EngineConfig { policy: PolicyConfig { mode: PolicyMode::Eager, ..Default::default() }, ..Default::default() };
    let q = |id: &str| {
        let mut j = job(id, "c", Value::Int(0), Value::Int(60_000), &["a", "c"], OfferSetting::Eager);
        j.offer = None;
        j
    };
    let expected = oracle(&table, "c", &Value::Int(0), &Value::Int(60_000), &["a", "c"]);

    let (indexed, state) = {
        let mut e = engine(config.clone(), &table, &[], eager);
        let out = e.run_job(q("first")).unwrap();
        assert_eq!(sorted(out.output), expected);
        assert_eq!(out.report.mode, "eager-fallback");
        (e.indexed_blocks("c"), e.policy_state().clone())
    };
    assert!(indexed > 0);

    let cluster = Cluster::open(config, roomy_indexer()).unwrap();
    let mut e = Engine::new(cluster, eager).unwrap();
    assert_eq!(e.indexed_blocks("c"), indexed);
    assert_eq!(e.policy_state(), &state);
    let out = e.run_job(q("second")).unwrap();
    assert_eq!(out.report.mode, "eager");
    assert_eq!(out.report.blocks_indexed_before, indexed);
    assert!(out.report.index_splits > 0);
    assert_eq!(sorted(out.output), expected);
}

#[test]
fn upload_indexes_serve_index_scans_immediately() {
    let dir = tempfile::tempdir().unwrap();
    let table = gen_synthetic(8_000, 6).unwrap();
    let mut e = engine(cluster_config(dir.path(), 4, 1, 2, 1000, 64), &table, &["d"], EngineConfig::default());
    let out = e.run_job(job("d", "d", Value::Int(10), Value::Int(90_000), &["b", "d"], OfferSetting::Disabled)).unwrap();
    assert_eq!(out.report.full_splits, 0);
    assert_eq!(out.report.indexed_fraction, 1.0);
    assert_eq!(sorted(out.output), oracle(&table, "d", &Value::Int(10), &Value::Int(90_000), &["b", "d"]));
}
