//! Job execution: the record reader picks the replica named by the split,
//! uses its sparse index when it has one and otherwise scans the whole block,
//! then hands scanned blocks to the node's Adaptive Indexer.

use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::block_store::{exact_rows_in_slice, BlockFile, BlockReplicaInfo, DataBlock, ReplicaKind, ReplicaRegistry};
use crate::error::{Error, Result};
use crate::indexer::{AdaptiveIndexer, IndexRequest, OfferPolicy};
use crate::lazy_projection::align_columns;
use crate::value::{Column, Schema, Value};

/// Closed range selection on one attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    #[serde(rename = "attr")]
    pub attribute: String,
    pub low: Value,
    pub high: Value,
}

impl Predicate {
    pub fn new(attribute: impl Into<String>, low: Value, high: Value) -> Self {
        Self { attribute: attribute.into(), low, high }
    }

    pub fn matches(&self, v: &Value) -> bool {
        *v >= self.low && *v <= self.high
    }

    fn matches_at(&self, col: &Column, i: usize) -> bool {
        col.cmp_at(i, &self.low).is_ge() && col.cmp_at(i, &self.high).is_le()
    }
}

/// Per-job override of the engine's offer policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OfferSetting {
    Disabled,
    Rate(f64),
    Eager,
    Selectivity(f64),
}

pub type MapFn = Arc<dyn Fn(&[Value]) -> Option<Vec<Value>> + Send + Sync>;

#[derive(Clone)]
pub struct JobSpec {
    pub job_id: String,
    pub predicate: Predicate,
    /// Attributes handed to the map function, in this order.
    pub projection: Vec<String>,
    /// Defaults to emitting the projected fields unchanged.
    pub map_fn: Option<MapFn>,
    pub offer: Option<OfferSetting>,
    /// Keep emitted records in the task results (otherwise only counted).
    pub collect_output: bool,
}

impl fmt::Debug for JobSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JobSpec")
            .field("job_id", &self.job_id)
            .field("predicate", &self.predicate)
            .field("projection", &self.projection)
            .field("map_fn", &self.map_fn.as_ref().map(|_| "<fn>"))
            .field("offer", &self.offer)
            .field("collect_output", &self.collect_output)
            .finish()
    }
}

impl JobSpec {
    pub fn new(job_id: impl Into<String>, predicate: Predicate, projection: Vec<String>) -> Self {
        Self { job_id: job_id.into(), predicate, projection, map_fn: None, offer: None, collect_output: false }
    }

    /// Checks the job against `schema` and coerces predicate bounds to the
    /// attribute's type.
    pub fn validated(mut self, schema: &Schema) -> Result<Self> {
        let ty = schema.require(&self.predicate.attribute)?.ty;
        self.predicate.low = self.predicate.low.coerce(ty)?;
        self.predicate.high = self.predicate.high.coerce(ty)?;
        if self.predicate.low > self.predicate.high {
            return Err(Error::contract(format!("job {}: predicate low exceeds high", self.job_id)));
        }
        if self.projection.is_empty() {
            return Err(Error::contract(format!("job {}: empty projection", self.job_id)));
        }
        for (i, p) in self.projection.iter().enumerate() {
            schema.require(p)?;
            if self.projection[..i].contains(p) {
                return Err(Error::contract(format!("job {}: `{p}` projected twice", self.job_id)));
            }
        }
        match self.offer {
            Some(OfferSetting::Rate(r)) | Some(OfferSetting::Selectivity(r)) if !(0.0..=1.0).contains(&r) => {
                return Err(Error::contract(format!("job {}: fraction {r} outside [0, 1]", self.job_id)));
            }
            _ => {}
        }
        Ok(self)
    }

    fn emit(&self, record: Vec<Value>) -> Option<Vec<Value>> {
        match &self.map_fn {
            Some(f) => f(&record),
            None => Some(record),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanKind {
    IndexScan,
    FullScan,
}

/// How blocks that will be indexed are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// Read every attribute so the pseudo replica is complete.
    #[default]
    Invisible,
    /// Read only what the job needs and store a partial replica.
    Lazy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRef {
    pub block_id: u64,
    pub replica: BlockReplicaInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSplit {
    pub node_id: u16,
    pub blocks: Vec<BlockRef>,
    pub scan_kind: ScanKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub node_id: u16,
    pub scan_kind: Option<ScanKind>,
    pub block_ids: Vec<u64>,
    pub records_read: u64,
    pub records_emitted: u64,
    pub bytes_read: u64,
    /// Bytes fetched from another node's replica.
    pub remote_bytes_read: u64,
    /// Blocks the offer policy admitted and handed to the indexer.
    pub blocks_offered: u64,
    /// Offered blocks the indexer's build queue accepted.
    pub blocks_indexed: u64,
    /// Offered blocks turned away by a full build queue.
    pub blocks_rejected: u64,
    pub completions_requested: u64,
    pub completions_skipped: u64,
    #[serde(skip)]
    pub elapsed: Duration,
    #[serde(skip)]
    pub output: Vec<Vec<Value>>,
}

/// Everything a task needs besides its split and job.
pub struct ScanContext<'a> {
    pub registry: &'a ReplicaRegistry,
    pub schema: &'a Schema,
    pub node_root: &'a Path,
    pub indexer: Option<&'a AdaptiveIndexer>,
    pub policy: &'a OfferPolicy,
    pub projection_mode: ProjectionMode,
}

/// Attributes a full scan reads: the projection plus the predicate
/// attribute, or the whole schema when the block will be offered. Returned in
/// schema order.
pub fn invisible_projection_columns(job: &JobSpec, schema: &Schema, will_offer: bool) -> Vec<String> {
    schema
        .names()
        .filter(|n| will_offer || *n == job.predicate.attribute || job.projection.iter().any(|p| p == n))
        .map(str::to_owned)
        .collect()
}

pub fn record_reader_scan(split: &InputSplit, job: &JobSpec, ctx: &ScanContext<'_>) -> Result<TaskResult> {
    let started = Instant::now();
    let mut result = TaskResult {
        node_id: split.node_id,
        scan_kind: Some(split.scan_kind),
        block_ids: split.blocks.iter().map(|b| b.block_id).collect(),
        ..Default::default()
    };
    match split.scan_kind {
        ScanKind::IndexScan => {
            for b in &split.blocks {
                index_scan_block(b, job, ctx, &mut result)?;
            }
        }
        ScanKind::FullScan => {
            let [b] = split.blocks.as_slice() else {
                return Err(Error::contract("a full-scan split holds exactly one block"));
            };
            full_scan_block(b, job, ctx, &mut result)?;
        }
    }
    result.elapsed = started.elapsed();
    Ok(result)
}

fn check_local(b: &BlockRef, node_id: u16) -> Result<()> {
    if b.replica.node_id != node_id {
        return Err(Error::contract(format!("block {} replica is not on node {node_id}", b.block_id)));
    }
    Ok(())
}

fn open(path: &Path) -> Result<BlockFile> {
    BlockFile::open(path).map_err(|e| Error::Task(format!("cannot open {}: {e}", path.display())))
}

fn index_scan_block(b: &BlockRef, job: &JobSpec, ctx: &ScanContext<'_>, result: &mut TaskResult) -> Result<()> {
    check_local(b, result.node_id)?;
    let pred = &job.predicate;
    let mut file = open(&b.replica.path)?;
    let index = file
        .header()
        .index
        .clone()
        .filter(|i| i.attribute == pred.attribute)
        .ok_or_else(|| Error::Task(format!("replica of block {} has no index on `{}`", b.block_id, pred.attribute)))?;
    let candidate = index.candidate_rows(&pred.low, &pred.high);
    let key = file.read_column(&pred.attribute, Some(candidate.clone()))?;
    let exact = exact_rows_in_slice(&key, &pred.low, &pred.high);
    let rows = candidate.start + exact.start as u64..candidate.start + exact.end as u64;
    let n = (rows.end - rows.start) as usize;

    let mut columns: Vec<Option<Column>> = vec![None; job.projection.len()];
    let mut missing = Vec::new();
    for (slot, attr) in columns.iter_mut().zip(&job.projection) {
        if *attr == pred.attribute {
            *slot = Some(key.slice(exact.clone()));
        } else if file.header().column(attr).is_some() {
            if n > 0 {
                *slot = Some(file.read_column(attr, Some(rows.clone()))?);
            }
        } else {
            missing.push(attr.as_str());
        }
    }
    if !missing.is_empty() {
        let aligned = load_missing(b, &mut file, &missing, ctx, result)?;
        for (slot, attr) in columns.iter_mut().zip(&job.projection) {
            if let Some(c) = aligned.column(attr) {
                *slot = Some(c.slice(rows.start as usize..rows.end as usize));
            }
        }
    }
    result.bytes_read += file.bytes_read();
    result.records_read += n as u64;
    for i in 0..n {
        let record = columns.iter().map(|c| c.as_ref().expect("column loaded").value(i)).collect();
        emit(job, record, result);
    }
    Ok(())
}

/// Serves attributes a partial replica lacks: loads them in original order
/// from a normal replica, aligns them through the stored permutation vector
/// and, when the normal replica is local, asks the indexer to append them.
fn load_missing(
    b: &BlockRef,
    partial: &mut BlockFile,
    missing: &[&str],
    ctx: &ScanContext<'_>,
    result: &mut TaskResult,
) -> Result<DataBlock> {
    if b.replica.kind != ReplicaKind::PartialPseudo {
        return Err(Error::Task(format!("replica of block {} lacks projected attributes", b.block_id)));
    }
    let perm = partial
        .read_permutation()?
        .ok_or_else(|| Error::format(format!("partial replica of block {} has no permutation vector", b.block_id)))?;
    let local = ctx.registry.normal_replica_on(b.block_id, result.node_id);
    let source = match &local {
        Some(n) => n.clone(),
        None => ctx
            .registry
            .lookup(b.block_id)
            .into_iter()
            .find(|r| r.kind == ReplicaKind::Normal)
            .ok_or_else(|| Error::Task(format!("block {} has no normal replica", b.block_id)))?,
    };
    let mut normal = open(&source.path)?;
    let old_order = normal.read(missing, None)?;
    if local.is_some() {
        result.bytes_read += normal.bytes_read();
    } else {
        result.remote_bytes_read += normal.bytes_read();
    }
    let aligned = align_columns(&old_order, &perm)?;
    match (local.is_some(), ctx.indexer) {
        (true, Some(indexer)) => {
            let request = IndexRequest::Complete {
                block_id: b.block_id,
                attribute: b.replica.indexed_attribute.clone().unwrap_or_default(),
                perm,
                columns: old_order,
            };
            if indexer.try_offer(request) {
                result.completions_requested += 1;
            } else {
                result.completions_skipped += 1;
            }
        }
        _ => result.completions_skipped += 1,
    }
    Ok(aligned)
}

fn full_scan_block(b: &BlockRef, job: &JobSpec, ctx: &ScanContext<'_>, result: &mut TaskResult) -> Result<()> {
    check_local(b, result.node_id)?;
    let pred = &job.predicate;
    let will_offer = ctx.indexer.is_some() && ctx.policy.will_offer(b.block_id);
    let widen = will_offer && ctx.projection_mode == ProjectionMode::Invisible;
    let read_set = invisible_projection_columns(job, ctx.schema, widen);
    let read_set: Vec<&str> = read_set.iter().map(String::as_str).collect();
    let mut file = open(&b.replica.path)?;
    let block = file.read(&read_set, None)?;
    result.bytes_read += file.bytes_read();
    let n = block.record_count() as usize;
    result.records_read += n as u64;

    let key = block.column(&pred.attribute).expect("predicate attribute read");
    let projected: Vec<&Column> =
        job.projection.iter().map(|p| block.column(p).expect("projection read")).collect();
    let mut qualifying = 0u64;
    for i in 0..n {
        if pred.matches_at(key, i) {
            qualifying += 1;
            emit(job, projected.iter().map(|c| c.value(i)).collect(), result);
        }
    }

    // The map function is done with the block; ownership moves to the indexer.
    if will_offer {
        let fraction = if n == 0 { 0.0 } else { qualifying as f64 / n as f64 };
        if ctx.policy.admit(b.block_id, fraction).is_ok() {
            result.blocks_offered += 1;
            let checksum = block.checksum();
            let request = IndexRequest::Build { block, attribute: pred.attribute.clone(), checksum };
            let indexer = ctx.indexer.expect("will_offer implies an indexer");
            if indexer.try_offer(request) {
                result.blocks_indexed += 1;
            } else {
                result.blocks_rejected += 1;
            }
        }
    }
    Ok(())
}

fn emit(job: &JobSpec, record: Vec<Value>, result: &mut TaskResult) {
    if let Some(out) = job.emit(record) {
        result.records_emitted += 1;
        if job.collect_output {
            result.output.push(out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block_store::{normal_replica_path, write_block, DatasetMeta};
    use crate::indexer::{build_index, write_pseudo_replica, IndexerConfig, OfferMode};
    use crate::lazy_projection::write_partial;
    use crate::value::{AttrType, Attribute};

    fn schema() -> Schema {
        Schema::new(["a", "b", "c", "d"].iter().map(|n| Attribute::new(*n, AttrType::Int64)).collect()).unwrap()
    }

    fn block() -> DataBlock {
        let n = 4096i64;
        DataBlock::new(
            42,
            schema(),
            vec![
                Column::Int64((0..n).collect()),
                Column::Int64((0..n).map(|i| i * 2).collect()),
                Column::Int64((0..n).map(|i| -i).collect()),
                Column::Int64((0..n).map(|i| (i * 7919) % n).collect()),
            ],
        )
        .unwrap()
    }

    struct Fixture {
        dir: tempfile::TempDir,
        reg: ReplicaRegistry,
        normal: BlockReplicaInfo,
    }

    fn fixture() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let reg = ReplicaRegistry::in_memory();
        reg.init_dataset(DatasetMeta { schema: schema(), replication: 1, block_ids: vec![42] }).unwrap();
        let path = normal_replica_path(dir.path(), 42);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        write_block(&block(), &path).unwrap();
        let normal = BlockReplicaInfo::normal(0, path, &schema(), None);
        reg.register_index(42, normal.clone()).unwrap();
        Fixture { dir, reg, normal }
    }

    fn job(low: i64, high: i64, projection: &[&str]) -> JobSpec {
        let mut j = JobSpec::new(
            "j",
            Predicate::new("d", Value::Int(low), Value::Int(high)),
            projection.iter().map(|s| s.to_string()).collect(),
        );
        j.collect_output = true;
        j
    }

    fn ctx<'a>(f: &'a Fixture, schema: &'a Schema, policy: &'a OfferPolicy, ix: Option<&'a AdaptiveIndexer>) -> ScanContext<'a> {
        ScanContext {
            registry: &f.reg,
            schema,
            node_root: f.dir.path(),
            indexer: ix,
            policy,
            projection_mode: ProjectionMode::Invisible,
        }
    }

    fn sorted(mut rows: Vec<Vec<Value>>) -> Vec<Vec<Value>> {
        rows.sort();
        rows
    }

    #[test]
    fn index_scan_reads_only_the_qualifying_range() {
        let f = fixture();
        let (idx, _, _) = build_index(&block(), "d", 1024).unwrap();
        write_pseudo_replica(&idx, 0, f.dir.path(), &f.reg).unwrap();
        let pseudo = f.reg.find_index(42, "d").unwrap();
        let s = schema();
        let p = OfferPolicy::disabled();
        let j = job(1024, 2047, &["a", "b", "c", "d"]);
        let split = InputSplit {
            node_id: 0,
            blocks: vec![BlockRef { block_id: 42, replica: pseudo }],
            scan_kind: ScanKind::IndexScan,
        };
        let r = record_reader_scan(&split, &j, &ctx(&f, &s, &p, None)).unwrap();
        assert_eq!(r.records_read, 1024);
        assert_eq!(r.records_emitted, 1024);
        assert_eq!(r.blocks_offered, 0);

        let full = InputSplit {
            node_id: 0,
            blocks: vec![BlockRef { block_id: 42, replica: f.normal.clone() }],
            scan_kind: ScanKind::FullScan,
        };
        let rf = record_reader_scan(&full, &j, &ctx(&f, &s, &p, None)).unwrap();
        assert_eq!(sorted(r.output), sorted(rf.output));
        assert!(r.bytes_read < rf.bytes_read);
    }

    #[test]
    fn empty_result_block_is_still_offered() {
        let f = fixture();
        let s = schema();
        let ix = AdaptiveIndexer::start(0, f.dir.path().to_owned(), Arc::new(ReplicaRegistry::in_memory()), IndexerConfig::default());
        let p = OfferPolicy::for_job(OfferMode::Rate(1.0), 1, &[42]);
        let split = InputSplit {
            node_id: 0,
            blocks: vec![BlockRef { block_id: 42, replica: f.normal.clone() }],
            scan_kind: ScanKind::FullScan,
        };
        let r = record_reader_scan(&split, &job(-10, -1, &["b"]), &ctx(&f, &s, &p, Some(&ix))).unwrap();
        assert_eq!(r.records_emitted, 0);
        assert_eq!(r.records_read, 4096);
        assert_eq!(r.blocks_offered, 1);
        assert_eq!(r.blocks_indexed + r.blocks_rejected, 1);
    }

    #[test]
    fn invisible_projection_sets() {
        let s = schema();
        let j = job(0, 1, &["b"]);
        assert_eq!(invisible_projection_columns(&j, &s, true), ["a", "b", "c", "d"]);
        assert_eq!(invisible_projection_columns(&j, &s, false), ["b", "d"]);
        let all = job(0, 1, &["a", "b", "c", "d"]);
        assert_eq!(invisible_projection_columns(&all, &s, true), invisible_projection_columns(&all, &s, false));
    }

    #[test]
    fn offered_block_is_read_whole_but_map_sees_projection() {
        let f = fixture();
        let s = schema();
        let p = OfferPolicy::for_job(OfferMode::Rate(1.0), 1, &[42]);
        let split = InputSplit {
            node_id: 0,
            blocks: vec![BlockRef { block_id: 42, replica: f.normal.clone() }],
            scan_kind: ScanKind::FullScan,
        };
        let reg = Arc::new(ReplicaRegistry::in_memory());
        let ix = AdaptiveIndexer::start(0, f.dir.path().to_owned(), reg, IndexerConfig::default());
        let j = job(0, 9, &["b"]);
        let offered = record_reader_scan(&split, &j, &ctx(&f, &s, &p, Some(&ix))).unwrap();
        let plain = record_reader_scan(&split, &j, &ctx(&f, &s, &OfferPolicy::disabled(), None)).unwrap();
        assert!(offered.bytes_read > plain.bytes_read);
        assert_eq!(offered.output, plain.output);
        assert!(offered.output.iter().all(|r| r.len() == 1));
    }

    #[test]
    fn partial_replica_serves_missing_attributes_through_perm() {
        let f = fixture();
        let s = schema();
        write_partial(&block().project(&["b", "d"]).unwrap(), "d", 512, 0, f.dir.path(), &f.reg).unwrap();
        let partial = f.reg.find_index(42, "d").unwrap();
        assert_eq!(partial.kind, ReplicaKind::PartialPseudo);
        let j = job(100, 300, &["c", "b"]);
        let p = OfferPolicy::disabled();
        let split = InputSplit {
            node_id: 0,
            blocks: vec![BlockRef { block_id: 42, replica: partial }],
            scan_kind: ScanKind::IndexScan,
        };
        let r = record_reader_scan(&split, &j, &ctx(&f, &s, &p, None)).unwrap();
        assert_eq!(r.completions_skipped, 1);
        let full = InputSplit {
            node_id: 0,
            blocks: vec![BlockRef { block_id: 42, replica: f.normal.clone() }],
            scan_kind: ScanKind::FullScan,
        };
        let rf = record_reader_scan(&full, &j, &ctx(&f, &s, &p, None)).unwrap();
        assert_eq!(sorted(r.output), sorted(rf.output));
    }

    #[test]
    fn job_validation() {
        let s = schema();
        assert!(job(3, 2, &["a"]).validated(&s).is_err());
        assert!(job(1, 2, &["zz"]).validated(&s).is_err());
        assert!(job(1, 2, &["a", "a"]).validated(&s).is_err());
        let mut j = job(1, 2, &["a"]);
        j.predicate.low = Value::Float(1.0);
        assert_eq!(j.validated(&s).unwrap().predicate.low, Value::Int(1));
    }

    #[test]
    fn missing_replica_file_fails_the_task() {
        let f = fixture();
        std::fs::remove_file(&f.normal.path).unwrap();
        let s = schema();
        let p = OfferPolicy::disabled();
        let split = InputSplit {
            node_id: 0,
            blocks: vec![BlockRef { block_id: 42, replica: f.normal.clone() }],
            scan_kind: ScanKind::FullScan,
        };
        assert!(matches!(record_reader_scan(&split, &job(0, 1, &["a"]), &ctx(&f, &s, &p, None)), Err(Error::Task(_))));
    }
}
