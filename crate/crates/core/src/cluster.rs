//! Simulated cluster: nodes are directories under one storage root, each with
//! its own map slots and Adaptive Indexer.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::block_store::{
    node_root, normal_replica_path, write_block, BlockReplicaInfo, DatasetMeta, ReplicaKind, ReplicaRegistry,
    DEFAULT_PAGE_SIZE_RECORDS,
};
use crate::dataset::Table;
use crate::error::{Error, Result};
use crate::indexer::{build_index, AdaptiveIndexer, IndexerConfig};

pub const DEFAULT_BLOCK_RECORDS: u64 = 262_144;
pub const REGISTRY_JOURNAL: &str = "registry.journal";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    #[serde(rename = "nodes")]
    pub node_count: u16,
    pub slots_per_node: u16,
    #[serde(rename = "replication")]
    pub replication_factor: u8,
    /// Records per block.
    pub block_records: u64,
    /// When set, overrides `block_records` with `block_bytes / row width`.
    pub block_bytes: Option<u64>,
    pub page_size_records: u32,
    pub storage_root: PathBuf,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            node_count: 4,
            slots_per_node: 2,
            replication_factor: 3,
            block_records: DEFAULT_BLOCK_RECORDS,
            block_bytes: None,
            page_size_records: DEFAULT_PAGE_SIZE_RECORDS,
            storage_root: PathBuf::from("cluster"),
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.node_count == 0 {
            return bad("a cluster needs at least one node");
        }
        if self.slots_per_node == 0 {
            return bad("slots_per_node must be at least 1");
        }
        if self.replication_factor == 0 {
            return bad("replication must be at least 1");
        }
        if u16::from(self.replication_factor) > self.node_count {
            return Err(Error::Config(format!(
                "replication {} needs at least that many nodes, have {}",
                self.replication_factor, self.node_count
            )));
        }
        if self.block_records == 0 || self.block_bytes == Some(0) {
            return bad("block budget must be positive");
        }
        if self.page_size_records == 0 {
            return bad("page_size_records must be positive");
        }
        Ok(())
    }

    pub fn n_slots(&self) -> usize {
        self.node_count as usize * self.slots_per_node as usize
    }

    pub fn records_per_block(&self, row_width: usize) -> u64 {
        match self.block_bytes {
            Some(b) => (b / row_width.max(1) as u64).max(1),
            None => self.block_records,
        }
    }
}

/// One node's view, derived from the registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeState {
    pub node_id: u16,
    pub normal_replica_ids: BTreeSet<u64>,
    pub pseudo_replica_count: BTreeMap<String, usize>,
    pub busy_slots: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadSummary {
    pub blocks: usize,
    pub records: u64,
    pub normal_replicas: usize,
    pub bytes_written: u64,
}

pub struct Cluster {
    config: ClusterConfig,
    registry: Arc<ReplicaRegistry>,
    indexers: Vec<AdaptiveIndexer>,
}

impl Cluster {
    /// Opens (or creates) the cluster at `config.storage_root`, replaying the
    /// registry journal if one exists.
    pub fn open(config: ClusterConfig, indexer: IndexerConfig) -> Result<Self> {
        config.validate()?;
        let root = &config.storage_root;
        std::fs::create_dir_all(root)?;
        for k in 0..config.node_count {
            std::fs::create_dir_all(node_root(root, k))?;
        }
        let registry = Arc::new(ReplicaRegistry::open(&root.join(REGISTRY_JOURNAL))?);
        let indexer = IndexerConfig { page_size_records: config.page_size_records, ..indexer };
        let indexers = (0..config.node_count)
            .map(|k| AdaptiveIndexer::start(k, node_root(root, k), registry.clone(), indexer))
            .collect();
        Ok(Self { config, registry, indexers })
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn root(&self) -> &Path {
        &self.config.storage_root
    }

    pub fn node_root(&self, node_id: u16) -> PathBuf {
        node_root(&self.config.storage_root, node_id)
    }

    pub fn registry(&self) -> &Arc<ReplicaRegistry> {
        &self.registry
    }

    pub fn indexer(&self, node_id: u16) -> &AdaptiveIndexer {
        &self.indexers[node_id as usize]
    }

    pub fn indexers(&self) -> &[AdaptiveIndexer] {
        &self.indexers
    }

    pub fn n_slots(&self) -> usize {
        self.config.n_slots()
    }

    /// Waits until every node's indexer has written all accepted blocks.
    pub fn drain_indexers(&self) {
        for i in &self.indexers {
            i.wait_idle();
        }
    }

    /// Splits `table` into blocks and stores `r` normal replicas of each on
    /// distinct nodes: replica `k` of block `b` goes to node `(b + k) % n`
    /// and is sorted and indexed on `index_attributes[k]` when given.
    pub fn upload_dataset(&self, table: &Table, index_attributes: &[&str]) -> Result<UploadSummary> {
        let r = self.config.replication_factor as usize;
        if index_attributes.len() > r {
            return Err(Error::Config(format!(
                "{} upload indexes requested but replication is {r}",
                index_attributes.len()
            )));
        }
        for a in index_attributes {
            table.schema().require(a)?;
        }
        if self.registry.dataset().is_some() {
            return Err(Error::Registry("cluster already holds a dataset".into()));
        }
        let per_block = self.config.records_per_block(table.schema().row_width()) as usize;
        let rows = table.row_count();
        let n_blocks = rows.div_ceil(per_block);
        self.registry.init_dataset(DatasetMeta {
            schema: table.schema().clone(),
            replication: self.config.replication_factor,
            block_ids: (0..n_blocks as u64).collect(),
        })?;
        let n = self.config.node_count as usize;
        let mut summary = UploadSummary { blocks: n_blocks, records: rows as u64, normal_replicas: 0, bytes_written: 0 };
        for b in 0..n_blocks {
            let block = table.block(b as u64, b * per_block..((b + 1) * per_block).min(rows))?;
            for k in 0..r {
                let node = ((b + k) % n) as u16;
                let path = normal_replica_path(&self.node_root(node), b as u64);
                std::fs::create_dir_all(path.parent().expect("replica path has a parent"))?;
                let attr = index_attributes.get(k).copied();
                let stored = match attr {
                    Some(a) => build_index(&block, a, self.config.page_size_records)?.0,
                    None => block.clone(),
                };
                summary.bytes_written += write_block(&stored, &path)?;
                let info = BlockReplicaInfo::normal(node, path, table.schema(), attr.map(str::to_owned));
                self.registry.register_index(b as u64, info)?;
                summary.normal_replicas += 1;
            }
        }
        Ok(summary)
    }

    pub fn node_states(&self) -> Vec<NodeState> {
        let mut states: Vec<NodeState> = (0..self.config.node_count)
            .map(|k| NodeState {
                node_id: k,
                normal_replica_ids: BTreeSet::new(),
                pseudo_replica_count: BTreeMap::new(),
                busy_slots: 0,
            })
            .collect();
        for (block_id, list) in self.registry.snapshot() {
            for info in list {
                let Some(s) = states.get_mut(info.node_id as usize) else { continue };
                match info.kind {
                    ReplicaKind::Normal => {
                        s.normal_replica_ids.insert(block_id);
                    }
                    _ => {
                        let attr = info.indexed_attribute.clone().unwrap_or_default();
                        *s.pseudo_replica_count.entry(attr).or_default() += 1;
                    }
                }
            }
        }
        states
    }

    /// Runs one wave: every task on its own worker, all concurrently. A
    /// panicking task becomes a task failure.
    pub fn run_wave<T, R, F>(&self, tasks: &[T], work: F) -> Vec<Result<R>>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> Result<R> + Sync,
    {
        run_wave(tasks, work)
    }

    /// Runs `tasks` in consecutive waves of at most `n_slots` tasks, with a
    /// barrier between waves. Results are grouped per wave.
    pub fn run_waves<T, R, F>(&self, tasks: &[T], work: F) -> Vec<Vec<Result<R>>>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> Result<R> + Sync,
    {
        tasks.chunks(self.n_slots()).map(|wave| run_wave(wave, &work)).collect()
    }
}

pub fn wave_count(tasks: usize, n_slots: usize) -> usize {
    tasks.div_ceil(n_slots.max(1))
}

fn run_wave<T, R, F>(tasks: &[T], work: F) -> Vec<Result<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    let work = &work;
    std::thread::scope(|s| {
        let handles: Vec<_> = tasks
            .iter()
            .map(|t| s.spawn(move || catch_unwind(AssertUnwindSafe(|| work(t)))))
            .collect();
        handles
            .into_iter()
            .map(|h| match h.join() {
                Ok(Ok(r)) => r,
                Ok(Err(p)) | Err(p) => Err(Error::Task(panic_message(&p))),
            })
            .collect()
    })
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        format!("task panicked: {s}")
    } else if let Some(s) = p.downcast_ref::<String>() {
        format!("task panicked: {s}")
    } else {
        "task panicked".to_owned()
    }
}
