//! Job planning: indexed blocks are grouped per node into multi-block index
//! scans; each unindexed block becomes a full scan on the candidate node that
//! currently holds the fewest indexes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::block_store::{find_index_in, BlockReplicaInfo, ReplicaKind};
use crate::error::{Error, Result};
use crate::exec::{BlockRef, InputSplit, ScanKind};

pub const DEFAULT_MAX_BLOCKS_PER_SPLIT: usize = 16;

/// What "existing indexes on a node" counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexCountMode {
    /// Pseudo replicas on the predicate attribute.
    #[default]
    PerAttribute,
    /// Pseudo replicas on any attribute.
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub max_blocks_per_split: usize,
    pub count_mode: IndexCountMode,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self { max_blocks_per_split: DEFAULT_MAX_BLOCKS_PER_SPLIT, count_mode: IndexCountMode::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAssignment {
    pub split: InputSplit,
    pub node_id: u16,
}

impl TaskAssignment {
    pub fn kind(&self) -> ScanKind {
        self.split.scan_kind
    }
}

/// Index scans first (by node, then block), then full scans in ascending
/// block order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub assignments: Vec<TaskAssignment>,
}

impl Plan {
    pub fn index_tasks(&self) -> impl Iterator<Item = &TaskAssignment> {
        self.assignments.iter().filter(|a| a.kind() == ScanKind::IndexScan)
    }

    pub fn full_tasks(&self) -> impl Iterator<Item = &TaskAssignment> {
        self.assignments.iter().filter(|a| a.kind() == ScanKind::FullScan)
    }

    /// One line per block: `block=<id> node=<k> kind=<index|full>`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for a in &self.assignments {
            let kind = match a.kind() {
                ScanKind::IndexScan => "index",
                ScanKind::FullScan => "full",
            };
            for b in &a.split.blocks {
                let _ = writeln!(out, "block={} node={} kind={kind}", b.block_id, a.node_id);
            }
        }
        out
    }
}

/// Pseudo-replica count per node as the scheduler sees it before planning.
pub fn index_counts(
    replicas: &BTreeMap<u64, Vec<BlockReplicaInfo>>,
    attribute: &str,
    mode: IndexCountMode,
) -> BTreeMap<u16, usize> {
    let mut counts = BTreeMap::new();
    for info in replicas.values().flatten() {
        if !info.kind.is_pseudo() {
            continue;
        }
        if mode == IndexCountMode::Total || info.indexed_attribute.as_deref() == Some(attribute) {
            *counts.entry(info.node_id).or_insert(0) += 1;
        }
    }
    counts
}

/// Plans a job on `attribute` over `replicas` (a registry snapshot).
pub fn plan_job(
    attribute: &str,
    replicas: &BTreeMap<u64, Vec<BlockReplicaInfo>>,
    config: &SchedulerConfig,
) -> Result<Plan> {
    if config.max_blocks_per_split == 0 {
        return Err(Error::Config("max_blocks_per_split must be positive".into()));
    }
    let mut indexed: BTreeMap<u16, Vec<BlockRef>> = BTreeMap::new();
    let mut unindexed = Vec::new();
    for (&block_id, list) in replicas {
        match find_index_in(list, attribute) {
            Some(info) => {
                indexed.entry(info.node_id).or_default().push(BlockRef { block_id, replica: info.clone() })
            }
            None => unindexed.push((block_id, list)),
        }
    }

    let mut assignments = Vec::new();
    for (node_id, blocks) in indexed {
        for chunk in blocks.chunks(config.max_blocks_per_split) {
            assignments.push(TaskAssignment {
                split: InputSplit { node_id, blocks: chunk.to_vec(), scan_kind: ScanKind::IndexScan },
                node_id,
            });
        }
    }

    let mut counts = index_counts(replicas, attribute, config.count_mode);
    for (block_id, list) in unindexed {
        let chosen = list
            .iter()
            .filter(|r| r.kind == ReplicaKind::Normal)
            .min_by_key(|r| (counts.get(&r.node_id).copied().unwrap_or(0), r.node_id))
            .ok_or_else(|| Error::Planning(format!("block {block_id} has no normal replica")))?;
        *counts.entry(chosen.node_id).or_insert(0) += 1;
        assignments.push(TaskAssignment {
            split: InputSplit {
                node_id: chosen.node_id,
                blocks: vec![BlockRef { block_id, replica: chosen.clone() }],
                scan_kind: ScanKind::FullScan,
            },
            node_id: chosen.node_id,
        });
    }
    Ok(Plan { assignments })
}
