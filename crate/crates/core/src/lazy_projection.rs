//! Lazy projection: pseudo replicas that hold only the attributes jobs have
//! actually read, plus the permutation vector needed to align further
//! attributes later. Once every attribute is present the vector is dropped
//! and the replica becomes an ordinary pseudo replica.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::block_store::{
    pseudo_replica_path, read_block_full, BlockFile, BlockReplicaInfo, DataBlock, ReplicaRegistry,
};
use crate::error::{Error, Result};
use crate::indexer::{build_index, replace_pseudo_replica, write_pseudo_replica, PermutationVector, WriteOutcome};
use crate::value::Schema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionOutcome {
    /// New attributes were appended; `complete` tells whether the replica now
    /// holds the full schema.
    Appended { complete: bool },
    NothingMissing,
    /// No normal replica on the replica's node to load missing columns from.
    SkippedNoLocalNormal,
}

/// Sorts the attributes present in `block` on `attribute`. Columns come out
/// in schema order; the permutation vector is kept unless the block already
/// carries the whole schema.
pub fn build_partial(block: &DataBlock, attribute: &str, schema: &Schema, page_size_records: u32) -> Result<DataBlock> {
    let (sorted, perm, _) = build_index(block, attribute, page_size_records)?;
    let mut out = sorted.reorder_like(schema)?;
    if out.schema().len() < schema.len() {
        out.permutation = Some(perm);
    }
    Ok(out)
}

/// Builds and stores a partial pseudo replica for `block` on `node_id`.
pub fn write_partial(
    block: &DataBlock,
    attribute: &str,
    page_size_records: u32,
    node_id: u16,
    node_root: &Path,
    registry: &ReplicaRegistry,
) -> Result<WriteOutcome> {
    let schema = registry.schema()?;
    let partial = build_partial(block, attribute, &schema, page_size_records)?;
    write_pseudo_replica(&partial, node_id, node_root, registry)
}

/// Reorders old-order columns into the replica's order.
pub fn align_columns(columns: &DataBlock, perm: &PermutationVector) -> Result<DataBlock> {
    let aligned = columns.columns().iter().map(|c| perm.apply(c)).collect::<Result<Vec<_>>>()?;
    DataBlock::with_record_count(columns.block_id, columns.schema().clone(), aligned, columns.record_count())
}

/// Adds every aligned column the partial replica lacks. Returns `None` when
/// nothing was missing. Once the schema is covered the permutation vector
/// is removed.
pub fn append_aligned(partial: &DataBlock, aligned: &DataBlock, schema: &Schema) -> Result<Option<DataBlock>> {
    if aligned.record_count() != partial.record_count() {
        return Err(Error::contract("aligned columns differ in length from the replica"));
    }
    let mut out = partial.clone();
    let mut changed = false;
    for (attr, col) in aligned.schema().attributes().iter().zip(aligned.columns()) {
        if !out.has_attribute(&attr.name) {
            out.push_column(attr.clone(), col.clone())?;
            changed = true;
        }
    }
    if !changed {
        return Ok(None);
    }
    let mut out = out.reorder_like(schema)?;
    if out.schema().len() == schema.len() {
        out.permutation = None;
    }
    Ok(Some(out))
}

/// Writer-side completion: appends already aligned columns to the stored
/// partial replica of `(block_id, attribute)` on this node.
pub fn apply_completion(
    block_id: u64,
    attribute: &str,
    aligned: &DataBlock,
    node_id: u16,
    node_root: &Path,
    registry: &ReplicaRegistry,
) -> Result<CompletionOutcome> {
    let schema = registry.schema()?;
    let path = pseudo_replica_path(node_root, block_id, attribute);
    let stored = read_block_full(&path)?;
    match append_aligned(&stored, aligned, &schema)? {
        None => Ok(CompletionOutcome::NothingMissing),
        Some(updated) => {
            let info = replace_pseudo_replica(&updated, node_id, node_root, registry)?;
            Ok(CompletionOutcome::Appended { complete: !info.has_permutation_vector })
        }
    }
}

/// Loads `attributes` missing from a partial replica out of the node's normal
/// replica, aligns them through the stored permutation vector and appends
/// them.
pub fn complete_partial(
    block_id: u64,
    partial: &BlockReplicaInfo,
    normal: Option<&BlockReplicaInfo>,
    attributes: &[&str],
    node_root: &Path,
    registry: &ReplicaRegistry,
) -> Result<CompletionOutcome> {
    let attribute = partial
        .indexed_attribute
        .as_deref()
        .ok_or_else(|| Error::contract("partial replica has no index attribute"))?;
    let missing: Vec<&str> = attributes
        .iter()
        .copied()
        .filter(|a| !partial.available_attributes.contains(*a))
        .collect();
    if missing.is_empty() || !partial.has_permutation_vector {
        return Ok(CompletionOutcome::NothingMissing);
    }
    let Some(normal) = normal.filter(|n| n.node_id == partial.node_id) else {
        return Ok(CompletionOutcome::SkippedNoLocalNormal);
    };
    let perm = BlockFile::open(&partial.path)?
        .read_permutation()?
        .ok_or_else(|| Error::format("partial replica has no permutation vector"))?;
    let old_order = BlockFile::open(&normal.path)?.read(&missing, None)?;
    let aligned = align_columns(&old_order, &perm)?;
    apply_completion(block_id, attribute, &aligned, partial.node_id, node_root, registry)
}
