//! Index Writer persistence: pseudo replicas are written to a temporary file
//! next to their final path and published with a no-clobber link, so the
//! first writer for a `(block, attribute)` wins and later writers back off.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::block_store::{
    encode_block, pseudo_block_dir, pseudo_replica_path, BlockReplicaInfo, DataBlock, ReplicaRegistry,
};
use crate::error::{Error, Result};
use crate::value::Schema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WriteOutcome {
    Won,
    Lost,
}

/// Creates `pseudo/blk_<id>/.<attr>.tmp.<nonce>` in the block's pseudo dir.
pub(crate) fn temp_replica_file(node_root: &Path, block_id: u64, attribute: &str) -> Result<NamedTempFile> {
    let dir = pseudo_block_dir(node_root, block_id);
    fs::create_dir_all(&dir)?;
    Ok(tempfile::Builder::new()
        .prefix(&format!(".{attribute}.tmp."))
        .rand_bytes(12)
        .tempfile_in(&dir)?)
}

fn encode_into(block: &DataBlock, file: &mut File) -> Result<()> {
    let bytes = encode_block(block)?;
    file.write_all(&bytes)?;
    file.sync_data()?;
    Ok(())
}

/// Registry entry describing `block` once stored at `path` on `node_id`.
pub(crate) fn replica_info(block: &DataBlock, node_id: u16, path: PathBuf, schema: &Schema) -> Result<BlockReplicaInfo> {
    let attribute = block
        .index
        .as_ref()
        .map(|i| i.attribute.clone())
        .ok_or_else(|| Error::contract(format!("block {} is not indexed", block.block_id)))?;
    if block.permutation.is_some() {
        Ok(BlockReplicaInfo::partial(node_id, path, &attribute, block.schema().names().map(str::to_owned)))
    } else {
        if block.schema().len() != schema.len() {
            return Err(Error::contract(format!(
                "block {} lacks attributes but carries no permutation vector",
                block.block_id
            )));
        }
        Ok(BlockReplicaInfo::pseudo(node_id, path, schema, &attribute))
    }
}

/// Persists a sorted, indexed block as the pseudo replica of
/// `(block_id, index attribute)` on `node_id` and registers it.
///
/// Blocks carrying a permutation vector are registered as partial pseudo
/// replicas. Losing the race is not an error.
pub fn write_pseudo_replica(
    block: &DataBlock,
    node_id: u16,
    node_root: &Path,
    registry: &ReplicaRegistry,
) -> Result<WriteOutcome> {
    write_pseudo_replica_with(block, node_id, node_root, registry, encode_into)
}

pub(crate) fn write_pseudo_replica_with(
    block: &DataBlock,
    node_id: u16,
    node_root: &Path,
    registry: &ReplicaRegistry,
    encode: impl FnOnce(&DataBlock, &mut File) -> Result<()>,
) -> Result<WriteOutcome> {
    let schema = registry.schema()?;
    let attribute = block
        .index
        .as_ref()
        .map(|i| i.attribute.clone())
        .ok_or_else(|| Error::contract(format!("block {} is not indexed", block.block_id)))?;
    let target = pseudo_replica_path(node_root, block.block_id, &attribute);
    let info = replica_info(block, node_id, target.clone(), &schema)?;

    // Dropping the temp file on any early return removes it.
    let mut tmp = temp_replica_file(node_root, block.block_id, &attribute)?;
    encode(block, tmp.as_file_mut())?;
    match tmp.persist_noclobber(&target) {
        Ok(_) => {}
        Err(e) if e.error.kind() == io::ErrorKind::AlreadyExists => return Ok(WriteOutcome::Lost),
        Err(e) => return Err(Error::Io(e.error)),
    }
    match registry.register_index(block.block_id, info) {
        Ok(true) => Ok(WriteOutcome::Won),
        Ok(false) => {
            // Another node registered first; our copy is redundant.
            fs::remove_file(&target)?;
            Ok(WriteOutcome::Lost)
        }
        Err(e) => {
            let _ = fs::remove_file(&target);
            Err(e)
        }
    }
}

/// Rewrites an existing pseudo replica in place (temp file, then rename) and
/// updates its registry entry.
pub fn replace_pseudo_replica(
    block: &DataBlock,
    node_id: u16,
    node_root: &Path,
    registry: &ReplicaRegistry,
) -> Result<BlockReplicaInfo> {
    let schema = registry.schema()?;
    let attribute = block
        .index
        .as_ref()
        .map(|i| i.attribute.clone())
        .ok_or_else(|| Error::contract(format!("block {} is not indexed", block.block_id)))?;
    let target = pseudo_replica_path(node_root, block.block_id, &attribute);
    let info = replica_info(block, node_id, target.clone(), &schema)?;
    let mut tmp = temp_replica_file(node_root, block.block_id, &attribute)?;
    encode_into(block, tmp.as_file_mut())?;
    tmp.persist(&target).map_err(|e| Error::Io(e.error))?;
    registry.update_index(block.block_id, info.clone())?;
    Ok(info)
}
