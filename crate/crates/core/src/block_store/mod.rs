//! Block storage: the PAX block type, its binary file layout, sparse
//! clustered indexes, per-node storage paths and the replica registry.

mod block;
mod format;
mod registry;
mod sparse_index;

use std::path::{Path, PathBuf};

pub use block::DataBlock;
pub use format::{
    encode_block, read_block, read_block_full, write_block, BlockFile, BlockHeader, ColumnMeta, FORMAT_VERSION,
    MAGIC,
};
pub use registry::{BlockReplicaInfo, DatasetMeta, ReplicaKind, ReplicaRegistry};
pub(crate) use registry::find_index_in;
pub use sparse_index::{exact_rows, IndexEntry, SparseClusteredIndex, DEFAULT_PAGE_SIZE_RECORDS};
pub(crate) use sparse_index::exact_rows_in_slice;

/// Storage root of one node: `<root>/node_<k>`.
pub fn node_root(cluster_root: &Path, node_id: u16) -> PathBuf {
    cluster_root.join(format!("node_{node_id}"))
}

/// Normal replica file of a block on a node.
pub fn normal_replica_path(node_root: &Path, block_id: u64) -> PathBuf {
    node_root.join("blocks").join(format!("blk_{block_id}"))
}

/// Directory holding every pseudo replica of one block on a node.
pub fn pseudo_block_dir(node_root: &Path, block_id: u64) -> PathBuf {
    node_root.join("pseudo").join(format!("blk_{block_id}"))
}

/// Pseudo replica file for `(block_id, attribute)`: `pseudo/blk_<id>/<attr>`.
pub fn pseudo_replica_path(node_root: &Path, block_id: u64, attribute: &str) -> PathBuf {
    pseudo_block_dir(node_root, block_id).join(attribute)
}
