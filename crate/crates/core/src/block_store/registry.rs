//! Replica registry: which node holds which copy of each block, and which of
//! those copies carry a clustered index.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::Schema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicaKind {
    Normal,
    Pseudo,
    PartialPseudo,
}

impl ReplicaKind {
    pub fn is_pseudo(self) -> bool {
        !matches!(self, ReplicaKind::Normal)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockReplicaInfo {
    pub node_id: u16,
    pub kind: ReplicaKind,
    pub indexed_attribute: Option<String>,
    pub available_attributes: BTreeSet<String>,
    pub path: PathBuf,
    pub has_permutation_vector: bool,
}

impl BlockReplicaInfo {
    pub fn normal(node_id: u16, path: PathBuf, schema: &Schema, indexed_attribute: Option<String>) -> Self {
        Self {
            node_id,
            kind: ReplicaKind::Normal,
            indexed_attribute,
            available_attributes: schema.names().map(str::to_owned).collect(),
            path,
            has_permutation_vector: false,
        }
    }

    pub fn pseudo(node_id: u16, path: PathBuf, schema: &Schema, attribute: &str) -> Self {
        Self {
            node_id,
            kind: ReplicaKind::Pseudo,
            indexed_attribute: Some(attribute.to_owned()),
            available_attributes: schema.names().map(str::to_owned).collect(),
            path,
            has_permutation_vector: false,
        }
    }

    pub fn partial(
        node_id: u16,
        path: PathBuf,
        attribute: &str,
        available: impl IntoIterator<Item = String>,
    ) -> Self {
        Self {
            node_id,
            kind: ReplicaKind::PartialPseudo,
            indexed_attribute: Some(attribute.to_owned()),
            available_attributes: available.into_iter().collect(),
            path,
            has_permutation_vector: true,
        }
    }

    /// Checks the per-kind invariants against the dataset schema.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        let full: BTreeSet<String> = schema.names().map(str::to_owned).collect();
        if let Some(a) = &self.indexed_attribute {
            schema.require(a)?;
        }
        let ok = match self.kind {
            ReplicaKind::Normal => self.available_attributes == full && !self.has_permutation_vector,
            ReplicaKind::Pseudo => {
                self.indexed_attribute.is_some() && self.available_attributes == full && !self.has_permutation_vector
            }
            ReplicaKind::PartialPseudo => {
                self.indexed_attribute
                    .as_ref()
                    .is_some_and(|a| self.available_attributes.contains(a))
                    && self.available_attributes.is_subset(&full)
                    && self.has_permutation_vector
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Registry(format!("replica info violates {:?} invariants: {self:?}", self.kind)))
        }
    }

    fn same_index_slot(&self, other: &BlockReplicaInfo) -> bool {
        self.kind.is_pseudo() && other.kind.is_pseudo() && self.indexed_attribute == other.indexed_attribute
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema: Schema,
    pub replication: u8,
    pub block_ids: Vec<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum JournalEvent {
    Dataset { meta: DatasetMeta },
    Register { block_id: u64, info: BlockReplicaInfo },
    Update { block_id: u64, info: BlockReplicaInfo },
}

#[derive(Debug, Default)]
struct Inner {
    meta: Option<DatasetMeta>,
    replicas: BTreeMap<u64, Vec<BlockReplicaInfo>>,
}

impl Inner {
    fn apply(&mut self, event: JournalEvent) -> Result<bool> {
        match event {
            JournalEvent::Dataset { meta } => {
                if self.meta.is_some() {
                    return Err(Error::Registry("dataset already initialised".into()));
                }
                for id in &meta.block_ids {
                    self.replicas.entry(*id).or_default();
                }
                self.meta = Some(meta);
                Ok(true)
            }
            JournalEvent::Register { block_id, info } => {
                let meta = self.meta.as_ref().ok_or_else(|| Error::Registry("no dataset registered".into()))?;
                info.validate(&meta.schema)?;
                let r = meta.replication as usize;
                let list = self
                    .replicas
                    .get_mut(&block_id)
                    .ok_or_else(|| Error::Registry(format!("unknown block {block_id}")))?;
                if list.iter().any(|e| *e == info || e.same_index_slot(&info)) {
                    return Ok(false);
                }
                if info.kind == ReplicaKind::Normal {
                    let normals = list.iter().filter(|e| e.kind == ReplicaKind::Normal).count();
                    if normals >= r {
                        return Err(Error::Registry(format!(
                            "block {block_id} already has {r} normal replicas"
                        )));
                    }
                    if list.iter().any(|e| e.kind == ReplicaKind::Normal && e.node_id == info.node_id) {
                        return Err(Error::Registry(format!(
                            "block {block_id} already has a normal replica on node {}",
                            info.node_id
                        )));
                    }
                }
                list.push(info);
                Ok(true)
            }
            JournalEvent::Update { block_id, info } => {
                let meta = self.meta.as_ref().ok_or_else(|| Error::Registry("no dataset registered".into()))?;
                info.validate(&meta.schema)?;
                let list = self
                    .replicas
                    .get_mut(&block_id)
                    .ok_or_else(|| Error::Registry(format!("unknown block {block_id}")))?;
                let slot = list
                    .iter_mut()
                    .find(|e| e.same_index_slot(&info) && e.node_id == info.node_id)
                    .ok_or_else(|| Error::Registry(format!("no pseudo replica to update for block {block_id}")))?;
                let changed = *slot != info;
                *slot = info;
                Ok(changed)
            }
        }
    }
}

/// Shared, linearizable registry (block id to replica list) with an optional
/// append-only journal so a cluster can be reopened.
#[derive(Debug)]
pub struct ReplicaRegistry {
    inner: RwLock<Inner>,
    journal: Option<Mutex<File>>,
    journal_path: Option<PathBuf>,
}

impl ReplicaRegistry {
    pub fn in_memory() -> Self {
        Self { inner: RwLock::new(Inner::default()), journal: None, journal_path: None }
    }

    /// Opens (or creates) the journal at `path`, replaying existing events.
    pub fn open(path: &Path) -> Result<Self> {
        let mut inner = Inner::default();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let event: JournalEvent = serde_json::from_str(&line)
                    .map_err(|e| Error::Registry(format!("journal line {}: {e}", n + 1)))?;
                inner.apply(event)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            inner: RwLock::new(inner),
            journal: Some(Mutex::new(file)),
            journal_path: Some(path.to_owned()),
        })
    }

    pub fn journal_path(&self) -> Option<&Path> {
        self.journal_path.as_deref()
    }

    fn commit(&self, event: JournalEvent) -> Result<bool> {
        // The journal append happens under the write lock so the on-disk
        // order matches the in-memory order.
        let mut inner = self.inner.write().expect("registry lock poisoned");
        let line = serde_json::to_string(&event)?;
        let changed = inner.apply(event)?;
        if changed {
            if let Some(j) = &self.journal {
                let mut f = j.lock().expect("journal lock poisoned");
                writeln!(f, "{line}")?;
                f.flush()?;
            }
        }
        Ok(changed)
    }

    pub fn init_dataset(&self, meta: DatasetMeta) -> Result<()> {
        self.commit(JournalEvent::Dataset { meta }).map(|_| ())
    }

    pub fn dataset(&self) -> Option<DatasetMeta> {
        self.inner.read().expect("registry lock poisoned").meta.clone()
    }

    pub fn schema(&self) -> Result<Schema> {
        self.dataset()
            .map(|m| m.schema)
            .ok_or_else(|| Error::Registry("no dataset registered".into()))
    }

    /// Registers a replica. Returns `false` when an equal replica, or a
    /// pseudo replica for the same indexed attribute, is already present.
    pub fn register_index(&self, block_id: u64, info: BlockReplicaInfo) -> Result<bool> {
        self.commit(JournalEvent::Register { block_id, info })
    }

    /// Replaces the pseudo replica occupying `info`'s (node, attribute) slot.
    pub fn update_index(&self, block_id: u64, info: BlockReplicaInfo) -> Result<bool> {
        self.commit(JournalEvent::Update { block_id, info })
    }

    pub fn lookup(&self, block_id: u64) -> Vec<BlockReplicaInfo> {
        let inner = self.inner.read().expect("registry lock poisoned");
        inner.replicas.get(&block_id).cloned().unwrap_or_default()
    }

    /// A replica indexed on `attribute`, preferring normal over pseudo over
    /// partial pseudo replicas (then lowest node id).
    pub fn find_index(&self, block_id: u64, attribute: &str) -> Option<BlockReplicaInfo> {
        let inner = self.inner.read().expect("registry lock poisoned");
        find_index_in(inner.replicas.get(&block_id)?, attribute).cloned()
    }

    pub fn normal_replica_on(&self, block_id: u64, node_id: u16) -> Option<BlockReplicaInfo> {
        self.lookup(block_id)
            .into_iter()
            .find(|r| r.kind == ReplicaKind::Normal && r.node_id == node_id)
    }

    pub fn block_ids(&self) -> Vec<u64> {
        let inner = self.inner.read().expect("registry lock poisoned");
        inner.replicas.keys().copied().collect()
    }

    /// Consistent copy of the whole map.
    pub fn snapshot(&self) -> BTreeMap<u64, Vec<BlockReplicaInfo>> {
        self.inner.read().expect("registry lock poisoned").replicas.clone()
    }

    /// Number of blocks with any index on `attribute`.
    pub fn indexed_block_count(&self, attribute: &str) -> usize {
        let inner = self.inner.read().expect("registry lock poisoned");
        inner
            .replicas
            .values()
            .filter(|list| find_index_in(list, attribute).is_some())
            .count()
    }
}

pub(crate) fn find_index_in<'a>(list: &'a [BlockReplicaInfo], attribute: &str) -> Option<&'a BlockReplicaInfo> {
    list.iter()
        .filter(|r| r.indexed_attribute.as_deref() == Some(attribute))
        .min_by_key(|r| (r.kind, r.node_id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::{AttrType, Attribute};

    fn schema() -> Schema {
        Schema::new(
            ["a", "b", "c", "d", "e"]
                .iter()
                .map(|n| Attribute::new(*n, AttrType::Int64))
                .collect(),
        )
        .unwrap()
    }

    fn registry() -> ReplicaRegistry {
        let reg = ReplicaRegistry::in_memory();
        reg.init_dataset(DatasetMeta { schema: schema(), replication: 3, block_ids: vec![41, 42] })
            .unwrap();
        reg
    }

    fn pseudo(node: u16, attr: &str) -> BlockReplicaInfo {
        BlockReplicaInfo::pseudo(node, format!("node_{node}/pseudo/blk_42/{attr}").into(), &schema(), attr)
    }

    #[test]
    fn register_then_lookup() {
        let reg = registry();
        assert!(reg.register_index(42, pseudo(1, "d")).unwrap());
        assert_eq!(reg.lookup(42), vec![pseudo(1, "d")]);
    }

    #[test]
    fn duplicate_registration_is_noop() {
        let reg = registry();
        assert!(reg.register_index(42, pseudo(1, "d")).unwrap());
        assert!(!reg.register_index(42, pseudo(1, "d")).unwrap());
        assert!(!reg.register_index(42, pseudo(2, "d")).unwrap());
        assert_eq!(reg.lookup(42).len(), 1);
    }

    #[test]
    fn find_index_only_matches_attribute() {
        let reg = registry();
        reg.register_index(42, pseudo(1, "d")).unwrap();
        assert!(reg.find_index(42, "e").is_none());
        assert_eq!(reg.find_index(42, "d").unwrap().kind, ReplicaKind::Pseudo);
    }

    #[test]
    fn normal_preferred_over_pseudo() {
        let reg = registry();
        reg.register_index(42, pseudo(0, "d")).unwrap();
        let normal = BlockReplicaInfo::normal(2, "n".into(), &schema(), Some("d".into()));
        reg.register_index(42, normal.clone()).unwrap();
        assert_eq!(reg.find_index(42, "d").unwrap(), normal);
    }

    #[test]
    fn pseudo_preferred_over_partial() {
        let reg = registry();
        let partial = BlockReplicaInfo::partial(0, "p".into(), "d", ["d".to_string(), "b".to_string()]);
        reg.register_index(41, partial).unwrap();
        assert_eq!(reg.find_index(41, "d").unwrap().kind, ReplicaKind::PartialPseudo);
        // a second pseudo slot for d on the same block is refused
        assert!(!reg.register_index(41, pseudo(1, "d")).unwrap());
    }

    #[test]
    fn unknown_block_is_error() {
        let reg = registry();
        assert!(matches!(reg.register_index(7, pseudo(1, "d")), Err(Error::Registry(_))));
    }

    #[test]
    fn normal_replica_limit() {
        let reg = registry();
        for n in 0..3 {
            reg.register_index(41, BlockReplicaInfo::normal(n, "x".into(), &schema(), None)).unwrap();
        }
        let extra = BlockReplicaInfo::normal(3, "x".into(), &schema(), None);
        assert!(reg.register_index(41, extra).is_err());
    }

    #[test]
    fn kind_invariants_enforced() {
        let reg = registry();
        let mut bad = pseudo(1, "d");
        bad.available_attributes.remove("a");
        assert!(reg.register_index(42, bad).is_err());
        let bad_partial = BlockReplicaInfo::partial(0, "p".into(), "d", ["b".to_string()]);
        assert!(reg.register_index(42, bad_partial).is_err());
    }

    #[test]
    fn journal_replays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.journal");
        {
            let reg = ReplicaRegistry::open(&path).unwrap();
            reg.init_dataset(DatasetMeta { schema: schema(), replication: 3, block_ids: vec![42] })
                .unwrap();
            reg.register_index(42, pseudo(1, "d")).unwrap();
            reg.register_index(42, pseudo(1, "d")).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        let reg = ReplicaRegistry::open(&path).unwrap();
        assert_eq!(reg.lookup(42), vec![pseudo(1, "d")]);
        assert_eq!(reg.dataset().unwrap().block_ids, vec![42]);
    }

    #[test]
    fn update_upgrades_partial() {
        let reg = registry();
        let partial = BlockReplicaInfo::partial(0, "p".into(), "d", ["d".to_string()]);
        reg.register_index(42, partial).unwrap();
        let full = BlockReplicaInfo::pseudo(0, "p".into(), &schema(), "d");
        assert!(reg.update_index(42, full.clone()).unwrap());
        assert_eq!(reg.lookup(42), vec![full]);
    }
}
