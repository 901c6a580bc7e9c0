//! Per-node Adaptive Indexer: map tasks hand blocks to a bounded build queue
//! (never blocking), one builder thread sorts and indexes them, and one
//! writer thread persists the results.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;

use crossbeam_channel::{bounded, Receiver, Sender, TrySendError};
use log::debug;
use serde::{Deserialize, Serialize};

use crate::block_store::{DataBlock, ReplicaRegistry, DEFAULT_PAGE_SIZE_RECORDS};
use crate::error::{Error, Result};
use crate::indexer::{write_pseudo_replica, PermutationVector, WriteOutcome};
use crate::lazy_projection::{align_columns, apply_completion, build_partial, CompletionOutcome};

pub const DEFAULT_QUEUE_CAPACITY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexerConfig {
    pub build_queue_capacity: usize,
    pub write_queue_capacity: usize,
    pub page_size_records: u32,
}

impl Default for IndexerConfig {
    fn default() -> Self {
        Self {
            build_queue_capacity: DEFAULT_QUEUE_CAPACITY,
            write_queue_capacity: DEFAULT_QUEUE_CAPACITY,
            page_size_records: DEFAULT_PAGE_SIZE_RECORDS,
        }
    }
}

/// Work handed from a map task to the indexer.
#[derive(Debug)]
pub enum IndexRequest {
    /// Sort `block` on `attribute`. `checksum` is taken by the producer after
    /// the map function has consumed the block.
    Build { block: DataBlock, attribute: String, checksum: u64 },
    /// Align `columns` (old order) through `perm` and append them to the
    /// partial replica of `(block_id, attribute)`.
    Complete { block_id: u64, attribute: String, perm: PermutationVector, columns: DataBlock },
}

enum WriteTask {
    Create(DataBlock),
    Append { block_id: u64, attribute: String, aligned: DataBlock },
}

#[derive(Debug, Default)]
struct Counters {
    accepted: AtomicU64,
    rejected_full: AtomicU64,
    built: AtomicU64,
    won: AtomicU64,
    lost: AtomicU64,
    failed: AtomicU64,
    appended: AtomicU64,
    torn: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexerStats {
    pub accepted: u64,
    pub rejected_queue_full: u64,
    pub built: u64,
    pub written: u64,
    pub lost_races: u64,
    pub failed: u64,
    pub completions: u64,
    /// Blocks whose content changed between hand-off and build.
    pub torn_handoffs: u64,
}

/// In-flight request count; `wait_idle` blocks until it drops to zero.
#[derive(Debug, Default)]
struct Pending {
    count: Mutex<usize>,
    idle: Condvar,
}

impl Pending {
    fn add(&self) {
        *self.count.lock().unwrap() += 1;
    }

    fn done(&self) {
        let mut c = self.count.lock().unwrap();
        *c -= 1;
        if *c == 0 {
            self.idle.notify_all();
        }
    }

    fn wait(&self) {
        let mut c = self.count.lock().unwrap();
        while *c > 0 {
            c = self.idle.wait(c).unwrap();
        }
    }
}

struct Shared {
    node_id: u16,
    node_root: PathBuf,
    registry: Arc<ReplicaRegistry>,
    config: IndexerConfig,
    counters: Counters,
    pending: Pending,
}

pub struct AdaptiveIndexer {
    shared: Arc<Shared>,
    sender: Option<Sender<IndexRequest>>,
    threads: Vec<JoinHandle<()>>,
}

impl AdaptiveIndexer {
    pub fn start(node_id: u16, node_root: PathBuf, registry: Arc<ReplicaRegistry>, config: IndexerConfig) -> Self {
        let shared = Arc::new(Shared {
            node_id,
            node_root,
            registry,
            config,
            counters: Counters::default(),
            pending: Pending::default(),
        });
        let (build_tx, build_rx) = bounded(config.build_queue_capacity);
        let (write_tx, write_rx) = bounded(config.write_queue_capacity.max(1));
        let builder = {
            let shared = shared.clone();
            std::thread::Builder::new()
                .name(format!("index-builder-{node_id}"))
                .spawn(move || run_builder(&shared, build_rx, write_tx))
                .expect("spawn index builder")
        };
        let writer = {
            let shared = shared.clone();
            std::thread::Builder::new()
                .name(format!("index-writer-{node_id}"))
                .spawn(move || run_writer(&shared, write_rx))
                .expect("spawn index writer")
        };
        Self { shared, sender: Some(build_tx), threads: vec![builder, writer] }
    }

    pub fn node_id(&self) -> u16 {
        self.shared.node_id
    }

    pub fn config(&self) -> IndexerConfig {
        self.shared.config
    }

    /// Non-blocking hand-off. Returns `false` when the build queue is full.
    pub fn try_offer(&self, request: IndexRequest) -> bool {
        let sender = self.sender.as_ref().expect("indexer running");
        self.shared.pending.add();
        match sender.try_send(request) {
            Ok(()) => {
                self.shared.counters.accepted.fetch_add(1, Ordering::Relaxed);
                true
            }
            Err(TrySendError::Full(_)) | Err(TrySendError::Disconnected(_)) => {
                self.shared.pending.done();
                self.shared.counters.rejected_full.fetch_add(1, Ordering::Relaxed);
                false
            }
        }
    }

    /// Blocks until every accepted request has been built and written.
    pub fn wait_idle(&self) {
        self.shared.pending.wait();
    }

    pub fn stats(&self) -> IndexerStats {
        let c = &self.shared.counters;
        IndexerStats {
            accepted: c.accepted.load(Ordering::Relaxed),
            rejected_queue_full: c.rejected_full.load(Ordering::Relaxed),
            built: c.built.load(Ordering::Relaxed),
            written: c.won.load(Ordering::Relaxed),
            lost_races: c.lost.load(Ordering::Relaxed),
            failed: c.failed.load(Ordering::Relaxed),
            completions: c.appended.load(Ordering::Relaxed),
            torn_handoffs: c.torn.load(Ordering::Relaxed),
        }
    }
}

impl Drop for AdaptiveIndexer {
    fn drop(&mut self) {
        self.sender.take();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

fn run_builder(shared: &Shared, rx: Receiver<IndexRequest>, tx: Sender<WriteTask>) {
    // The dataset may be uploaded after the indexer starts.
    let mut schema = None;
    for request in rx.iter() {
        let task = match request {
            IndexRequest::Build { block, attribute, checksum } => {
                // A block that changed after the offer is never indexed.
                if block.checksum() != checksum {
                    shared.counters.torn.fetch_add(1, Ordering::Relaxed);
                    shared.pending.done();
                    continue;
                }
                if schema.is_none() {
                    schema = shared.registry.schema().ok();
                }
                match &schema {
                    Some(s) => build_partial(&block, &attribute, s, shared.config.page_size_records).map(WriteTask::Create),
                    None => Err(Error::Config("no dataset registered".into())),
                }
            }
            IndexRequest::Complete { block_id, attribute, perm, columns } => {
                align_columns(&columns, &perm).map(|aligned| WriteTask::Append { block_id, attribute, aligned })
            }
        };
        match task {
            Ok(task) => {
                shared.counters.built.fetch_add(1, Ordering::Relaxed);
                // Builder to writer hand-off blocks: the builder is not a map
                // task, so waiting here never slows a job down.
                if tx.send(task).is_err() {
                    shared.pending.done();
                }
            }
            Err(e) => {
                debug!("index build failed on node {}: {e}", shared.node_id);
                shared.counters.failed.fetch_add(1, Ordering::Relaxed);
                shared.pending.done();
            }
        }
    }
}

fn run_writer(shared: &Shared, rx: Receiver<WriteTask>) {
    for task in rx.iter() {
        let result: Result<()> = match task {
            WriteTask::Create(block) => {
                write_pseudo_replica(&block, shared.node_id, &shared.node_root, &shared.registry).map(|o| {
                    let c = match o {
                        WriteOutcome::Won => &shared.counters.won,
                        WriteOutcome::Lost => &shared.counters.lost,
                    };
                    c.fetch_add(1, Ordering::Relaxed);
                })
            }
            WriteTask::Append { block_id, attribute, aligned } => apply_completion(
                block_id,
                &attribute,
                &aligned,
                shared.node_id,
                &shared.node_root,
                &shared.registry,
            )
            .map(|o| {
                if matches!(o, CompletionOutcome::Appended { .. }) {
                    shared.counters.appended.fetch_add(1, Ordering::Relaxed);
                }
            }),
        };
        if let Err(e) = result {
            // Indexing is best effort; a failure never reaches the job.
            debug!("index write failed on node {}: {e}", shared.node_id);
            shared.counters.failed.fetch_add(1, Ordering::Relaxed);
        }
        shared.pending.done();
    }
}
