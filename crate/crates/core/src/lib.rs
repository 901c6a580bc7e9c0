//! Adaptive, incremental block-level clustered indexing for a simulated
//! MapReduce-style cluster. Map-only selection jobs build per-block sorted
//! replicas as a side effect of scanning, and later jobs use them.

pub mod adaptive_policy;
pub mod block_store;
pub mod cluster;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod exec;
pub mod indexer;
pub mod jobs;
pub mod lazy_projection;
pub mod report;
pub mod scheduler;
pub mod value;

pub use adaptive_policy::{CostModelParams, PolicyConfig, PolicyMode, TimingConfig};
pub use block_store::{BlockReplicaInfo, DataBlock, ReplicaKind, ReplicaRegistry, SparseClusteredIndex};
pub use cluster::{Cluster, ClusterConfig};
pub use config::{Config, EngineConfig};
pub use dataset::Table;
pub use engine::{Engine, JobOutcome, JobReport};
pub use error::{Error, Result};
pub use exec::{JobSpec, OfferSetting, Predicate, ProjectionMode, ScanKind};
pub use indexer::{build_index, IndexerConfig, PermutationVector};
pub use scheduler::{Plan, SchedulerConfig, TaskAssignment};
pub use value::{AttrType, Attribute, Column, Schema, Value};
