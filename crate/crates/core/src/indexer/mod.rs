//! Adaptive indexing: offer policy, permutation vectors, the per-node
//! indexer threads and pseudo replica persistence.

mod permutation;
mod policy;
mod worker;
mod writer;

pub use permutation::{build_index, PermutationVector};
pub use policy::{
    rate_quota, round_robin_picks, OfferMode, OfferOutcome, OfferPolicy, ThresholdDirection,
    DEFAULT_SELECTIVITY_THRESHOLD,
};
pub use worker::{AdaptiveIndexer, IndexRequest, IndexerConfig, IndexerStats, DEFAULT_QUEUE_CAPACITY};
pub use writer::{replace_pseudo_replica, write_pseudo_replica, WriteOutcome};
