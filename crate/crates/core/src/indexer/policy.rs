use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub const DEFAULT_SELECTIVITY_THRESHOLD: f64 = 0.8;

/// Which side of the selectivity threshold admits a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdDirection {
    /// Admit blocks whose qualifying fraction is `>= threshold`.
    #[default]
    AtLeast,
    /// Admit blocks whose qualifying fraction is `<= threshold`.
    AtMost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OfferMode {
    /// Offer at most `ceil(rho * n_blocks)` scanned blocks per job, picked
    /// round-robin over the job's scan order.
    Rate(f64),
    Selectivity { threshold: f64, direction: ThresholdDirection },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OfferOutcome {
    Accepted,
    RejectedQuota,
    RejectedSelectivity,
    RejectedQueueFull,
}

/// `ceil(rho * n_blocks)` capped at the number of blocks actually scanned.
pub fn rate_quota(rho: f64, n_blocks: usize, n_scanned: usize) -> usize {
    let rho = rho.clamp(0.0, 1.0);
    // tolerate representation error such as 0.1 * 40 = 4.000000000000001
    let raw = (rho * n_blocks as f64 - 1e-9).ceil().max(0.0) as usize;
    raw.min(n_scanned)
}

/// Evenly spaced positions `floor(k * n / quota)` for `k < quota`; with
/// `quota = n / 10` this is every tenth scanned block.
pub fn round_robin_picks(quota: usize, n_scanned: usize) -> Vec<usize> {
    let quota = quota.min(n_scanned);
    (0..quota).map(|k| k * n_scanned / quota).collect()
}

/// Per-job offer decisions. In rate mode the admitted blocks are fixed before
/// any task starts, so a task knows up front whether its block will be
/// offered (and can widen its read set accordingly).
#[derive(Debug, Clone)]
pub struct OfferPolicy {
    mode: Option<OfferMode>,
    selected: HashSet<u64>,
    quota: usize,
}

impl OfferPolicy {
    pub fn disabled() -> Self {
        Self { mode: None, selected: HashSet::new(), quota: 0 }
    }

    /// `scan_order` lists the blocks this job will full-scan, in plan order.
    pub fn for_job(mode: OfferMode, n_dataset_blocks: usize, scan_order: &[u64]) -> Self {
        match mode {
            OfferMode::Rate(rho) => {
                let quota = rate_quota(rho, n_dataset_blocks, scan_order.len());
                let selected = round_robin_picks(quota, scan_order.len())
                    .into_iter()
                    .map(|i| scan_order[i])
                    .collect();
                Self { mode: Some(mode), selected, quota }
            }
            OfferMode::Selectivity { .. } => {
                Self { mode: Some(mode), selected: HashSet::new(), quota: scan_order.len() }
            }
        }
    }

    pub fn mode(&self) -> Option<OfferMode> {
        self.mode
    }

    pub fn quota(&self) -> usize {
        self.quota
    }

    /// Whether the block is a candidate before scanning. Selectivity mode
    /// treats every block as a candidate until its fraction is known.
    pub fn will_offer(&self, block_id: u64) -> bool {
        match self.mode {
            None => false,
            Some(OfferMode::Rate(_)) => self.selected.contains(&block_id),
            Some(OfferMode::Selectivity { .. }) => true,
        }
    }

    /// Policy verdict after the scan, ignoring queue capacity.
    pub fn admit(&self, block_id: u64, qualifying_fraction: f64) -> Result<(), OfferOutcome> {
        match self.mode {
            None => Err(OfferOutcome::RejectedQuota),
            Some(OfferMode::Rate(_)) => {
                if self.selected.contains(&block_id) {
                    Ok(())
                } else {
                    Err(OfferOutcome::RejectedQuota)
                }
            }
            Some(OfferMode::Selectivity { threshold, direction }) => {
                let pass = match direction {
                    ThresholdDirection::AtLeast => qualifying_fraction >= threshold,
                    ThresholdDirection::AtMost => qualifying_fraction <= threshold,
                };
                if pass {
                    Ok(())
                } else {
                    Err(OfferOutcome::RejectedSelectivity)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tenth_of_hundred() {
        let order: Vec<u64> = (0..100).collect();
        let p = OfferPolicy::for_job(OfferMode::Rate(0.1), 100, &order);
        let admitted: Vec<u64> = order.iter().copied().filter(|b| p.admit(*b, 0.0).is_ok()).collect();
        assert_eq!(admitted, (0..10).map(|k| k * 10).collect::<Vec<_>>());
    }

    #[test]
    fn zero_rate_admits_nothing() {
        let order: Vec<u64> = (0..100).collect();
        let p = OfferPolicy::for_job(OfferMode::Rate(0.0), 100, &order);
        assert!(order.iter().all(|b| !p.will_offer(*b)));
        assert_eq!(p.admit(3, 1.0), Err(OfferOutcome::RejectedQuota));
    }

    #[test]
    fn quota_counts_dataset_blocks_but_caps_at_scanned() {
        assert_eq!(rate_quota(0.25, 40, 30), 10);
        assert_eq!(rate_quota(0.25, 40, 7), 7);
        assert_eq!(rate_quota(0.1, 40, 40), 4);
        assert_eq!(rate_quota(0.17, 100, 90), 17);
        assert_eq!(rate_quota(1.0, 3, 3), 3);
        assert_eq!(rate_quota(0.01, 3, 3), 1);
    }

    #[test]
    fn selectivity_threshold_is_inclusive() {
        let mode = OfferMode::Selectivity { threshold: 0.8, direction: ThresholdDirection::AtLeast };
        let p = OfferPolicy::for_job(mode, 3, &[1, 2, 3]);
        assert_eq!(p.admit(1, 0.79), Err(OfferOutcome::RejectedSelectivity));
        assert_eq!(p.admit(2, 0.80), Ok(()));
        assert_eq!(p.admit(3, 0.95), Ok(()));
    }

    #[test]
    fn selectivity_at_most_direction() {
        let mode = OfferMode::Selectivity { threshold: 0.2, direction: ThresholdDirection::AtMost };
        let p = OfferPolicy::for_job(mode, 2, &[1, 2]);
        assert!(p.admit(1, 0.1).is_ok());
        assert!(p.admit(2, 0.3).is_err());
    }

    #[test]
    fn picks_are_distinct_and_in_range() {
        for n in 1..60 {
            for q in 0..=n {
                let picks = round_robin_picks(q, n);
                assert_eq!(picks.len(), q);
                assert!(picks.windows(2).all(|w| w[0] < w[1]));
                assert!(picks.iter().all(|p| *p < n));
            }
        }
    }
}
