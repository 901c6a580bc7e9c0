//! Eager adaptive indexing: a job-runtime cost model, its calibration, and
//! the offer rate that spends the runtime saved by earlier indexes on
//! building new ones.
//!
//! All durations are simulated seconds. A task costs
//! `task_overhead + per_block * blocks + per_byte * bytes_read`; a wave costs
//! its slowest task plus `idx_overhead_per_wave * enqueued / n_slots` for the
//! blocks it hands to the indexers.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indexer::{ThresholdDirection, DEFAULT_SELECTIVITY_THRESHOLD};

pub const DEFAULT_INITIAL_RHO: f64 = 0.1;

/// Inputs of the runtime model for one job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModelParams {
    pub n_slots: u32,
    pub n_blocks: u32,
    pub n_idx_blocks: u32,
    /// Runtime of one full-scan wave.
    pub t_fsw: f64,
    /// Extra runtime of a wave in which every slot offers its block.
    pub t_idx_overhead: f64,
    /// Runtime of the index-scan phase.
    pub t_is: f64,
    pub t_target: f64,
}

impl CostModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_slots == 0 {
            return Err(Error::Config("n_slots must be at least 1".into()));
        }
        if self.n_idx_blocks > self.n_blocks {
            return Err(Error::Config("more indexed blocks than blocks".into()));
        }
        for (name, v) in [("t_fsw", self.t_fsw), ("t_idx_overhead", self.t_idx_overhead), ("t_is", self.t_is)] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be a non-negative duration")));
            }
        }
        Ok(())
    }

    fn waves_all_blocks(&self) -> f64 {
        self.n_blocks.div_ceil(self.n_slots) as f64
    }
}

/// Full-scan waves left: `ceil((n_blocks - n_idx_blocks) / n_slots)`.
pub fn n_fsw(p: &CostModelParams) -> u32 {
    (p.n_blocks - p.n_idx_blocks.min(p.n_blocks)).div_ceil(p.n_slots.max(1))
}

/// Indexing overhead of a job offering at rate `rho`.
pub fn predict_idx_overhead(p: &CostModelParams, rho: f64) -> f64 {
    p.t_idx_overhead * (rho * p.waves_all_blocks()).min(n_fsw(p) as f64)
}

/// `T_is + t_fsw * n_fsw + t_idx_overhead * min(rho * ceil(n_blocks / n_slots), n_fsw)`,
/// evaluated in real arithmetic and rounded to whole nanoseconds.
pub fn predict_t_job(p: &CostModelParams, rho: f64) -> f64 {
    let t = p.t_is + p.t_fsw * n_fsw(p) as f64 + predict_idx_overhead(p, rho);
    round_ns(t)
}

pub fn round_ns(seconds: f64) -> f64 {
    (seconds * 1e9).round() / 1e9
}

/// Offer rate that makes the predicted runtime meet `t_target`, clamped to
/// `[0, 1]`. With free indexing any positive budget buys a full rate.
pub fn compute_rho(p: &CostModelParams) -> f64 {
    let budget = p.t_target - p.t_is - p.t_fsw * n_fsw(p) as f64;
    if p.t_idx_overhead <= 0.0 {
        return if budget > 0.0 { 1.0 } else { 0.0 };
    }
    let rho = budget / (p.t_idx_overhead * p.waves_all_blocks());
    if rho.is_nan() {
        0.0
    } else {
        rho.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    Off,
    #[default]
    Constant,
    Eager,
    Selectivity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub mode: PolicyMode,
    /// Offer rate in constant mode, and the eager mode's first-job rate when
    /// `initial_rho` is unset.
    pub rho: f64,
    pub initial_rho: Option<f64>,
    pub target_seconds: Option<f64>,
    /// Calibration overrides.
    pub t_fsw: Option<f64>,
    pub t_idx_overhead: Option<f64>,
    pub selectivity_threshold: f64,
    pub selectivity_direction: ThresholdDirection,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            mode: PolicyMode::Constant,
            rho: DEFAULT_INITIAL_RHO,
            initial_rho: None,
            target_seconds: None,
            t_fsw: None,
            t_idx_overhead: None,
            selectivity_threshold: DEFAULT_SELECTIVITY_THRESHOLD,
            selectivity_direction: ThresholdDirection::AtLeast,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.rho) || !self.initial_rho.map_or(true, in_unit) || !in_unit(self.selectivity_threshold) {
            return Err(Error::Config("rates and thresholds must lie in [0, 1]".into()));
        }
        for v in [self.target_seconds, self.t_fsw, self.t_idx_overhead].into_iter().flatten() {
            if !(v >= 0.0) {
                return Err(Error::Config("durations must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn initial_rho(&self) -> f64 {
        self.initial_rho.unwrap_or(self.rho)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingConfig {
    pub task_overhead: f64,
    pub per_block: f64,
    pub per_byte: f64,
    pub idx_overhead_per_wave: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        // roughly: 1 s task start-up, 100 MB/s scans, indexing a full wave
        // costs about as much as scanning it
        Self { task_overhead: 1.0, per_block: 0.05, per_byte: 1e-8, idx_overhead_per_wave: 2.0 }
    }
}

impl TimingConfig {
    pub fn task_cost(&self, blocks: usize, bytes_read: u64) -> f64 {
        self.task_overhead + self.per_block * blocks as f64 + self.per_byte * bytes_read as f64
    }

    pub fn wave_overhead(&self, enqueued: u64, n_slots: usize) -> f64 {
        self.idx_overhead_per_wave * enqueued as f64 / n_slots.max(1) as f64
    }
}

/// Measured (or user-given) model constants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub t_fsw: Option<f64>,
    pub t_idx_overhead: Option<f64>,
}

/// Per-dataset policy state kept between jobs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub calibration: Calibration,
    pub t_target: Option<f64>,
}

impl PolicyState {
    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read(path) {
            Ok(bytes) => Ok(serde_json::from_slice(&bytes)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    /// User overrides win over measured values.
    pub fn effective(&self, config: &PolicyConfig) -> Calibration {
        Calibration {
            t_fsw: config.t_fsw.or(self.calibration.t_fsw),
            t_idx_overhead: config.t_idx_overhead.or(self.calibration.t_idx_overhead),
        }
    }

    /// Fills calibration gaps from a job's measurements.
    pub fn absorb(&mut self, measured_t_fsw: Option<f64>, measured_t_idx: Option<f64>) {
        if self.calibration.t_fsw.is_none() {
            self.calibration.t_fsw = measured_t_fsw;
        }
        if self.calibration.t_idx_overhead.is_none() {
            self.calibration.t_idx_overhead = measured_t_idx;
        }
    }
}

/// The eager rate for a job, or `None` when the model cannot be evaluated
/// yet (no calibration or no target runtime), in which case the caller falls
/// back to its initial constant rate.
pub fn eager_rho(
    state: &PolicyState,
    config: &PolicyConfig,
    n_slots: u32,
    n_blocks: u32,
    n_idx_blocks: u32,
    t_is: f64,
) -> Option<(f64, CostModelParams)> {
    let cal = state.effective(config);
    let t_target = config.target_seconds.or(state.t_target)?;
    let params = CostModelParams {
        n_slots,
        n_blocks,
        n_idx_blocks,
        t_fsw: cal.t_fsw?,
        t_idx_overhead: cal.t_idx_overhead?,
        t_is,
        t_target,
    };
    Some((compute_rho(&params), params))
}
