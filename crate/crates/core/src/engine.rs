//! Job coordinator: plans a job, runs its index-scan waves, picks the offer
//! rate, runs the full-scan waves and reports simulated and predicted
//! runtimes.

use std::path::PathBuf;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::adaptive_policy::{
    eager_rho, predict_t_job, round_ns, CostModelParams, PolicyMode, PolicyState,
};
use crate::block_store::find_index_in;
use crate::cluster::Cluster;
use crate::config::EngineConfig;
use crate::error::Result;
use crate::exec::{record_reader_scan, JobSpec, OfferSetting, ScanContext, TaskResult};
use crate::indexer::{OfferMode, OfferPolicy};
use crate::scheduler::{plan_job, Plan, TaskAssignment};
use crate::value::{Schema, Value};

pub const CALIBRATION_FILE: &str = "calibration.json";

/// One row of the workload report. Field order is the CSV column order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JobReport {
    pub job_id: String,
    pub attribute: String,
    /// `off`, `constant`, `eager`, `eager-fallback` or `selectivity`.
    pub mode: String,
    pub rho: Option<f64>,
    pub index_splits: usize,
    pub full_splits: usize,
    pub index_waves: usize,
    pub full_waves: usize,
    pub blocks_total: usize,
    pub blocks_indexed_before: usize,
    pub blocks_indexed: usize,
    pub indexed_fraction: f64,
    pub blocks_offered: u64,
    pub blocks_enqueued: u64,
    pub blocks_rejected: u64,
    pub completions: u64,
    pub completions_skipped: u64,
    pub t_is: f64,
    pub predicted_t_job: Option<f64>,
    pub simulated_t_job: f64,
    pub records_read: u64,
    pub records_out: u64,
    pub bytes_read: u64,
    pub remote_bytes_read: u64,
    /// `;`-separated.
    pub warnings: String,
}

#[derive(Debug, Clone)]
pub struct JobOutcome {
    pub report: JobReport,
    pub plan: Plan,
    /// Per task, index scans first, in plan order.
    pub tasks: Vec<TaskResult>,
    /// Emitted records when the job asked to collect them.
    pub output: Vec<Vec<Value>>,
}

pub struct Engine {
    cluster: Cluster,
    config: EngineConfig,
    schema: Schema,
    state: PolicyState,
    state_path: PathBuf,
}

impl Engine {
    /// Loads the policy state persisted next to the registry, if any.
    pub fn new(cluster: Cluster, config: EngineConfig) -> Result<Self> {
        config.policy.validate()?;
        let schema = cluster.registry().schema()?;
        let state_path = cluster.root().join(CALIBRATION_FILE);
        let state = PolicyState::load(&state_path)?;
        Ok(Self { cluster, config, schema, state, state_path })
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut EngineConfig {
        &mut self.config
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn policy_state(&self) -> &PolicyState {
        &self.state
    }

    pub fn plan(&self, attribute: &str) -> Result<Plan> {
        plan_job(attribute, &self.cluster.registry().snapshot(), &self.config.scheduler)
    }

    pub fn indexed_blocks(&self, attribute: &str) -> usize {
        self.cluster
            .registry()
            .snapshot()
            .values()
            .filter(|list| find_index_in(list, attribute).is_some())
            .count()
    }

    fn run_phase(
        &self,
        tasks: &[&TaskAssignment],
        job: &JobSpec,
        policy: &OfferPolicy,
        mut per_wave: impl FnMut(&[TaskResult]),
        results: &mut Vec<TaskResult>,
    ) -> Result<()> {
        let registry = self.cluster.registry();
        for wave in tasks.chunks(self.cluster.n_slots()) {
            let outcome = self.cluster.run_wave(wave, |a| {
                let node_root = self.cluster.node_root(a.node_id);
                let ctx = ScanContext {
                    registry,
                    schema: &self.schema,
                    node_root: &node_root,
                    indexer: Some(self.cluster.indexer(a.node_id)),
                    policy,
                    projection_mode: self.config.projection,
                };
                record_reader_scan(&a.split, job, &ctx)
            });
            // Accepted blocks are fully written before the next wave starts.
            self.cluster.drain_indexers();
            let wave_results = outcome.into_iter().collect::<Result<Vec<_>>>()?;
            per_wave(&wave_results);
            results.extend(wave_results);
        }
        Ok(())
    }

    pub fn run_job(&mut self, job: JobSpec) -> Result<JobOutcome> {
        let job = job.validated(&self.schema)?;
        let attribute = job.predicate.attribute.clone();
        let snapshot = self.cluster.registry().snapshot();
        let n_blocks = snapshot.len();
        let n_slots = self.cluster.n_slots();
        let timing = self.config.timing;
        let policy_cfg = self.config.policy;
        let idx_before = snapshot.values().filter(|l| find_index_in(l, &attribute).is_some()).count();
        let plan = plan_job(&attribute, &snapshot, &self.config.scheduler)?;
        let index_tasks: Vec<&TaskAssignment> = plan.index_tasks().collect();
        let full_tasks: Vec<&TaskAssignment> = plan.full_tasks().collect();
        let mut warnings = Vec::new();
        let mut tasks = Vec::new();

        let mut t_is = 0.0;
        let mut index_waves = 0;
        self.run_phase(
            &index_tasks,
            &job,
            &OfferPolicy::disabled(),
            |wave| {
                index_waves += 1;
                t_is += wave.iter().map(|r| timing.task_cost(r.block_ids.len(), r.bytes_read)).fold(0.0, f64::max);
            },
            &mut tasks,
        )?;

        let setting = job.offer.unwrap_or(match policy_cfg.mode {
            PolicyMode::Off => OfferSetting::Disabled,
            PolicyMode::Constant => OfferSetting::Rate(policy_cfg.rho),
            PolicyMode::Eager => OfferSetting::Eager,
            PolicyMode::Selectivity => OfferSetting::Selectivity(policy_cfg.selectivity_threshold),
        });
        let (mode_name, offer_mode, rho) = match setting {
            OfferSetting::Disabled => ("off", None, None),
            OfferSetting::Rate(r) => ("constant", Some(OfferMode::Rate(r)), Some(r)),
            OfferSetting::Selectivity(t) => (
                "selectivity",
                Some(OfferMode::Selectivity { threshold: t, direction: policy_cfg.selectivity_direction }),
                None,
            ),
            OfferSetting::Eager => {
                match eager_rho(&self.state, &policy_cfg, n_slots as u32, n_blocks as u32, idx_before as u32, t_is) {
                    Some((r, _)) => ("eager", Some(OfferMode::Rate(r)), Some(r)),
                    None => {
                        let r = policy_cfg.initial_rho();
                        let msg = format!("eager: model not calibrated, constant rho {r}");
                        warn!("job {}: {msg}", job.job_id);
                        warnings.push(msg);
                        ("eager-fallback", Some(OfferMode::Rate(r)), Some(r))
                    }
                }
            }
        };
        let scan_order: Vec<u64> = full_tasks.iter().map(|a| a.split.blocks[0].block_id).collect();
        let policy = match offer_mode {
            Some(m) => OfferPolicy::for_job(m, n_blocks, &scan_order),
            None => OfferPolicy::disabled(),
        };

        let mut full_base = 0.0;
        let mut overhead = 0.0;
        let mut full_waves = 0;
        let mut enqueued = 0;
        self.run_phase(
            &full_tasks,
            &job,
            &policy,
            |wave| {
                full_waves += 1;
                full_base += wave.iter().map(|r| timing.task_cost(r.block_ids.len(), r.bytes_read)).fold(0.0, f64::max);
                let enq: u64 = wave.iter().map(|r| r.blocks_indexed).sum();
                enqueued += enq;
                overhead += timing.wave_overhead(enq, n_slots);
            },
            &mut tasks,
        )?;
        let t_job = round_ns(t_is + full_base + overhead);

        // The first job with full-scan waves calibrates the model.
        let measured_fsw = (full_waves > 0).then(|| full_base / full_waves as f64);
        let measured_idx = (enqueued > 0).then(|| overhead / (enqueued as f64 / n_slots as f64));
        self.state.absorb(measured_fsw, measured_idx);
        if setting == OfferSetting::Eager && self.state.t_target.is_none() && policy_cfg.target_seconds.is_none() {
            self.state.t_target = Some(t_job);
        }
        self.state.save(&self.state_path)?;

        let cal = self.state.effective(&policy_cfg);
        let model_rho = match setting {
            OfferSetting::Disabled => Some(0.0),
            OfferSetting::Selectivity(_) => None,
            _ => rho,
        };
        let predicted = match (model_rho, cal.t_fsw) {
            (Some(r), Some(t_fsw)) => {
                let params = CostModelParams {
                    n_slots: n_slots as u32,
                    n_blocks: n_blocks as u32,
                    n_idx_blocks: idx_before as u32,
                    t_fsw,
                    t_idx_overhead: cal.t_idx_overhead.unwrap_or(timing.idx_overhead_per_wave),
                    t_is,
                    t_target: policy_cfg.target_seconds.or(self.state.t_target).unwrap_or(t_job),
                };
                Some(predict_t_job(&params, r))
            }
            _ => None,
        };

        let idx_after = self.indexed_blocks(&attribute);
        let sum = |f: fn(&TaskResult) -> u64| tasks.iter().map(f).sum::<u64>();
        let report = JobReport {
            job_id: job.job_id.clone(),
            attribute,
            mode: mode_name.to_owned(),
            rho,
            index_splits: index_tasks.len(),
            full_splits: full_tasks.len(),
            index_waves,
            full_waves,
            blocks_total: n_blocks,
            blocks_indexed_before: idx_before,
            blocks_indexed: idx_after,
            indexed_fraction: if n_blocks == 0 { 0.0 } else { idx_after as f64 / n_blocks as f64 },
            blocks_offered: sum(|t| t.blocks_offered),
            blocks_enqueued: sum(|t| t.blocks_indexed),
            blocks_rejected: sum(|t| t.blocks_rejected),
            completions: sum(|t| t.completions_requested),
            completions_skipped: sum(|t| t.completions_skipped),
            t_is: round_ns(t_is),
            predicted_t_job: predicted,
            simulated_t_job: t_job,
            records_read: sum(|t| t.records_read),
            records_out: sum(|t| t.records_emitted),
            bytes_read: sum(|t| t.bytes_read),
            remote_bytes_read: sum(|t| t.remote_bytes_read),
            warnings: warnings.join(";"),
        };
        let output = if job.collect_output {
            tasks.iter_mut().flat_map(|t| std::mem::take(&mut t.output)).collect()
        } else {
            Vec::new()
        };
        Ok(JobOutcome { report, plan, tasks, output })
    }
}
