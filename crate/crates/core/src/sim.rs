//! Time-stepped simulation kernel.
//!
//! Runs at the thermal integration step: release arrivals, retire finished
//! tasks, re-form bins per the update policy, map queued tasks FIFO, apply
//! task powers, advance the thermal state, and sample per-core traces.
//! Everything is deterministic for a fixed configuration and seed pair.

use std::collections::{BTreeMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binning::{form_bins, should_update_bins, BinConfig, BinEvent, BinUpdatePolicy};
use crate::error::{Result, TcError};
use crate::mapping::{
    map_conventional_tc, map_random, map_two_level, CoreState, MapperKind, MappingContext,
    Placement,
};
use crate::platform::ChipModel;
use crate::reliability::{
    em_index, hci_index, mttf_tc, nbti_index, rainflow_count, AgingParams, CycleSet, TcParams,
};
use crate::thermal::{step, TemperatureTrace, ThermalParams, ThermalState};
use crate::workload::Workload;

/// Runtime simulation parameters, assembled from the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub thermal: ThermalParams,
    pub binning: BinConfig,
    pub bin_policy: BinUpdatePolicy,
    pub mapper: MapperKind,
    pub tie_tol_c: f64,
    /// Seed for the random mapper's draw stream.
    pub mapper_seed: u64,
    pub tc: TcParams,
    pub aging: AgingParams,
    pub sample_period_s: f64,
    /// Simulated seconds an unmappable queue may persist before the run is
    /// aborted as infeasible.
    pub stall_s: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.thermal.validate()?;
        self.binning.validate()?;
        self.tc.validate()?;
        self.aging.validate()?;
        if !(self.tie_tol_c >= 0.0) {
            return Err(TcError::Validation(format!(
                "tie_tol_c must be >= 0, got {}",
                self.tie_tol_c
            )));
        }
        if !(self.stall_s > 0.0) {
            return Err(TcError::Validation(format!(
                "stall_s must be > 0, got {}",
                self.stall_s
            )));
        }
        let ratio = self.sample_period_s / self.thermal.dt_s;
        if !(self.sample_period_s >= self.thermal.dt_s)
            || (ratio - ratio.round()).abs() > 1e-9 * ratio
        {
            return Err(TcError::Validation(format!(
                "sample_period_s ({}) must be an integer multiple of dt_s ({})",
                self.sample_period_s, self.thermal.dt_s
            )));
        }
        Ok(())
    }

    fn sample_every(&self) -> u64 {
        (self.sample_period_s / self.thermal.dt_s).round() as u64
    }
}

/// One line of the mapping log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapLogEntry {
    pub task_idx: usize,
    pub app_id: String,
    pub thread_id: u32,
    pub core_id: usize,
    /// Present for the two-level mapper only.
    pub bin_id: Option<usize>,
    pub mapped_at_s: f64,
    pub end_s: f64,
}

/// Per-core lifetime figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreReport {
    pub core_id: usize,
    pub mean_temp_c: f64,
    /// Effective rainflow cycle count.
    pub cycles_m: f64,
    pub mttf_tc_s: f64,
    pub nbti_index: f64,
    pub hci_index: f64,
    pub em_index: f64,
}

/// Per-core and aggregate lifetime report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MttfReport {
    pub per_core: Vec<CoreReport>,
    /// Arithmetic mean over cores (the headline metric).
    pub mean_mttf_tc_s: f64,
    /// Minimum over cores (system-level lifetime).
    pub min_mttf_tc_s: f64,
}

/// Everything one simulation run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub traces: Vec<TemperatureTrace>,
    #[serde(skip)]
    pub cycle_sets: Vec<CycleSet>,
    pub report: MttfReport,
    pub mapping_log: Vec<MapLogEntry>,
    /// Number of distinct tasks that were deferred at least once.
    pub deferrals: u64,
    pub makespan_s: f64,
}

struct RunningTask {
    task_idx: usize,
    end_s: f64,
}

/// Run one simulation to completion.
pub fn run_simulation(chip: &ChipModel, workload: &Workload, cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    if !workload.is_profiled() {
        return Err(TcError::Validation(
            "workload must be profiled before simulation".into(),
        ));
    }
    let n = chip.core_count();
    let dt = cfg.thermal.dt_s;
    let sample_every = cfg.sample_every();
    let freqs = chip.frequencies_hz();

    let mut state = ThermalState::at_ambient(n, &cfg.thermal);
    let mut traces: Vec<TemperatureTrace> = (0..n)
        .map(|core_id| TemperatureTrace {
            core_id,
            samples: Vec::new(),
        })
        .collect();

    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut running: Vec<Option<RunningTask>> = (0..n).map(|_| None).collect();
    let mut next_arrival = 0usize;
    let mut prev_core_of_app: BTreeMap<String, usize> = BTreeMap::new();
    let mut remaining_of_app: BTreeMap<String, usize> = BTreeMap::new();
    for task in &workload.tasks {
        *remaining_of_app.entry(task.app_id.clone()).or_insert(0) += 1;
    }
    let mut mapper_rng = ChaCha8Rng::seed_from_u64(cfg.mapper_seed);
    let mut deferred_once = vec![false; workload.tasks.len()];
    let mut mapping_log: Vec<MapLogEntry> = Vec::new();
    let mut completed_tasks = 0usize;
    let mut makespan_s = 0.0f64;

    let mut bins = form_bins(&state.temps_c, chip, &cfg.binning, 0.0, cfg.bin_policy)?;
    let mut stalled_since: Option<f64> = None;
    let mut tick: u64 = 0;

    loop {
        let now = tick as f64 * dt;

        if tick % sample_every == 0 {
            for (trace, &t) in traces.iter_mut().zip(&state.temps_c) {
                trace.samples.push((now, t));
            }
        }

        // 1. Release arrivals.
        let mut arrived = false;
        while next_arrival < workload.arrivals.len() && workload.arrivals[next_arrival].1 <= now {
            queue.push_back(workload.arrivals[next_arrival].0);
            next_arrival += 1;
            arrived = true;
        }

        // 2. Retire finished tasks.
        let mut completed = false;
        let mut app_completed = false;
        for core in 0..n {
            let finished = matches!(&running[core], Some(rt) if rt.end_s <= now);
            if finished {
                let rt = running[core].take().unwrap();
                completed = true;
                completed_tasks += 1;
                let app = &workload.tasks[rt.task_idx].app_id;
                let left = remaining_of_app.get_mut(app).unwrap();
                *left -= 1;
                if *left == 0 {
                    app_completed = true;
                }
            }
        }

        // 3. Re-form bins on application completion when the policy says so.
        if app_completed && should_update_bins(cfg.bin_policy, BinEvent::ApplicationCompleted) {
            bins = form_bins(&state.temps_c, chip, &cfg.binning, now, cfg.bin_policy)?;
        }

        // 4. Map queued tasks in FIFO order, leaving deferred ones queued.
        let attempt = (tick == 0 || arrived || completed) && !queue.is_empty();
        if attempt {
            let mut still_queued: VecDeque<usize> = VecDeque::new();
            let mut core_states: Vec<CoreState> = running
                .iter()
                .map(|r| match r {
                    Some(rt) => CoreState::Busy { until_s: rt.end_s },
                    None => CoreState::Free,
                })
                .collect();
            while let Some(task_idx) = queue.pop_front() {
                let task = &workload.tasks[task_idx];
                let ctx = MappingContext {
                    core_states: &core_states,
                    core_temps_c: &state.temps_c,
                    core_freqs_hz: &freqs,
                    bins: &bins,
                    prev_core_of_app: &prev_core_of_app,
                    chip,
                    tie_tol_c: cfg.tie_tol_c,
                };
                let decision = match cfg.mapper {
                    MapperKind::TwoLevel => map_two_level(task_idx, task, &ctx, now),
                    MapperKind::Random => {
                        map_random(task_idx, task, &ctx, &mut mapper_rng, now)
                    }
                    MapperKind::ConventionalTc => map_conventional_tc(task_idx, task, &ctx, now),
                };
                match decision.placement {
                    Placement::Core { core_id, bin_id } => {
                        let end_s = now + task.exec_time_s;
                        running[core_id] = Some(RunningTask { task_idx, end_s });
                        core_states[core_id] = CoreState::Busy { until_s: end_s };
                        prev_core_of_app.insert(task.app_id.clone(), core_id);
                        makespan_s = makespan_s.max(end_s);
                        mapping_log.push(MapLogEntry {
                            task_idx,
                            app_id: task.app_id.clone(),
                            thread_id: task.thread_id,
                            core_id,
                            bin_id,
                            mapped_at_s: now,
                            end_s,
                        });
                        if should_update_bins(cfg.bin_policy, BinEvent::TaskMapped) {
                            bins =
                                form_bins(&state.temps_c, chip, &cfg.binning, now, cfg.bin_policy)?;
                        }
                    }
                    Placement::Deferred => {
                        deferred_once[task_idx] = true;
                        still_queued.push_back(task_idx);
                    }
                }
            }
            queue = still_queued;
        }

        let all_arrived = next_arrival == workload.arrivals.len();
        let none_running = running.iter().all(|r| r.is_none());
        let done = all_arrived && queue.is_empty() && none_running;
        if done && tick % sample_every == 0 {
            break;
        }

        // Unmappable state: everything has arrived, nothing is running, and
        // the queue cannot drain. No future event can change eligibility, so
        // give it the configured wall and then abort.
        if all_arrived && none_running && !queue.is_empty() {
            let since = *stalled_since.get_or_insert(now);
            if now - since >= cfg.stall_s {
                let stuck = &workload.tasks[*queue.front().unwrap()];
                return Err(TcError::NoProgress {
                    waited_s: now - since,
                    msg: format!(
                        "task ({}, {}) with f_req {:.3} GHz cannot be placed on any core",
                        stuck.app_id,
                        stuck.thread_id,
                        stuck.f_req_hz / 1e9
                    ),
                });
            }
        } else {
            stalled_since = None;
        }

        // 5-6. Apply powers and advance the thermal state.
        let mut powers = vec![0.0; n];
        for (core, slot) in running.iter().enumerate() {
            if let Some(rt) = slot {
                powers[core] = workload.tasks[rt.task_idx].power_watts;
            }
        }
        state = step(&state, &powers, &cfg.thermal, chip)?;
        tick += 1;
    }

    debug_assert_eq!(completed_tasks, workload.tasks.len());
    let (report, cycle_sets) = compute_metrics(&traces, &cfg.tc, &cfg.aging)?;
    Ok(SimResult {
        traces,
        cycle_sets,
        report,
        mapping_log,
        deferrals: deferred_once.iter().filter(|&&d| d).count() as u64,
        makespan_s,
    })
}

/// Rainflow-count every trace and evaluate the lifetime models: MTTF from
/// the cycles, aging indices at each core's time-averaged temperature.
pub fn compute_metrics(
    traces: &[TemperatureTrace],
    tc: &TcParams,
    aging: &AgingParams,
) -> Result<(MttfReport, Vec<CycleSet>)> {
    if traces.is_empty() {
        return Err(TcError::Validation("no traces to evaluate".into()));
    }
    let mut per_core = Vec::with_capacity(traces.len());
    let mut cycle_sets = Vec::with_capacity(traces.len());
    for trace in traces {
        let cs = rainflow_count(trace)?;
        let mean_temp_c = trace.mean_temp_c();
        per_core.push(CoreReport {
            core_id: trace.core_id,
            mean_temp_c,
            cycles_m: cs.m(),
            mttf_tc_s: mttf_tc(&cs, tc),
            nbti_index: nbti_index(mean_temp_c, aging)?,
            hci_index: hci_index(mean_temp_c, aging)?,
            em_index: em_index(mean_temp_c, aging)?,
        });
        cycle_sets.push(cs);
    }
    let mean_mttf_tc_s =
        per_core.iter().map(|c| c.mttf_tc_s).sum::<f64>() / per_core.len() as f64;
    let min_mttf_tc_s = per_core
        .iter()
        .map(|c| c.mttf_tc_s)
        .fold(f64::INFINITY, f64::min);
    Ok((
        MttfReport {
            per_core,
            mean_mttf_tc_s,
            min_mttf_tc_s,
        },
        cycle_sets,
    ))
}
