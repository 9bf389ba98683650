//! Application workloads: trace file ingestion, synthetic generation, and
//! offline steady-state temperature profiling of tasks.
//!
//! A task is one thread execution request of a multi-threaded application.
//! Trace files are line-oriented CSV with the header
//! `app_id,thread_id,power_watts,exec_time_s,perf_class,f_req_ghz,arrival_s`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TcError};
use crate::platform::ChipModel;
use crate::thermal::{SteadySolver, ThermalParams};

pub const TRACE_HEADER: &str = "app_id,thread_id,power_watts,exec_time_s,perf_class,f_req_ghz,arrival_s";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerfClass {
    High,
    Low,
}

impl FromStr for PerfClass {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "high" => Ok(PerfClass::High),
            "low" => Ok(PerfClass::Low),
            other => Err(format!("perf_class must be 'high' or 'low', got '{other}'")),
        }
    }
}

impl fmt::Display for PerfClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerfClass::High => write!(f, "high"),
            PerfClass::Low => write!(f, "low"),
        }
    }
}

/// One task (application thread) and its offline profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskProfile {
    pub app_id: String,
    pub thread_id: u32,
    pub power_watts: f64,
    pub exec_time_s: f64,
    pub perf_class: PerfClass,
    /// Minimum acceptable core frequency; 0 means unconstrained.
    pub f_req_hz: f64,
    /// Steady-state temperature the task causes, filled by profiling.
    pub t_steady_c: Option<f64>,
}

/// A set of tasks plus their arrival schedule, sorted by arrival time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub tasks: Vec<TaskProfile>,
    /// `(task index, arrival_time_s)`, nondecreasing in time.
    pub arrivals: Vec<(usize, f64)>,
    pub seed: u64,
}

impl Workload {
    fn from_rows(tasks: Vec<TaskProfile>, arrival_times: Vec<f64>, seed: u64) -> Self {
        let mut arrivals: Vec<(usize, f64)> = arrival_times.into_iter().enumerate().collect();
        arrivals.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        Workload {
            tasks,
            arrivals,
            seed,
        }
    }

    pub fn arrival_time_of(&self, task_idx: usize) -> f64 {
        self.arrivals
            .iter()
            .find(|(i, _)| *i == task_idx)
            .map(|(_, t)| *t)
            .expect("task has an arrival")
    }

    pub fn is_profiled(&self) -> bool {
        self.tasks.iter().all(|t| t.t_steady_c.is_some())
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct TraceRow {
    app_id: String,
    thread_id: u32,
    power_watts: f64,
    exec_time_s: f64,
    perf_class: String,
    f_req_ghz: f64,
    arrival_s: f64,
}

/// Load a workload from a trace CSV. Rejects malformed rows with a
/// line-numbered error and duplicate `(app_id, thread_id, arrival)` triples.
pub fn load_trace(path: impl AsRef<Path>) -> Result<Workload> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => TcError::io(&display, io),
            other => TcError::Validation(format!("{display}: {other:?}")),
        })?;

    let mut tasks = Vec::new();
    let mut arrival_times = Vec::new();
    let mut seen = BTreeSet::new();
    for record in reader.deserialize::<TraceRow>() {
        let row = record.map_err(|e| {
            let line = e
                .position()
                .map(|p| p.line())
                .unwrap_or_default();
            TcError::TraceSchema {
                line,
                msg: format!("{display}: {e}"),
            }
        })?;
        // csv positions point at the record start; header is line 1.
        let line = tasks.len() as u64 + 2;
        let schema_err = |msg: String| TcError::TraceSchema {
            line,
            msg: format!("{display}: {msg}"),
        };
        if !(row.exec_time_s > 0.0) {
            return Err(schema_err(format!(
                "exec_time_s must be > 0, got {}",
                row.exec_time_s
            )));
        }
        if !(row.power_watts >= 0.0) {
            return Err(schema_err(format!(
                "power_watts must be >= 0, got {}",
                row.power_watts
            )));
        }
        if !(row.arrival_s >= 0.0) {
            return Err(schema_err(format!(
                "arrival_s must be >= 0, got {}",
                row.arrival_s
            )));
        }
        if !(row.f_req_ghz >= 0.0) {
            return Err(schema_err(format!(
                "f_req_ghz must be >= 0, got {}",
                row.f_req_ghz
            )));
        }
        let perf_class = PerfClass::from_str(&row.perf_class).map_err(schema_err)?;
        if !seen.insert((
            row.app_id.clone(),
            row.thread_id,
            row.arrival_s.to_bits(),
        )) {
            return Err(schema_err(format!(
                "duplicate task ({}, {}, {})",
                row.app_id, row.thread_id, row.arrival_s
            )));
        }
        tasks.push(TaskProfile {
            app_id: row.app_id,
            thread_id: row.thread_id,
            power_watts: row.power_watts,
            exec_time_s: row.exec_time_s,
            perf_class,
            f_req_hz: row.f_req_ghz * 1e9,
            t_steady_c: None,
        });
        arrival_times.push(row.arrival_s);
    }
    Ok(Workload::from_rows(tasks, arrival_times, 0))
}

/// Write a workload back out in trace CSV form (profiles are not part of
/// the trace format).
pub fn save_trace(w: &Workload, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => TcError::io(&display, io),
        other => TcError::Validation(format!("{display}: {other:?}")),
    })?;
    for (i, task) in w.tasks.iter().enumerate() {
        writer
            .serialize(TraceRow {
                app_id: task.app_id.clone(),
                thread_id: task.thread_id,
                power_watts: task.power_watts,
                exec_time_s: task.exec_time_s,
                perf_class: task.perf_class.to_string(),
                f_req_ghz: task.f_req_hz / 1e9,
                arrival_s: w.arrival_time_of(i),
            })
            .map_err(|e| TcError::Validation(format!("{display}: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| TcError::io(&display, e))?;
    Ok(())
}

/// Generate a deterministic synthetic workload.
///
/// Apps alternate high/low performance class; per-task powers are uniform
/// in `power_range`, execution times uniform in [5, 15) s, and arrivals
/// follow an exponential inter-arrival process at `arrival_rate_hz`. Tasks
/// are enumerated app-major so an application's threads arrive together.
pub fn generate_synthetic_workload(
    n_apps: usize,
    threads_per_app: usize,
    power_range: (f64, f64),
    arrival_rate_hz: f64,
    seed: u64,
) -> Result<Workload> {
    let (lo, hi) = power_range;
    if !(lo >= 0.0) || !(hi >= lo) {
        return Err(TcError::Validation(format!(
            "power range [{lo}, {hi}] is invalid"
        )));
    }
    if !(arrival_rate_hz > 0.0) {
        return Err(TcError::Validation(format!(
            "arrival rate must be > 0, got {arrival_rate_hz}"
        )));
    }
    if threads_per_app == 0 {
        return Err(TcError::Validation("threads_per_app must be >= 1".into()));
    }
    let exp = Exp::new(arrival_rate_hz)
        .map_err(|e| TcError::Validation(format!("bad arrival rate: {e}")))?;
    // Task parameters and the arrival process use separate ChaCha8 streams
    // of the same seed, so changing one knob never perturbs the other draws.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut arrival_rng = ChaCha8Rng::seed_from_u64(seed);
    arrival_rng.set_stream(1);
    let mut tasks = Vec::new();
    let mut arrival_times = Vec::new();
    let mut t = 0.0;
    for app in 0..n_apps {
        let perf_class = if app % 2 == 0 {
            PerfClass::High
        } else {
            PerfClass::Low
        };
        for thread in 0..threads_per_app {
            let power_watts = if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            };
            let exec_time_s = rng.random_range(5.0..15.0);
            t += exp.sample(&mut arrival_rng);
            tasks.push(TaskProfile {
                app_id: format!("app{app}"),
                thread_id: thread as u32,
                power_watts,
                exec_time_s,
                perf_class,
                f_req_hz: 0.0,
                t_steady_c: None,
            });
            arrival_times.push(t);
        }
    }
    Ok(Workload::from_rows(tasks, arrival_times, seed))
}

/// Fill each task's steady-state temperature: the temperature of the chip's
/// center tile when only that task's power is applied there. Idempotent.
pub fn profile_task_temperatures(
    w: &Workload,
    chip: &ChipModel,
    params: &ThermalParams,
) -> Result<Workload> {
    let solver = SteadySolver::new(chip, params)?;
    let center = chip.dims.center_id();
    let n = chip.core_count();
    let mut out = w.clone();
    for task in &mut out.tasks {
        let mut powers = vec![0.0; n];
        powers[center] = task.power_watts;
        let temps = solver.solve(&powers)?;
        task.t_steady_c = Some(temps[center]);
    }
    Ok(out)
}

/// Write the `<trace>.profile.csv` sidecar with per-task profiled
/// temperatures.
pub fn write_profile_csv(w: &Workload, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| TcError::Validation(format!("{display}: {e}")))?;
    writer
        .write_record(["app_id", "thread_id", "t_steady_c"])
        .map_err(|e| TcError::Validation(format!("{display}: {e}")))?;
    for task in &w.tasks {
        let t = task
            .t_steady_c
            .ok_or_else(|| TcError::Validation("workload is not profiled".into()))?;
        writer
            .write_record([
                task.app_id.clone(),
                task.thread_id.to_string(),
                t.to_string(),
            ])
            .map_err(|e| TcError::Validation(format!("{display}: {e}")))?;
    }
    writer.flush().map_err(|e| TcError::io(&display, e))?;
    Ok(())
}
