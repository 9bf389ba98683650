//! Run output serialization: `result.json` with the resolved config,
//! aggregates, and mapping log; `traces.csv` with the sampled temperatures;
//! `mttf.csv` with per-core lifetime figures.
//!
//! JSON numbers cannot carry infinities, so an infinite MTTF (a core that
//! accumulated no damage) serializes as `null` in `result.json`; the CSVs
//! spell it `inf`.

use std::path::Path;

use serde::Serialize;

use crate::config::FullConfig;
use crate::error::{Result, TcError};
use crate::sim::{MapLogEntry, SimResult};
use crate::thermal::TemperatureTrace;

#[derive(Serialize)]
struct ResultDoc<'a> {
    config: &'a FullConfig,
    aggregates: Aggregates,
    mapping_log: &'a [MapLogEntry],
}

#[derive(Serialize)]
struct Aggregates {
    cores: usize,
    mean_mttf_tc_s: f64,
    min_mttf_tc_s: f64,
    makespan_s: f64,
    deferrals: u64,
}

/// Write `result.json`. Byte-identical for identical inputs.
pub fn write_result_json(path: &Path, config: &FullConfig, result: &SimResult) -> Result<()> {
    let doc = ResultDoc {
        config,
        aggregates: Aggregates {
            cores: result.traces.len(),
            mean_mttf_tc_s: result.report.mean_mttf_tc_s,
            min_mttf_tc_s: result.report.min_mttf_tc_s,
            makespan_s: result.makespan_s,
            deferrals: result.deferrals,
        },
        mapping_log: &result.mapping_log,
    };
    let mut bytes = serde_json::to_vec_pretty(&doc)
        .map_err(|e| TcError::Validation(format!("result serialization: {e}")))?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| TcError::io(path.display().to_string(), e))
}

/// Write `traces.csv` (`time_s,core_id,temp_c`), time-major.
pub fn write_traces_csv(path: &Path, traces: &[TemperatureTrace]) -> Result<()> {
    let display = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|e| TcError::Validation(format!("{display}: {e}")))?;
    w.write_record(["time_s", "core_id", "temp_c"])
        .map_err(|e| TcError::Validation(format!("{display}: {e}")))?;
    let samples = traces.first().map(|t| t.samples.len()).unwrap_or(0);
    for k in 0..samples {
        for trace in traces {
            let (time, temp) = trace.samples[k];
            w.write_record([
                time.to_string(),
                trace.core_id.to_string(),
                temp.to_string(),
            ])
            .map_err(|e| TcError::Validation(format!("{display}: {e}")))?;
        }
    }
    w.flush().map_err(|e| TcError::io(&display, e))?;
    Ok(())
}

/// Write `mttf.csv` (`core_id,mttf_tc_s,nbti,hci,em`).
pub fn write_mttf_csv(path: &Path, result: &SimResult) -> Result<()> {
    let display = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|e| TcError::Validation(format!("{display}: {e}")))?;
    w.write_record(["core_id", "mttf_tc_s", "nbti", "hci", "em"])
        .map_err(|e| TcError::Validation(format!("{display}: {e}")))?;
    for core in &result.report.per_core {
        w.write_record([
            core.core_id.to_string(),
            core.mttf_tc_s.to_string(),
            core.nbti_index.to_string(),
            core.hci_index.to_string(),
            core.em_index.to_string(),
        ])
        .map_err(|e| TcError::Validation(format!("{display}: {e}")))?;
    }
    w.flush().map_err(|e| TcError::io(&display, e))?;
    Ok(())
}
