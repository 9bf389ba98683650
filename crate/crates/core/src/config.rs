//! Experiment configuration: a TOML file with one section per subsystem,
//! plus dotted-key overrides (`thermal.g_adj=0.2`) for scripted sweeps.
//!
//! Every run's outputs embed the fully resolved configuration, so a result
//! file always records exactly what produced it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binning::{BinConfig, BinUpdatePolicy};
use crate::error::{Result, TcError};
use crate::mapping::MapperKind;
use crate::platform::{generate_pv_grid, ChipModel, GridDims, TechConstants};
use crate::reliability::{
    calibrate_atc, AgingParams, CalibrationSpec, EmParams, HciParams, NbtiParams, TcParams,
};
use crate::sim::SimConfig;
use crate::thermal::ThermalParams;
use crate::workload::{generate_synthetic_workload, load_trace, Workload};

/// Mixer for deriving the random-mapper stream from the run seed when no
/// explicit `mapper.rng_seed` is configured.
const MAPPER_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChipConfig {
    pub rows: usize,
    pub cols: usize,
    pub pv_sigma: f64,
    pub pv_seed: u64,
    pub beta_ghz: f64,
    pub critical_path_radius: usize,
}

impl Default for ChipConfig {
    fn default() -> Self {
        ChipConfig {
            rows: 4,
            cols: 4,
            pv_sigma: 0.1,
            pv_seed: 42,
            beta_ghz: 3.0,
            critical_path_radius: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalConfig {
    pub t_ambient_c: f64,
    pub c_tile: f64,
    pub g_amb: f64,
    pub g_adj: f64,
    pub dt_s: f64,
    pub sample_period_s: f64,
}

impl Default for ThermalConfig {
    fn default() -> Self {
        ThermalConfig {
            t_ambient_c: 45.0,
            c_tile: 0.03,
            g_amb: 0.5,
            g_adj: 0.125,
            dt_s: 0.01,
            sample_period_s: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinningConfig {
    pub epsilon_c: f64,
    pub min_pts: usize,
    pub bin_update_policy: BinUpdatePolicy,
}

impl Default for BinningConfig {
    fn default() -> Self {
        BinningConfig {
            epsilon_c: 0.7,
            min_pts: 1,
            bin_update_policy: BinUpdatePolicy::PerApplication,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapperConfig {
    pub mapper: MapperKind,
    pub tie_tol_c: f64,
    /// Explicit seed for the random mapper; derived from the run seed when
    /// absent.
    pub rng_seed: Option<u64>,
}

impl Default for MapperConfig {
    fn default() -> Self {
        MapperConfig {
            mapper: MapperKind::TwoLevel,
            tie_tol_c: 0.1,
            rng_seed: None,
        }
    }
}

/// The thermal-cycling scale: a fixed number or the string `"calibrate"`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AtcSetting {
    Fixed(f64),
    Mode(String),
}

impl Default for AtcSetting {
    fn default() -> Self {
        AtcSetting::Mode("calibrate".into())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReliabilityConfig {
    pub e_a_ev: f64,
    pub b: f64,
    pub t_th_c: f64,
    pub a_tc: AtcSetting,
    pub calibration: CalibrationSpec,
    pub t_ref_c: f64,
    pub nbti: NbtiParams,
    pub hci: HciParams,
    pub em: EmParams,
}

impl Default for ReliabilityConfig {
    fn default() -> Self {
        ReliabilityConfig {
            e_a_ev: 0.42,
            b: 2.35,
            t_th_c: 1.0,
            a_tc: AtcSetting::default(),
            calibration: CalibrationSpec::default(),
            t_ref_c: 45.0,
            nbti: NbtiParams::default(),
            hci: HciParams::default(),
            em: EmParams::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    /// Trace CSV path, resolved relative to the config file.
    pub trace: Option<String>,
    pub synthetic: Option<SyntheticConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_apps: usize,
    pub threads_per_app: usize,
    pub power_min_w: f64,
    pub power_max_w: f64,
    pub arrival_rate_hz: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_apps: 4,
            threads_per_app: 4,
            power_min_w: 2.0,
            power_max_w: 10.0,
            arrival_rate_hz: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub seed: u64,
    pub stall_s: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            seed: 1,
            stall_s: 60.0,
        }
    }
}

/// The whole experiment configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FullConfig {
    pub chip: ChipConfig,
    pub thermal: ThermalConfig,
    pub binning: BinningConfig,
    pub mapper: MapperConfig,
    pub reliability: ReliabilityConfig,
    pub workload: WorkloadConfig,
    pub sim: SimSection,
}

impl FullConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| TcError::Config(e.to_string()))
    }

    /// Load a config file and apply `key=value` overrides with dotted keys.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| TcError::io(path.display().to_string(), e))?;
        Self::parse_with_overrides(&text, overrides)
    }

    pub fn parse_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut value: toml::Value =
            toml::from_str(text).map_err(|e| TcError::Config(e.to_string()))?;
        for (key, raw) in overrides {
            apply_override(&mut value, key, raw)?;
        }
        value
            .try_into()
            .map_err(|e| TcError::Config(e.to_string()))
    }

    pub fn build_chip(&self) -> Result<ChipModel> {
        let dims = GridDims::new(self.chip.rows, self.chip.cols)?;
        let pv = generate_pv_grid(dims, self.chip.pv_sigma, self.chip.pv_seed)?;
        let tech = TechConstants {
            beta_hz: self.chip.beta_ghz * 1e9,
            ..TechConstants::default()
        };
        ChipModel::new(&pv, tech, self.chip.critical_path_radius)
    }

    pub fn thermal_params(&self) -> Result<ThermalParams> {
        ThermalParams::new(
            self.thermal.t_ambient_c,
            self.thermal.c_tile,
            self.thermal.g_amb,
            self.thermal.g_adj,
            self.thermal.dt_s,
        )
    }

    pub fn bin_config(&self) -> BinConfig {
        BinConfig {
            epsilon_c: self.binning.epsilon_c,
            min_pts: self.binning.min_pts,
        }
    }

    /// The thermal-cycling parameters, calibrating `a_tc` when configured.
    pub fn tc_params(&self) -> Result<TcParams> {
        let r = &self.reliability;
        let a_tc = match &r.a_tc {
            AtcSetting::Fixed(v) => *v,
            AtcSetting::Mode(mode) if mode == "calibrate" => {
                calibrate_atc(&r.calibration, r.e_a_ev, r.b, r.t_th_c)?
            }
            AtcSetting::Mode(other) => {
                return Err(TcError::Config(format!(
                    "a_tc must be a number or \"calibrate\", got \"{other}\""
                )))
            }
        };
        let p = TcParams {
            a_tc,
            b: r.b,
            t_th_c: r.t_th_c,
            e_a_ev: r.e_a_ev,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn aging_params(&self) -> Result<AgingParams> {
        let p = AgingParams {
            nbti: self.reliability.nbti,
            hci: self.reliability.hci,
            em: self.reliability.em,
            t_ref_c: self.reliability.t_ref_c,
        };
        p.validate()?;
        Ok(p)
    }

    /// Assemble the runtime simulation parameters for one run seed.
    pub fn sim_config(&self, seed: u64) -> Result<SimConfig> {
        let cfg = SimConfig {
            thermal: self.thermal_params()?,
            binning: self.bin_config(),
            bin_policy: self.binning.bin_update_policy,
            mapper: self.mapper.mapper,
            tie_tol_c: self.mapper.tie_tol_c,
            mapper_seed: self.mapper.rng_seed.unwrap_or(seed ^ MAPPER_SEED_SALT),
            tc: self.tc_params()?,
            aging: self.aging_params()?,
            sample_period_s: self.thermal.sample_period_s,
            stall_s: self.sim.stall_s,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Build the workload for one run seed. Precedence: explicit trace
    /// override, then the configured trace (relative to `base_dir`), then
    /// the synthetic generator. Returns the trace path actually used, if
    /// any.
    pub fn build_workload(
        &self,
        base_dir: &Path,
        trace_override: Option<&Path>,
        seed: u64,
    ) -> Result<(Workload, Option<PathBuf>)> {
        if let Some(path) = trace_override {
            return Ok((load_trace(path)?, Some(path.to_path_buf())));
        }
        if let Some(rel) = &self.workload.trace {
            let path = base_dir.join(rel);
            return Ok((load_trace(&path)?, Some(path)));
        }
        if let Some(synth) = &self.workload.synthetic {
            let w = generate_synthetic_workload(
                synth.n_apps,
                synth.threads_per_app,
                (synth.power_min_w, synth.power_max_w),
                synth.arrival_rate_hz,
                seed,
            )?;
            return Ok((w, None));
        }
        Err(TcError::Config(
            "no workload: set [workload] trace or [workload.synthetic], or pass --trace".into(),
        ))
    }
}

/// Apply one dotted-key override to a parsed TOML tree. The value text is
/// itself parsed as TOML (numbers, booleans, quoted strings); bare words
/// fall back to strings.
pub fn apply_override(root: &mut toml::Value, key: &str, raw: &str) -> Result<()> {
    let parsed: toml::Value = match toml::from_str::<toml::Value>(&format!("v = {raw}")) {
        Ok(toml::Value::Table(t)) => t.get("v").cloned().unwrap(),
        _ => toml::Value::String(raw.to_string()),
    };
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(TcError::Config(format!("bad override key '{key}'")));
    }
    for part in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| TcError::Config(format!("override '{key}' crosses a non-table")))?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| TcError::Config(format!("override '{key}' crosses a non-table")))?;
    table.insert(parts.last().unwrap().to_string(), parsed);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let cfg = FullConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.chip.rows, 4);
        assert_eq!(cfg.binning.epsilon_c, 0.7);
        assert_eq!(cfg.mapper.mapper, MapperKind::TwoLevel);
        assert_eq!(cfg.sim.seed, 1);
        let tc = cfg.tc_params().unwrap();
        assert!((tc.a_tc - 60.0).abs() < 2.0);
    }

    #[test]
    fn sections_parse() {
        let cfg = FullConfig::from_toml_str(
            r#"
            [chip]
            rows = 8
            cols = 8
            pv_sigma = 0.05

            [binning]
            epsilon_c = 0.3
            bin_update_policy = "per_task"

            [mapper]
            mapper = "random"

            [reliability]
            a_tc = 55.5

            [workload.synthetic]
            n_apps = 2
            "#,
        )
        .unwrap();
        assert_eq!(cfg.chip.rows, 8);
        assert_eq!(cfg.binning.bin_update_policy, BinUpdatePolicy::PerTask);
        assert_eq!(cfg.mapper.mapper, MapperKind::Random);
        assert_eq!(cfg.tc_params().unwrap().a_tc, 55.5);
        assert_eq!(cfg.workload.synthetic.unwrap().n_apps, 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(FullConfig::from_toml_str("[chip]\nrowz = 4\n").is_err());
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = FullConfig::parse_with_overrides(
            "",
            &[
                ("thermal.g_adj".into(), "0.2".into()),
                ("mapper.mapper".into(), "conventional_tc".into()),
                ("binning.epsilon_c".into(), "0.4".into()),
            ],
        )
        .unwrap();
        assert_eq!(cfg.thermal.g_adj, 0.2);
        assert_eq!(cfg.mapper.mapper, MapperKind::ConventionalTc);
        assert_eq!(cfg.binning.epsilon_c, 0.4);
    }

    #[test]
    fn bad_override_value_is_a_config_error() {
        let err = FullConfig::parse_with_overrides("", &[("chip.rows".into(), "eight".into())])
            .unwrap_err();
        assert!(matches!(err, TcError::Config(_)));
    }

    #[test]
    fn calibrate_keyword_round_trips() {
        let cfg = FullConfig::from_toml_str("[reliability]\na_tc = \"calibrate\"\n").unwrap();
        assert!(cfg.tc_params().is_ok());
        let bad = FullConfig::from_toml_str("[reliability]\na_tc = \"guess\"\n").unwrap();
        assert!(bad.tc_params().is_err());
    }

    #[test]
    fn sim_config_validates_sampling() {
        let cfg =
            FullConfig::parse_with_overrides("", &[("thermal.sample_period_s".into(), "0.015".into())])
                .unwrap();
        assert!(cfg.sim_config(1).is_err());
    }

    #[test]
    fn workload_requires_a_source() {
        let cfg = FullConfig::from_toml_str("").unwrap();
        assert!(cfg.build_workload(Path::new("."), None, 1).is_err());
        let cfg = FullConfig::from_toml_str("[workload.synthetic]\nn_apps = 1\n").unwrap();
        let (w, path) = cfg.build_workload(Path::new("."), None, 1).unwrap();
        assert_eq!(w.tasks.len(), 4);
        assert!(path.is_none());
    }
}
