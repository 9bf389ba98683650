//! Lifetime models: rainflow cycle extraction from temperature traces,
//! thermal-cycling MTTF with Miner's-rule damage accumulation, and relative
//! NBTI/HCI/EM aging indices.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TcError};
use crate::thermal::TemperatureTrace;

/// Boltzmann constant in eV/K.
pub const BOLTZMANN_EV_PER_K: f64 = 8.62e-5;
pub const KELVIN_OFFSET: f64 = 273.15;
pub const SECONDS_PER_HOUR: f64 = 3600.0;
/// One year is taken as 8760 hours.
pub const SECONDS_PER_YEAR: f64 = 8760.0 * SECONDS_PER_HOUR;

/// One extracted thermal cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalCycle {
    /// Cycle amplitude (range) in C.
    pub delta_t_c: f64,
    /// Maximum temperature reached within the cycle, C.
    pub t_max_c: f64,
    /// Time between the two extrema defining the cycle, s.
    pub duration_s: f64,
    /// 1.0 for a full cycle, 0.5 for a residue half cycle.
    pub weight: f64,
}

/// All cycles extracted from one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSet {
    pub cycles: Vec<ThermalCycle>,
    /// Span of the source trace, s.
    pub total_time_s: f64,
}

impl CycleSet {
    /// Effective cycle count: sum of weights.
    pub fn m(&self) -> f64 {
        self.cycles.iter().map(|c| c.weight).sum()
    }
}

/// Coffin-Manson / Arrhenius parameters for thermal cycling.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TcParams {
    /// Empirical scale factor.
    pub a_tc: f64,
    /// Coffin-Manson exponent.
    pub b: f64,
    /// Threshold amplitude below which no inelastic deformation occurs, C.
    pub t_th_c: f64,
    /// Activation energy, eV.
    pub e_a_ev: f64,
}

impl TcParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_tc > 0.0) || !(self.b > 0.0) || !(self.e_a_ev > 0.0) {
            return Err(TcError::Validation(format!(
                "thermal-cycling parameters must be positive: a_tc={} b={} e_a_ev={}",
                self.a_tc, self.b, self.e_a_ev
            )));
        }
        Ok(())
    }
}

/// Reference point used to fix the empirical scale `a_tc`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationSpec {
    pub target_years: f64,
    pub delta_t_c: f64,
    pub t_max_c: f64,
    /// Cycle count of the reference scenario. Cancels in the closed form
    /// (MTTF of m identical cycles is independent of m) but kept so the
    /// reference point is stated in full.
    pub m: f64,
    pub cycle_hours: f64,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        CalibrationSpec {
            target_years: 10.0,
            delta_t_c: 20.0,
            t_max_c: 70.0,
            m: 10.0,
            cycle_hours: 1.0,
        }
    }
}

/// NBTI fitting parameters. The defaults are literature fitting constants
/// for the log-based NBTI lifetime form, not values from any one chip.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct NbtiParams {
    pub a: f64,
    /// eV.
    pub b_ev: f64,
    pub c: f64,
    /// eV; may be negative.
    pub d_ev: f64,
    pub beta: f64,
}

impl Default for NbtiParams {
    fn default() -> Self {
        NbtiParams {
            a: 1.6328,
            b_ev: 0.07377,
            c: 0.01,
            d_ev: -0.06852,
            beta: 0.3,
        }
    }
}

/// HCI parameters: substrate current, transistor width, power-law exponent,
/// activation energy.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct HciParams {
    pub i_sub_a: f64,
    pub width_m: f64,
    pub n: f64,
    pub q_ev: f64,
}

impl Default for HciParams {
    fn default() -> Self {
        HciParams {
            i_sub_a: 1.0e-4,
            width_m: 1.0e-6,
            n: 3.0,
            q_ev: 0.1,
        }
    }
}

/// EM parameters: contact current, power-law exponent in [1, 2], activation
/// energy.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct EmParams {
    pub i_a: f64,
    pub n: f64,
    pub q_ev: f64,
}

impl Default for EmParams {
    fn default() -> Self {
        EmParams {
            i_a: 1.0e-3,
            n: 2.0,
            q_ev: 0.9,
        }
    }
}

/// All aging-index parameters plus the normalization temperature.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct AgingParams {
    pub nbti: NbtiParams,
    pub hci: HciParams,
    pub em: EmParams,
    /// Indices are normalized to 1 at this temperature.
    pub t_ref_c: f64,
}

impl Default for AgingParams {
    fn default() -> Self {
        AgingParams {
            nbti: NbtiParams::default(),
            hci: HciParams::default(),
            em: EmParams::default(),
            t_ref_c: 45.0,
        }
    }
}

impl AgingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.em.n >= 1.0 && self.em.n <= 2.0) {
            return Err(TcError::Validation(format!(
                "em exponent n must lie in [1, 2], got {}",
                self.em.n
            )));
        }
        for (name, v) in [
            ("hci q_ev", self.hci.q_ev),
            ("em q_ev", self.em.q_ev),
            ("nbti b_ev", self.nbti.b_ev),
            ("nbti beta", self.nbti.beta),
            ("nbti a", self.nbti.a),
            ("nbti c", self.nbti.c),
        ] {
            if !(v > 0.0) {
                return Err(TcError::Validation(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn kelvin(t_c: f64) -> f64 {
    t_c + KELVIN_OFFSET
}

/// Compress a sampled trace to its alternating local extrema.
///
/// Runs of equal values keep their first sample; interior points continuing
/// a monotone run are dropped. The first and last samples always survive
/// (after deduplication), so inserting collinear samples never changes the
/// result.
fn compress_to_extrema(samples: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for &(t, v) in samples {
        if let Some(&(_, last)) = out.last() {
            if v == last {
                continue;
            }
        }
        // Drop the middle point of a monotone run.
        while out.len() >= 2 {
            let a = out[out.len() - 2].1;
            let b = out[out.len() - 1].1;
            if (b - a).signum() == (v - b).signum() {
                out.pop();
            } else {
                break;
            }
        }
        out.push((t, v));
    }
    out
}

fn cycle_from(a: (f64, f64), b: (f64, f64), weight: f64) -> ThermalCycle {
    ThermalCycle {
        delta_t_c: (a.1 - b.1).abs(),
        t_max_c: a.1.max(b.1),
        duration_s: b.0 - a.0,
        weight,
    }
}

/// Rainflow-count a temperature trace.
///
/// The trace is first compressed to alternating extrema. Whenever a range
/// between consecutive extrema is flanked by two ranges at least as large,
/// its two defining points are extracted as one full cycle. The remaining
/// residue is counted pairwise as half cycles. Each cycle records its
/// amplitude, its higher endpoint, and the time between its two extrema.
pub fn rainflow_count(trace: &TemperatureTrace) -> Result<CycleSet> {
    if trace.samples.is_empty() {
        return Err(TcError::EmptyTrace(trace.core_id));
    }
    let total_time_s = trace.samples.last().unwrap().0 - trace.samples[0].0;
    let extrema = compress_to_extrema(&trace.samples);

    let mut cycles = Vec::new();
    let mut stack: Vec<(f64, f64)> = Vec::with_capacity(extrema.len());
    for point in extrema {
        stack.push(point);
        while stack.len() >= 4 {
            let k = stack.len();
            let r1 = (stack[k - 4].1 - stack[k - 3].1).abs();
            let r2 = (stack[k - 3].1 - stack[k - 2].1).abs();
            let r3 = (stack[k - 2].1 - stack[k - 1].1).abs();
            if r2 <= r1 && r2 <= r3 {
                cycles.push(cycle_from(stack[k - 3], stack[k - 2], 1.0));
                stack.remove(k - 2);
                stack.remove(k - 3);
            } else {
                break;
            }
        }
    }
    for pair in stack.windows(2) {
        cycles.push(cycle_from(pair[0], pair[1], 0.5));
    }
    Ok(CycleSet {
        cycles,
        total_time_s,
    })
}

/// Coffin-Manson cycles-to-failure for one cycle:
/// `N = a_tc (dT - T_th)^-b exp(E_a / (k T_max))` with `T_max` in Kelvin.
pub fn cycles_to_failure(cycle: &ThermalCycle, p: &TcParams) -> Result<f64> {
    if cycle.delta_t_c <= p.t_th_c {
        return Err(TcError::AmplitudeBelowThreshold {
            delta_t_c: cycle.delta_t_c,
            t_th_c: p.t_th_c,
        });
    }
    let arrhenius = (p.e_a_ev / (BOLTZMANN_EV_PER_K * kelvin(cycle.t_max_c))).exp();
    Ok(p.a_tc * (cycle.delta_t_c - p.t_th_c).powf(-p.b) * arrhenius)
}

/// Thermal-cycling MTTF of a cycle set, in seconds.
///
/// Damage accumulates linearly: `D = sum_i weight_i / N_i` over cycles whose
/// amplitude exceeds the threshold (sub-threshold cycles contribute zero
/// damage). The MTTF is the observed span divided by the damage accrued in
/// it; with zero damage it is infinite. For m identical back-to-back cycles
/// this reduces to `N * sum(t_i) / m`.
pub fn mttf_tc(cs: &CycleSet, p: &TcParams) -> f64 {
    let damage: f64 = cs
        .cycles
        .iter()
        .filter(|c| c.delta_t_c > p.t_th_c)
        .map(|c| c.weight / cycles_to_failure(c, p).expect("amplitude filtered above threshold"))
        .sum();
    if damage == 0.0 {
        f64::INFINITY
    } else {
        cs.total_time_s / damage
    }
}

/// Invert the Coffin-Manson relation so that the reference scenario in
/// `spec` comes out at exactly its target MTTF:
/// `a_tc = (target / cycle_duration) * (dT - T_th)^b / exp(E_a / (k T_max))`.
pub fn calibrate_atc(spec: &CalibrationSpec, e_a_ev: f64, b: f64, t_th_c: f64) -> Result<f64> {
    if spec.delta_t_c <= t_th_c {
        return Err(TcError::Domain(format!(
            "calibration amplitude {} C must exceed the threshold {} C",
            spec.delta_t_c, t_th_c
        )));
    }
    if !(spec.target_years > 0.0) || !(spec.cycle_hours > 0.0) || !(spec.m > 0.0) {
        return Err(TcError::Domain(
            "calibration target, cycle duration, and cycle count must be positive".into(),
        ));
    }
    let n_needed = spec.target_years * SECONDS_PER_YEAR / (spec.cycle_hours * SECONDS_PER_HOUR);
    let arrhenius = (e_a_ev / (BOLTZMANN_EV_PER_K * kelvin(spec.t_max_c))).exp();
    Ok(n_needed * (spec.delta_t_c - t_th_c).powf(b) / arrhenius)
}

/// Un-normalized NBTI lifetime proportionality at a temperature.
pub fn nbti_mttf_raw(t_c: f64, p: &NbtiParams) -> Result<f64> {
    let t_k = kelvin(t_c);
    let kt = BOLTZMANN_EV_PER_K * t_k;
    let x = p.a / (1.0 + 2.0 * (p.b_ev / kt).exp());
    if x <= p.c {
        return Err(TcError::Domain(format!(
            "nbti log argument non-positive at {t_c} C: A/(1+2e^(B/kT)) = {x} <= C = {}",
            p.c
        )));
    }
    let bracket = x.ln() - (x - p.c).ln();
    Ok((bracket * t_k / (p.d_ev / kt).exp()).powf(1.0 / p.beta))
}

/// NBTI lifetime index, normalized to 1 at the reference temperature.
pub fn nbti_index(t_c: f64, p: &AgingParams) -> Result<f64> {
    Ok(nbti_mttf_raw(t_c, &p.nbti)? / nbti_mttf_raw(p.t_ref_c, &p.nbti)?)
}

/// Un-normalized HCI lifetime proportionality: `(I_sub/W)^-n exp(Q/kT)`.
pub fn hci_mttf_raw(t_c: f64, p: &HciParams) -> Result<f64> {
    if !(p.i_sub_a > 0.0) || !(p.width_m > 0.0) {
        return Err(TcError::Domain(format!(
            "hci current and width must be positive: i_sub={} w={}",
            p.i_sub_a, p.width_m
        )));
    }
    let kt = BOLTZMANN_EV_PER_K * kelvin(t_c);
    Ok((p.i_sub_a / p.width_m).powf(-p.n) * (p.q_ev / kt).exp())
}

/// HCI lifetime index, normalized to 1 at the reference temperature.
pub fn hci_index(t_c: f64, p: &AgingParams) -> Result<f64> {
    Ok(hci_mttf_raw(t_c, &p.hci)? / hci_mttf_raw(p.t_ref_c, &p.hci)?)
}

/// Un-normalized EM lifetime proportionality: `I^-n exp(Q/kT)`.
pub fn em_mttf_raw(t_c: f64, p: &EmParams) -> Result<f64> {
    if !(p.i_a > 0.0) {
        return Err(TcError::Domain(format!(
            "em current must be positive: i={}",
            p.i_a
        )));
    }
    let kt = BOLTZMANN_EV_PER_K * kelvin(t_c);
    Ok(p.i_a.powf(-p.n) * (p.q_ev / kt).exp())
}

/// EM lifetime index, normalized to 1 at the reference temperature.
pub fn em_index(t_c: f64, p: &AgingParams) -> Result<f64> {
    Ok(em_mttf_raw(t_c, &p.em)? / em_mttf_raw(p.t_ref_c, &p.em)?)
}
