//! Lumped-RC thermal model of the tile mesh.
//!
//! Each tile is a single thermal node with capacitance `c_tile`, a
//! conductance `g_amb` to ambient, and a conductance `g_adj` to each of its
//! 4 mesh neighbors. Transient behavior uses explicit Euler stepping;
//! steady states come from a direct dense solve of `(g_amb I + L) rise = P`
//! where `L` is the weighted neighbor Laplacian.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TcError};
use crate::platform::ChipModel;

/// Thermal network parameters. Construction enforces the explicit-Euler
/// stability bound `dt <= 0.5 * c_tile / (g_amb + 4 g_adj)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThermalParams {
    pub t_ambient_c: f64,
    /// Tile heat capacity (J/K).
    pub c_tile: f64,
    /// Tile-to-ambient conductance (W/K).
    pub g_amb: f64,
    /// Tile-to-neighbor conductance (W/K).
    pub g_adj: f64,
    /// Integration step (s).
    pub dt_s: f64,
}

impl ThermalParams {
    pub fn new(t_ambient_c: f64, c_tile: f64, g_amb: f64, g_adj: f64, dt_s: f64) -> Result<Self> {
        let p = ThermalParams {
            t_ambient_c,
            c_tile,
            g_amb,
            g_adj,
            dt_s,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_tile > 0.0) || !(self.g_amb > 0.0) || !(self.g_adj >= 0.0) {
            return Err(TcError::Validation(format!(
                "thermal parameters out of range: c_tile={} g_amb={} g_adj={}",
                self.c_tile, self.g_amb, self.g_adj
            )));
        }
        if !(self.dt_s > 0.0) {
            return Err(TcError::Validation(format!(
                "thermal dt must be > 0, got {}",
                self.dt_s
            )));
        }
        let limit = self.stability_limit();
        if self.dt_s > limit {
            return Err(TcError::Validation(format!(
                "thermal dt {} s exceeds the explicit-Euler stability bound {} s",
                self.dt_s, limit
            )));
        }
        Ok(())
    }

    /// Largest stable step: `0.5 * c_tile / (g_amb + 4 g_adj)`.
    pub fn stability_limit(&self) -> f64 {
        0.5 * self.c_tile / (self.g_amb + 4.0 * self.g_adj)
    }
}

impl Default for ThermalParams {
    fn default() -> Self {
        ThermalParams {
            t_ambient_c: 45.0,
            c_tile: 0.03,
            g_amb: 0.5,
            g_adj: 0.125,
            dt_s: 0.01,
        }
    }
}

/// Per-tile temperatures at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    pub temps_c: Vec<f64>,
    pub time_s: f64,
}

impl ThermalState {
    /// All tiles at ambient, time zero.
    pub fn at_ambient(n: usize, params: &ThermalParams) -> Self {
        ThermalState {
            temps_c: vec![params.t_ambient_c; n],
            time_s: 0.0,
        }
    }
}

/// Sampled temperature history of one core: `(time_s, temp_c)` pairs at a
/// constant sampling period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureTrace {
    pub core_id: usize,
    pub samples: Vec<(f64, f64)>,
}

impl TemperatureTrace {
    pub fn mean_temp_c(&self) -> f64 {
        if self.samples.is_empty() {
            return f64::NAN;
        }
        self.samples.iter().map(|&(_, t)| t).sum::<f64>() / self.samples.len() as f64
    }
}

/// One explicit-Euler step:
/// `T' = T + dt/c * (P - g_amb (T - T_amb) - g_adj * sum_j (T - T_j))`.
pub fn step(
    state: &ThermalState,
    powers_w: &[f64],
    params: &ThermalParams,
    chip: &ChipModel,
) -> Result<ThermalState> {
    let n = chip.core_count();
    if state.temps_c.len() != n || powers_w.len() != n {
        return Err(TcError::Dimension(format!(
            "expected {n} tiles, got {} temps and {} powers",
            state.temps_c.len(),
            powers_w.len()
        )));
    }
    let t = &state.temps_c;
    let scale = params.dt_s / params.c_tile;
    let temps_c = (0..n)
        .map(|i| {
            let exchange: f64 = chip.dims.neighbors(i).map(|j| t[i] - t[j]).sum();
            t[i] + scale
                * (powers_w[i] - params.g_amb * (t[i] - params.t_ambient_c)
                    - params.g_adj * exchange)
        })
        .collect();
    Ok(ThermalState {
        temps_c,
        time_s: state.time_s + params.dt_s,
    })
}

/// The steady-state system matrix `g_amb I + L` (symmetric positive
/// definite for `g_amb > 0`).
pub(crate) fn system_matrix(chip: &ChipModel, params: &ThermalParams) -> DMatrix<f64> {
    let n = chip.core_count();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut degree = 0.0;
        for j in chip.dims.neighbors(i) {
            m[(i, j)] = -params.g_adj;
            degree += params.g_adj;
        }
        m[(i, i)] = params.g_amb + degree;
    }
    m
}

/// Cached Cholesky factorization of the steady-state system for one chip.
/// Reuse it when solving for many power vectors.
pub struct SteadySolver {
    chol: Cholesky<f64, Dyn>,
    t_ambient_c: f64,
    n: usize,
}

impl SteadySolver {
    pub fn new(chip: &ChipModel, params: &ThermalParams) -> Result<Self> {
        params.validate()?;
        let m = system_matrix(chip, params);
        let chol = m.cholesky().ok_or_else(|| {
            TcError::Validation("thermal system matrix is not positive definite".into())
        })?;
        Ok(SteadySolver {
            chol,
            t_ambient_c: params.t_ambient_c,
            n: chip.core_count(),
        })
    }

    /// Absolute steady temperatures for the given power vector.
    pub fn solve(&self, powers_w: &[f64]) -> Result<Vec<f64>> {
        if powers_w.len() != self.n {
            return Err(TcError::Dimension(format!(
                "expected {} powers, got {}",
                self.n,
                powers_w.len()
            )));
        }
        let rise = self.chol.solve(&DVector::from_column_slice(powers_w));
        Ok(rise.iter().map(|r| self.t_ambient_c + r).collect())
    }
}

/// Direct steady-state solve for a single power vector.
pub fn steady_state(powers_w: &[f64], params: &ThermalParams, chip: &ChipModel) -> Result<Vec<f64>> {
    SteadySolver::new(chip, params)?.solve(powers_w)
}
