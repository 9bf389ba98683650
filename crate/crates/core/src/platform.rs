//! Mesh chip model: grid geometry, process variation, and per-core maximum
//! frequencies derived from it.
//!
//! The chip is a rows x cols mesh of homogeneous tiles. Manufacturing
//! variation is modeled as a per-tile scalar `p` drawn from a clamped normal
//! distribution; wire width/height, grid resistance, and the maximum safe
//! frequency of every tile are linear in `p`, with the frequency taking the
//! minimum `p` over the tile's critical-path cell set.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TcError};

/// Clamp bounds for process-variation samples.
pub const PV_MIN: f64 = 0.5;
pub const PV_MAX: f64 = 1.5;

/// Mesh dimensions. `rows * cols` is the core count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub rows: usize,
    pub cols: usize,
}

impl GridDims {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(TcError::Validation(format!(
                "grid dimensions must be positive, got {rows}x{cols}"
            )));
        }
        Ok(GridDims { rows, cols })
    }

    pub fn core_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Grid coordinates (x, y) of a core id, row-major with x = column.
    pub fn pos_of(&self, id: usize) -> (usize, usize) {
        (id % self.cols, id / self.cols)
    }

    pub fn id_of(&self, x: usize, y: usize) -> usize {
        y * self.cols + x
    }

    /// Tile id closest to the geometric center of the mesh.
    pub fn center_id(&self) -> usize {
        self.id_of(self.cols / 2, self.rows / 2)
    }

    /// 4-neighborhood of a core id, in ascending id order.
    pub fn neighbors(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        let (x, y) = self.pos_of(id);
        let up = (y > 0).then(|| self.id_of(x, y - 1));
        let left = (x > 0).then(|| self.id_of(x - 1, y));
        let right = (x + 1 < self.cols).then(|| self.id_of(x + 1, y));
        let down = (y + 1 < self.rows).then(|| self.id_of(x, y + 1));
        [up, left, right, down].into_iter().flatten()
    }
}

/// Per-tile process-variation values, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvGrid {
    pub dims: GridDims,
    pub p: Vec<f64>,
    pub seed: u64,
}

impl PvGrid {
    pub fn value_at(&self, x: usize, y: usize) -> f64 {
        self.p[self.dims.id_of(x, y)]
    }
}

/// Technology constants scaling the variation value into physical parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TechConstants {
    /// Wire width per unit p.
    pub kappa1: f64,
    /// Wire height per unit p.
    pub kappa2: f64,
    /// Power grid resistance per unit p (ohm).
    pub gamma: f64,
    /// Frequency per unit p (Hz).
    pub beta_hz: f64,
}

impl TechConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("gamma", self.gamma),
            ("beta_hz", self.beta_hz),
        ] {
            if !(v > 0.0) {
                return Err(TcError::Validation(format!(
                    "technology constant {name} must be > 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for TechConstants {
    fn default() -> Self {
        TechConstants {
            kappa1: 1.0,
            kappa2: 1.0,
            gamma: 1.0,
            beta_hz: 3.0e9,
        }
    }
}

/// One mesh tile and its variation-derived parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tile {
    pub id: usize,
    /// Grid coordinates (x, y).
    pub pos: (usize, usize),
    /// Maximum safe operating frequency (Hz).
    pub f_max_hz: f64,
    pub wire_width: f64,
    pub wire_height: f64,
    pub grid_resistance: f64,
}

/// The whole chip: geometry plus derived tiles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChipModel {
    pub dims: GridDims,
    pub tiles: Vec<Tile>,
    pub tech: TechConstants,
    /// Radius of the critical-path cell set around each tile (0 = the tile
    /// itself).
    pub critical_path_radius: usize,
}

impl ChipModel {
    pub fn new(pv: &PvGrid, tech: TechConstants, critical_path_radius: usize) -> Result<Self> {
        tech.validate()?;
        let tiles = derive_tile_parameters(pv, &tech, critical_path_radius);
        Ok(ChipModel {
            dims: pv.dims,
            tiles,
            tech,
            critical_path_radius,
        })
    }

    pub fn core_count(&self) -> usize {
        self.dims.core_count()
    }

    pub fn position_of(&self, core_id: usize) -> (usize, usize) {
        self.tiles[core_id].pos
    }

    pub fn frequencies_hz(&self) -> Vec<f64> {
        self.tiles.iter().map(|t| t.f_max_hz).collect()
    }

    /// Critical-path cell set of the tile at (x, y): all grid cells within
    /// `critical_path_radius` Manhattan hops, clipped to the mesh. Always
    /// contains (x, y) itself.
    pub fn critical_path_cells(&self, x: usize, y: usize) -> Vec<(usize, usize)> {
        critical_path_cells(self.dims, (x, y), self.critical_path_radius)
    }
}

fn critical_path_cells(
    dims: GridDims,
    center: (usize, usize),
    radius: usize,
) -> Vec<(usize, usize)> {
    let mut cells = Vec::new();
    for y in 0..dims.rows {
        for x in 0..dims.cols {
            if manhattan_distance((x, y), center) <= radius {
                cells.push((x, y));
            }
        }
    }
    cells
}

/// Draw a per-tile variation grid: i.i.d. Normal(1, sigma) clamped to
/// [0.5, 1.5], sampled in core-id order from a ChaCha8 stream so the same
/// seed always reproduces the same grid bit for bit.
pub fn generate_pv_grid(dims: GridDims, sigma: f64, seed: u64) -> Result<PvGrid> {
    if !(sigma >= 0.0) {
        return Err(TcError::Validation(format!(
            "pv sigma must be >= 0, got {sigma}"
        )));
    }
    let normal = Normal::new(1.0, sigma)
        .map_err(|e| TcError::Validation(format!("bad pv distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = (0..dims.core_count())
        .map(|_| normal.sample(&mut rng).clamp(PV_MIN, PV_MAX))
        .collect();
    Ok(PvGrid { dims, p, seed })
}

/// Derive per-tile physical parameters and the maximum frequency from the
/// variation grid. The frequency is beta times the minimum p over the tile's
/// critical-path cells.
pub fn derive_tile_parameters(
    pv: &PvGrid,
    tech: &TechConstants,
    critical_path_radius: usize,
) -> Vec<Tile> {
    let dims = pv.dims;
    (0..dims.core_count())
        .map(|id| {
            let pos = dims.pos_of(id);
            let p = pv.p[id];
            let p_min = critical_path_cells(dims, pos, critical_path_radius)
                .into_iter()
                .map(|(sx, sy)| pv.value_at(sx, sy))
                .fold(f64::INFINITY, f64::min);
            Tile {
                id,
                pos,
                f_max_hz: tech.beta_hz * p_min,
                wire_width: tech.kappa1 * p,
                wire_height: tech.kappa2 * p,
                grid_resistance: tech.gamma * p,
            }
        })
        .collect()
}

/// Manhattan distance between two mesh positions.
pub fn manhattan_distance(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}
