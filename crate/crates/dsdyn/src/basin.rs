//! Basin-of-attraction maps: classify a rectangular grid of section initial
//! conditions in parallel, summarize the result, and estimate the fractal
//! dimension of basin boundaries by box counting.

use crate::error::{Error, Result};
use crate::model::{ModelParams, State2};
use crate::poincare::{classify_unchecked, AttractorClass, PoincareOptions};
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Rectangular window and resolution of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub nx: usize,
    pub ny: usize,
}

/// Default window: slightly beyond twice the saddle separation, framing the
/// whole separatrix structure.
pub const DEFAULT_WINDOW: (f64, f64) = (-6.0, 6.0);
pub const DEFAULT_RESOLUTION: usize = 150;

impl GridSpec {
    pub fn new(p_min: f64, p_max: f64, q_min: f64, q_max: f64, nx: usize, ny: usize) -> Result<Self> {
        let grid = Self {
            p_min,
            p_max,
            q_min,
            q_max,
            nx,
            ny,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn square(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(lo, hi, lo, hi, n, n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_min < self.p_max) || !(self.q_min < self.q_max) {
            return Err(Error::InvalidGrid(format!(
                "window must be non-empty: p [{}, {}], q [{}, {}]",
                self.p_min, self.p_max, self.q_min, self.q_max
            )));
        }
        if !self.p_min.is_finite()
            || !self.p_max.is_finite()
            || !self.q_min.is_finite()
            || !self.q_max.is_finite()
        {
            return Err(Error::InvalidGrid("window bounds must be finite".into()));
        }
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::InvalidGrid(format!(
                "resolution must be at least 2x2, got {}x{}",
                self.nx, self.ny
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Center of cell `(i, j)`; sampling at centers keeps the sweep unbiased
    /// with respect to the window edges.
    pub fn cell_center(&self, i: usize, j: usize) -> State2 {
        State2::new(
            self.p_min + (i as f64 + 0.5) * (self.p_max - self.p_min) / self.nx as f64,
            self.q_min + (j as f64 + 0.5) * (self.q_max - self.q_min) / self.ny as f64,
        )
    }
}

/// Per-cell outcome code. The numeric codes are the on-disk format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum CellClass {
    Undecided = 0,
    Periodic = 1,
    EscapePositive = 2,
    EscapeNegative = 3,
}

impl CellClass {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(CellClass::Undecided),
            1 => Ok(CellClass::Periodic),
            2 => Ok(CellClass::EscapePositive),
            3 => Ok(CellClass::EscapeNegative),
            other => Err(Error::MalformedCsv(format!("unknown class code {other}"))),
        }
    }
}

/// A classified grid. `classes` and `periods` are row-major with `j` outer:
/// index `j * nx + i`. `periods` is nonzero exactly on periodic cells.
#[derive(Debug, Clone, PartialEq)]
pub struct BasinMap {
    pub grid: GridSpec,
    pub classes: Vec<CellClass>,
    pub periods: Vec<u32>,
    pub params: ModelParams,
    pub opts: PoincareOptions,
}

impl BasinMap {
    pub fn class_at(&self, i: usize, j: usize) -> CellClass {
        self.classes[j * self.grid.nx + i]
    }

    pub fn period_at(&self, i: usize, j: usize) -> u32 {
        self.periods[j * self.grid.nx + i]
    }
}

/// Classify every cell center of `grid`. Cells are independent, so the sweep
/// runs data-parallel; the output is deterministic and identical to a serial
/// pass regardless of scheduling.
pub fn compute_basin(
    params: &ModelParams,
    grid: &GridSpec,
    opts: &PoincareOptions,
) -> Result<BasinMap> {
    grid.validate()?;
    opts.validate(params)?;
    let nx = grid.nx;
    let cells: Vec<(CellClass, u32)> = (0..grid.cells())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % nx, idx / nx);
            match classify_unchecked(params, grid.cell_center(i, j), opts) {
                AttractorClass::Periodic { period, .. } => (CellClass::Periodic, period as u32),
                AttractorClass::Escape { sign, .. } => match sign.as_i8() {
                    1 => (CellClass::EscapePositive, 0),
                    _ => (CellClass::EscapeNegative, 0),
                },
                AttractorClass::Undecided { .. } => (CellClass::Undecided, 0),
            }
        })
        .collect();
    let (classes, periods) = cells.into_iter().unzip();
    Ok(BasinMap {
        grid: *grid,
        classes,
        periods,
        params: *params,
        opts: *opts,
    })
}

/// Exact per-class and per-period cell counts of a map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasinSummary {
    pub cells: usize,
    pub undecided: usize,
    pub periodic: usize,
    pub escape_positive: usize,
    pub escape_negative: usize,
    /// Periodic cells keyed by their period.
    pub period_counts: BTreeMap<u32, usize>,
}

pub fn basin_summary(map: &BasinMap) -> BasinSummary {
    let mut summary = BasinSummary {
        cells: map.classes.len(),
        undecided: 0,
        periodic: 0,
        escape_positive: 0,
        escape_negative: 0,
        period_counts: BTreeMap::new(),
    };
    for (class, period) in map.classes.iter().zip(&map.periods) {
        match class {
            CellClass::Undecided => summary.undecided += 1,
            CellClass::Periodic => {
                summary.periodic += 1;
                *summary.period_counts.entry(*period).or_insert(0) += 1;
            }
            CellClass::EscapePositive => summary.escape_positive += 1,
            CellClass::EscapeNegative => summary.escape_negative += 1,
        }
    }
    summary
}

impl BasinSummary {
    pub fn period_cells(&self, period: u32) -> usize {
        self.period_counts.get(&period).copied().unwrap_or(0)
    }
}

/// Box-count estimate of the boundary dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxCountResult {
    pub scales: Vec<usize>,
    pub counts: Vec<usize>,
    /// Least-squares slope of `log N` against `log (1/s)`.
    pub dimension: f64,
    pub r_squared: f64,
}

/// Scales from the supported set that tile the given grid exactly.
pub const SUPPORTED_SCALES: [usize; 5] = [1, 2, 4, 8, 16];

pub fn dividing_scales(nx: usize, ny: usize) -> Vec<usize> {
    SUPPORTED_SCALES
        .iter()
        .copied()
        .filter(|s| nx % s == 0 && ny % s == 0)
        .collect()
}

/// Cells adjacent (4-neighborhood) to a cell of a different class.
pub fn boundary_cells(map: &BasinMap) -> Vec<bool> {
    let (nx, ny) = (map.grid.nx, map.grid.ny);
    let mut boundary = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let class = map.classes[j * nx + i];
            let differs = (i > 0 && map.classes[j * nx + i - 1] != class)
                || (i + 1 < nx && map.classes[j * nx + i + 1] != class)
                || (j > 0 && map.classes[(j - 1) * nx + i] != class)
                || (j + 1 < ny && map.classes[(j + 1) * nx + i] != class);
            boundary[j * nx + i] = differs;
        }
    }
    boundary
}

/// Count boundary-touching boxes at each coarsening scale and fit the
/// dimension. Scales must divide the grid; the map needs at least 64x64
/// cells for the fit to mean anything.
pub fn box_count_boundary(map: &BasinMap, scales: &[usize]) -> Result<BoxCountResult> {
    let (nx, ny) = (map.grid.nx, map.grid.ny);
    if nx < 64 || ny < 64 {
        return Err(Error::InvalidGrid(format!(
            "box counting needs at least a 64x64 map, got {nx}x{ny}"
        )));
    }
    let mut scales: Vec<usize> = scales.to_vec();
    scales.sort_unstable();
    scales.dedup();
    if scales.len() < 2 {
        return Err(Error::InvalidOptions(
            "box counting needs at least two distinct scales".into(),
        ));
    }
    for &s in &scales {
        if !SUPPORTED_SCALES.contains(&s) {
            return Err(Error::InvalidOptions(format!(
                "unsupported box scale {s}; choose from {SUPPORTED_SCALES:?}"
            )));
        }
        if nx % s != 0 || ny % s != 0 {
            return Err(Error::InvalidOptions(format!(
                "box scale {s} does not divide the {nx}x{ny} grid"
            )));
        }
    }

    let boundary = boundary_cells(map);
    if !boundary.iter().any(|&b| b) {
        return Err(Error::DegenerateBoundary);
    }

    let mut counts = Vec::with_capacity(scales.len());
    for &s in &scales {
        let mut count = 0usize;
        for bj in 0..(ny / s) {
            for bi in 0..(nx / s) {
                let mut hit = false;
                'cells: for j in (bj * s)..((bj + 1) * s) {
                    for i in (bi * s)..((bi + 1) * s) {
                        if boundary[j * nx + i] {
                            hit = true;
                            break 'cells;
                        }
                    }
                }
                if hit {
                    count += 1;
                }
            }
        }
        counts.push(count);
    }

    let xs: Vec<f64> = scales.iter().map(|&s| -(s as f64).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let (dimension, r_squared) = least_squares_slope(&xs, &ys);
    Ok(BoxCountResult {
        scales,
        counts,
        dimension,
        r_squared,
    })
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let syy: f64 = ys.iter().map(|y| (y - y_mean).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r_squared)
}
