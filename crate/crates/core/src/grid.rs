//! Uniform grids, the discrete phase-space density, and its velocity marginal.
//!
//! Transport works on a tensor grid `x_grid ⊗ v_grid` (one space and one
//! velocity dimension). The density is stored as a dense array; evaluation
//! between nodes uses Keys cubic-convolution interpolation with zero extension
//! outside the box — valid because grids are sized from the a-priori
//! confinement radius so the true support never reaches the boundary.

use crate::{Error, Result};
use ndarray::Array2;

/// Closed uniform 1D grid with `len` nodes from `min` to `max` inclusive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1 {
    pub min: f64,
    pub step: f64,
    pub len: usize,
}

impl Grid1 {
    pub fn new(min: f64, max: f64, len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 nodes, got {len}"
            )));
        }
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid bounds must satisfy min < max, got [{min}, {max}]"
            )));
        }
        Ok(Grid1 {
            min,
            step: (max - min) / (len - 1) as f64,
            len,
        })
    }

    /// Symmetric grid [−half, half].
    pub fn symmetric(half: f64, len: usize) -> Result<Self> {
        Self::new(-half, half, len)
    }

    pub fn max(&self) -> f64 {
        self.min + self.step * (self.len - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.min + self.step * i as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.point(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max()
    }

    /// Fractional node coordinate of `x`.
    pub fn coord(&self, x: f64) -> f64 {
        (x - self.min) / self.step
    }

    pub fn approx_eq(&self, other: &Grid1) -> bool {
        self.len == other.len
            && (self.min - other.min).abs() <= 1e-12 * (1.0 + self.min.abs())
            && (self.step - other.step).abs() <= 1e-12 * self.step.abs()
    }
}

/// Keys cubic-convolution weights for fractional offset `t ∈ [0, 1)`.
#[inline]
pub fn keys_weights(t: f64) -> [f64; 4] {
    [
        ((-0.5 * t + 1.0) * t - 0.5) * t,
        (1.5 * t - 2.5) * t * t + 1.0,
        ((-1.5 * t + 2.0) * t + 0.5) * t,
        (0.5 * t - 0.5) * t * t,
    ]
}

/// Cubic interpolation of a 1D sample vector with zero extension.
pub fn cubic_interp_zero(values: &[f64], grid: &Grid1, x: f64) -> f64 {
    let u = grid.coord(x);
    let i0 = u.floor() as i64;
    let w = keys_weights(u - i0 as f64);
    let n = values.len() as i64;
    let mut acc = 0.0;
    for (k, wk) in w.iter().enumerate() {
        let idx = i0 - 1 + k as i64;
        if (0..n).contains(&idx) {
            acc += wk * values[idx as usize];
        }
    }
    acc
}

/// Linear interpolation with zero extension.
pub fn linear_interp_zero(values: &[f64], grid: &Grid1, x: f64) -> f64 {
    let u = grid.coord(x);
    let i0 = u.floor() as i64;
    let t = u - i0 as f64;
    let n = values.len() as i64;
    let at = |i: i64| -> f64 {
        if (0..n).contains(&i) {
            values[i as usize]
        } else {
            0.0
        }
    };
    at(i0) * (1.0 - t) + at(i0 + 1) * t
}

/// Tensor phase-space grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseGrid {
    pub x: Grid1,
    pub v: Grid1,
}

impl PhaseGrid {
    pub fn cell_area(&self) -> f64 {
        self.x.step * self.v.step
    }
}

/// Discrete phase-space density f(t, x_i, v_j) ≥ 0.
#[derive(Clone, Debug)]
pub struct PhaseSpaceState {
    pub grid: PhaseGrid,
    /// values[[i, j]] = f(x_i, v_j)
    pub values: Array2<f64>,
    pub time: f64,
}

impl PhaseSpaceState {
    pub fn zero(grid: PhaseGrid) -> Self {
        PhaseSpaceState {
            grid,
            values: Array2::zeros((grid.x.len, grid.v.len)),
            time: 0.0,
        }
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: PhaseGrid, f: F) -> Self {
        let values = Array2::from_shape_fn((grid.x.len, grid.v.len), |(i, j)| {
            f(grid.x.point(i), grid.v.point(j))
        });
        PhaseSpaceState {
            grid,
            values,
            time: 0.0,
        }
    }

    /// Riemann-sum mass Σ f ΔxΔv (exact for compactly supported samples).
    pub fn mass(&self) -> f64 {
        self.values.sum() * self.grid.cell_area()
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// `‖f‖_{L^p}` on the grid (p finite).
    pub fn lp_norm(&self, p: f64) -> f64 {
        (self
            .values
            .iter()
            .map(|&v| v.abs().powf(p))
            .sum::<f64>()
            * self.grid.cell_area())
        .powf(1.0 / p)
    }

    /// Velocity marginal ρ(x_i) = Δv Σ_j f.
    pub fn rho(&self) -> MacroDensity {
        let dv = self.grid.v.step;
        let values = self
            .values
            .rows()
            .into_iter()
            .map(|row| row.sum() * dv)
            .collect();
        MacroDensity {
            grid: self.grid.x,
            values,
        }
    }

    /// Bicubic point evaluation with zero extension outside the box.
    pub fn interp(&self, x: f64, v: f64) -> f64 {
        let ux = self.grid.x.coord(x);
        let uv = self.grid.v.coord(v);
        let ix = ux.floor() as i64;
        let iv = uv.floor() as i64;
        let wx = keys_weights(ux - ix as f64);
        let wv = keys_weights(uv - iv as f64);
        let (nx, nv) = (self.grid.x.len as i64, self.grid.v.len as i64);
        let mut acc = 0.0;
        for (a, wxa) in wx.iter().enumerate() {
            let i = ix - 1 + a as i64;
            if !(0..nx).contains(&i) {
                continue;
            }
            let mut row_acc = 0.0;
            for (b, wvb) in wv.iter().enumerate() {
                let j = iv - 1 + b as i64;
                if (0..nv).contains(&j) {
                    row_acc += wvb * self.values[[i as usize, j as usize]];
                }
            }
            acc += wxa * row_acc;
        }
        acc
    }

    /// Clamp interpolation undershoots to 0; returns the clipped mass.
    pub fn clip_negative(&mut self) -> f64 {
        let mut clipped = 0.0;
        for v in self.values.iter_mut() {
            if *v < 0.0 {
                clipped -= *v;
                *v = 0.0;
            }
        }
        clipped * self.grid.cell_area()
    }

    /// (∫|x|^k f, ∫|v|^k f).
    pub fn moment(&self, k: u32) -> (f64, f64) {
        let mut mx = 0.0;
        let mut mv = 0.0;
        for i in 0..self.grid.x.len {
            let xk = self.grid.x.point(i).abs().powi(k as i32);
            for j in 0..self.grid.v.len {
                let f = self.values[[i, j]];
                mx += xk * f;
                mv += self.grid.v.point(j).abs().powi(k as i32) * f;
            }
        }
        let a = self.grid.cell_area();
        (mx * a, mv * a)
    }

    pub fn same_grid(&self, other: &PhaseSpaceState) -> bool {
        self.grid.x.approx_eq(&other.grid.x) && self.grid.v.approx_eq(&other.grid.v)
    }
}

/// Macroscopic density ρ(x) = ∫ f dv on the x-grid.
#[derive(Clone, Debug)]
pub struct MacroDensity {
    pub grid: Grid1,
    pub values: Vec<f64>,
}

impl MacroDensity {
    pub fn zero(grid: Grid1) -> Self {
        MacroDensity {
            grid,
            values: vec![0.0; grid.len],
        }
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.step
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn l1_distance(&self, other: &MacroDensity) -> Result<f64> {
        if !self.grid.approx_eq(&other.grid) {
            return Err(Error::GridMismatch(
                "L¹ distance needs matching x-grids".into(),
            ));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.grid.step)
    }
}
