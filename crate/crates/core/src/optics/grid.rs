use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::OpticsError;

/// Transverse sampling grid, centered on the optical axis.
///
/// Sample `i` sits at `x = (i - (n-1)/2)·dx`, so the grid is symmetric under
/// point reflection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub extent_x: f64,
    pub extent_y: f64,
    pub samples_x: usize,
    pub samples_y: usize,
}

impl Default for Grid2D {
    fn default() -> Self {
        Grid2D { extent_x: 12.0, extent_y: 12.0, samples_x: 512, samples_y: 512 }
    }
}

impl Grid2D {
    pub fn new(extent_x: f64, extent_y: f64, samples_x: usize, samples_y: usize) -> Result<Self, OpticsError> {
        if !(extent_x > 0.0 && extent_y > 0.0) || !extent_x.is_finite() || !extent_y.is_finite() {
            return Err(OpticsError::InvalidGrid(format!("extent {extent_x}×{extent_y} µm")));
        }
        if samples_x < 2 || samples_y < 2 {
            return Err(OpticsError::InvalidGrid(format!("{samples_x}×{samples_y} samples")));
        }
        Ok(Grid2D { extent_x, extent_y, samples_x, samples_y })
    }

    pub fn square(extent: f64, samples: usize) -> Result<Self, OpticsError> {
        Self::new(extent, extent, samples, samples)
    }

    pub fn dx(&self) -> f64 {
        self.extent_x / self.samples_x as f64
    }

    pub fn dy(&self) -> f64 {
        self.extent_y / self.samples_y as f64
    }

    pub fn len(&self) -> usize {
        self.samples_x * self.samples_y
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - (self.samples_x as f64 - 1.0) / 2.0) * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        (j as f64 - (self.samples_y as f64 - 1.0) / 2.0) * self.dy()
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    /// Sample spacing must resolve a quarter wavelength.
    pub fn check_resolution(&self, wavelength_nm: f64) -> Result<(), OpticsError> {
        let limit_um = wavelength_nm * 1e-3 / 4.0;
        let spacing_um = self.dx().max(self.dy());
        if spacing_um > limit_um {
            return Err(OpticsError::GridTooCoarse { spacing_um, limit_um });
        }
        Ok(())
    }

    pub fn check_extent(&self, waist_um: f64) -> Result<(), OpticsError> {
        let extent_um = self.extent_x.min(self.extent_y);
        if extent_um < 6.0 * waist_um {
            return Err(OpticsError::GridTooSmall { extent_um, waist_um });
        }
        Ok(())
    }

    /// Fill a grid by evaluating `f(x, y)` at every sample, row-major in `y`.
    pub fn sample<F: Fn(f64, f64) -> Complex64>(&self, f: F) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.samples_y {
            let y = self.y(j);
            for i in 0..self.samples_x {
                out.push(f(self.x(i), y));
            }
        }
        out
    }
}

/// Complex scalar amplitude on a [`Grid2D`] at a fixed wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid2D,
    pub amplitude: Vec<Complex64>,
    pub wavelength_nm: f64,
}

impl ScalarField {
    pub fn new(grid: Grid2D, amplitude: Vec<Complex64>, wavelength_nm: f64) -> Self {
        assert_eq!(grid.len(), amplitude.len(), "amplitude does not match grid");
        ScalarField { grid, amplitude, wavelength_nm }
    }

    pub fn from_fn<F: Fn(f64, f64) -> Complex64>(grid: Grid2D, wavelength_nm: f64, f: F) -> Self {
        let amplitude = grid.sample(f);
        ScalarField { grid, amplitude, wavelength_nm }
    }

    /// Total power `∫|E|² dA`.
    pub fn power(&self) -> f64 {
        self.amplitude.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.cell_area()
    }

    pub fn normalized(mut self) -> Result<Self, super::OpticsError> {
        let p = self.power();
        if !(p > 0.0) || !p.is_finite() {
            return Err(super::OpticsError::ZeroPower);
        }
        let s = 1.0 / p.sqrt();
        self.amplitude.iter_mut().for_each(|a| *a *= s);
        Ok(self)
    }

    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.amplitude[j * self.grid.samples_x + i]
    }

    /// `∫ E dA`, used for parity checks.
    pub fn integral(&self) -> Complex64 {
        self.amplitude.iter().sum::<Complex64>() * self.grid.cell_area()
    }

    pub fn same_sampling(&self, other: &ScalarField) -> bool {
        self.grid == other.grid && (self.wavelength_nm - other.wavelength_nm).abs() < 1e-9
    }

    /// Fraction of power lying in the outer `band` fraction of each edge.
    pub fn boundary_power_fraction(&self, band: f64) -> f64 {
        let g = &self.grid;
        let bx = ((g.samples_x as f64 * band).ceil() as usize).max(1);
        let by = ((g.samples_y as f64 * band).ceil() as usize).max(1);
        let mut edge = 0.0;
        let mut total = 0.0;
        for j in 0..g.samples_y {
            for i in 0..g.samples_x {
                let p = self.amplitude[j * g.samples_x + i].norm_sqr();
                total += p;
                if i < bx || i >= g.samples_x - bx || j < by || j >= g.samples_y - by {
                    edge += p;
                }
            }
        }
        if total > 0.0 {
            edge / total
        } else {
            0.0
        }
    }
}
