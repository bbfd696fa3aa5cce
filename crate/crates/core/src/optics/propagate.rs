use std::f64::consts::PI;

use num_complex::Complex64;

use super::fft::fft_freq;
use super::{Fft2, Grid2D, OpticsError, ScalarField};

/// Maximum fraction of power allowed in the outer 5% band after propagation.
pub const BOUNDARY_POWER_LIMIT: f64 = 1e-3;
const BOUNDARY_BAND: f64 = 0.05;

/// Angular-spectrum transfer function `exp(i·kz·z)` for every FFT bin.
/// Evanescent components decay as `exp(-|kz|·z)`.
pub(crate) fn transfer_function(grid: &Grid2D, wavelength_nm: f64, distance_um: f64) -> Vec<Complex64> {
    let inv_lambda2 = (1e3 / wavelength_nm).powi(2);
    let mut h = Vec::with_capacity(grid.len());
    for j in 0..grid.samples_y {
        let fy = fft_freq(j, grid.samples_y, grid.dy());
        for i in 0..grid.samples_x {
            let fx = fft_freq(i, grid.samples_x, grid.dx());
            let arg = inv_lambda2 - fx * fx - fy * fy;
            let kz = 2.0 * PI * arg.abs().sqrt();
            h.push(if arg >= 0.0 {
                Complex64::from_polar(1.0, kz * distance_um)
            } else {
                Complex64::new((-kz * distance_um).exp(), 0.0)
            });
        }
    }
    h
}

/// Drop the evanescent part of the angular spectrum, leaving only plane-wave
/// components that propagate.
pub(crate) fn radiated_part(field: ScalarField) -> ScalarField {
    let g = field.grid;
    let inv_lambda2 = (1e3 / field.wavelength_nm).powi(2);
    let fft = Fft2::new(g.samples_x, g.samples_y);
    let mut data = field.amplitude;
    fft.forward(&mut data);
    for j in 0..g.samples_y {
        let fy = fft_freq(j, g.samples_y, g.dy());
        for i in 0..g.samples_x {
            let fx = fft_freq(i, g.samples_x, g.dx());
            if fx * fx + fy * fy >= inv_lambda2 {
                data[j * g.samples_x + i] = Complex64::new(0.0, 0.0);
            }
        }
    }
    fft.inverse(&mut data);
    ScalarField { amplitude: data, ..field }
}

/// Free-space propagation by `distance_um` without the boundary check.
pub fn propagate_unchecked(field: &ScalarField, distance_um: f64) -> Result<ScalarField, OpticsError> {
    if !(distance_um >= 0.0) {
        return Err(OpticsError::NegativeDistance(distance_um));
    }
    if distance_um == 0.0 {
        return Ok(field.clone());
    }
    let grid = field.grid;
    let fft = Fft2::new(grid.samples_x, grid.samples_y);
    let mut data = field.amplitude.clone();
    fft.forward(&mut data);
    let h = transfer_function(&grid, field.wavelength_nm, distance_um);
    data.iter_mut().zip(&h).for_each(|(d, h)| *d *= h);
    fft.inverse(&mut data);
    Ok(ScalarField::new(grid, data, field.wavelength_nm))
}

/// Angular-spectrum propagation of `field` over `distance_um` of free space.
///
/// Fails with [`OpticsError::Aliasing`] when more than
/// [`BOUNDARY_POWER_LIMIT`] of the propagated power sits at the grid edge,
/// since the periodic FFT grid would wrap it around.
pub fn propagate(field: &ScalarField, distance_um: f64) -> Result<ScalarField, OpticsError> {
    let out = propagate_unchecked(field, distance_um)?;
    let fraction = out.boundary_power_fraction(BOUNDARY_BAND);
    if fraction > BOUNDARY_POWER_LIMIT {
        return Err(OpticsError::Aliasing { fraction });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(grid: Grid2D, w: f64) -> ScalarField {
        ScalarField::from_fn(grid, 945.0, |x, y| Complex64::new((-(x * x + y * y) / (w * w)).exp(), 0.0))
            .normalized()
            .unwrap()
    }

    #[test]
    fn zero_distance_is_identity() {
        let f = gaussian(Grid2D::square(12.0, 128).unwrap(), 1.0);
        assert_eq!(propagate(&f, 0.0).unwrap(), f);
    }

    #[test]
    fn power_is_conserved() {
        let f = gaussian(Grid2D::default(), 1.1);
        let out = propagate(&f, 3.5).unwrap();
        assert!((out.power() - f.power()).abs() / f.power() < 1e-6);
    }

    #[test]
    fn negative_distance_rejected() {
        let f = gaussian(Grid2D::square(12.0, 128).unwrap(), 1.0);
        assert!(matches!(propagate(&f, -1.0), Err(OpticsError::NegativeDistance(_))));
    }

    #[test]
    fn wide_beam_on_small_grid_aliases() {
        let f = gaussian(Grid2D::square(6.0, 128).unwrap(), 1.0);
        assert!(matches!(propagate(&f, 30.0), Err(OpticsError::Aliasing { .. })));
    }
}
