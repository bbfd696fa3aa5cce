use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fft::fft_freq;
use super::propagate::transfer_function;
use super::{
    make_fiber_mode, make_fiber_mode_at, make_pillar_mode, pillar_mode_family, propagate, Fft2, FiberSpec, Grid2D,
    OpticsError, PillarSpec, ScalarField,
};
use crate::optimize::{bisect_root, golden_section_maximize};

/// Normalized mode overlap `|∫a*b|² / (∫|a|² ∫|b|²)`.
pub fn overlap(a: &ScalarField, b: &ScalarField) -> Result<f64, OpticsError> {
    if !a.same_sampling(b) {
        return Err(OpticsError::GridMismatch);
    }
    let cross: Complex64 = a.amplitude.iter().zip(&b.amplitude).map(|(x, y)| x.conj() * y).sum();
    let pa: f64 = a.amplitude.iter().map(|x| x.norm_sqr()).sum();
    let pb: f64 = b.amplitude.iter().map(|x| x.norm_sqr()).sum();
    if !(pa > 0.0 && pb > 0.0) {
        return Err(OpticsError::ZeroPower);
    }
    Ok((cross.norm_sqr() / (pa * pb)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingQuery {
    pub pillar: PillarSpec,
    pub fiber: FiberSpec,
    /// µm
    pub gap: f64,
    /// µm
    pub radial_offset: f64,
    pub grid: Grid2D,
}

impl CouplingQuery {
    pub fn new(pillar: PillarSpec, fiber: FiberSpec, gap: f64, radial_offset: f64) -> Self {
        CouplingQuery { pillar, fiber, gap, radial_offset, grid: Grid2D::default() }
    }
}

/// Micropillar-to-fiber coupling efficiency computed the direct way:
/// pillar fundamental mode → propagate across the gap → overlap with the
/// laterally displaced fiber mode, times the facet Fresnel transmission.
///
/// The fundamental mode is radially symmetric, so only `|radial_offset|` enters.
pub fn coupling_efficiency(q: &CouplingQuery) -> Result<f64, OpticsError> {
    if !(q.gap >= 0.0) {
        return Err(OpticsError::NegativeDistance(q.gap));
    }
    let pillar_mode = make_pillar_mode(&q.pillar, 0, q.grid)?;
    let wavelength = pillar_mode.wavelength_nm;
    let propagated = propagate(&pillar_mode, q.gap)?;
    let fiber_mode = make_fiber_mode_at(&q.fiber, q.grid, wavelength, q.radial_offset.abs(), 0.0)?;
    Ok(q.fiber.facet_transmission() * overlap(&propagated, &fiber_mode)?)
}

/// FFT of a pillar field, ready for repeated spectral-domain overlaps.
#[derive(Debug, Clone)]
pub struct PillarSpectrum {
    data: Vec<Complex64>,
}

/// Spectral-domain coupling evaluator for one fiber, grid and wavelength.
///
/// Overlaps are computed in the angular-spectrum domain (Parseval), so each
/// (gap, offset) evaluation costs one pass over the grid instead of two FFTs.
/// Lateral offsets become linear phase ramps.
#[derive(Debug)]
pub struct CouplingEngine {
    grid: Grid2D,
    wavelength_nm: f64,
    facet_transmission: f64,
    fiber_conj: Vec<Complex64>,
    fiber_norm2: f64,
    fft: Fft2,
    fx: Vec<f64>,
    fy: Vec<f64>,
    transfer_cache: Mutex<HashMap<u64, Arc<Vec<Complex64>>>>,
}

impl CouplingEngine {
    pub fn new(fiber: &FiberSpec, grid: Grid2D, wavelength_nm: f64) -> Result<Self, OpticsError> {
        let mode = make_fiber_mode(fiber, grid, wavelength_nm)?;
        let fft = Fft2::new(grid.samples_x, grid.samples_y);
        let mut data = mode.amplitude;
        fft.forward(&mut data);
        let fiber_norm2 = data.iter().map(|v| v.norm_sqr()).sum();
        let fiber_conj = data.iter().map(|v| v.conj()).collect();
        Ok(CouplingEngine {
            grid,
            wavelength_nm,
            facet_transmission: fiber.facet_transmission(),
            fiber_conj,
            fiber_norm2,
            fft,
            fx: (0..grid.samples_x).map(|i| fft_freq(i, grid.samples_x, grid.dx())).collect(),
            fy: (0..grid.samples_y).map(|j| fft_freq(j, grid.samples_y, grid.dy())).collect(),
            transfer_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    pub fn wavelength_nm(&self) -> f64 {
        self.wavelength_nm
    }

    pub fn facet_transmission(&self) -> f64 {
        self.facet_transmission
    }

    pub fn spectrum(&self, field: &ScalarField) -> Result<PillarSpectrum, OpticsError> {
        if field.grid != self.grid || (field.wavelength_nm - self.wavelength_nm).abs() > 1e-9 {
            return Err(OpticsError::GridMismatch);
        }
        let mut data = field.amplitude.clone();
        self.fft.forward(&mut data);
        Ok(PillarSpectrum { data })
    }

    fn transfer(&self, gap: f64) -> Arc<Vec<Complex64>> {
        let key = gap.to_bits();
        if let Some(h) = self.transfer_cache.lock().unwrap().get(&key) {
            return Arc::clone(h);
        }
        let h = Arc::new(transfer_function(&self.grid, self.wavelength_nm, gap));
        let mut cache = self.transfer_cache.lock().unwrap();
        if cache.len() > 64 {
            cache.clear();
        }
        cache.insert(key, Arc::clone(&h));
        h
    }

    /// Mode overlap (no facet loss) between the propagated pillar field and
    /// the fiber mode displaced by `(dx, dy)` µm.
    pub fn field_overlap(&self, pillar: &PillarSpectrum, gap: f64, dx: f64, dy: f64) -> f64 {
        let h = self.transfer(gap);
        let nx = self.grid.samples_x;
        let px: Vec<Complex64> = self.fx.iter().map(|f| Complex64::from_polar(1.0, 2.0 * PI * f * dx)).collect();
        let mut cross = Complex64::new(0.0, 0.0);
        let mut pnorm = 0.0;
        for (j, fy) in self.fy.iter().enumerate() {
            let py = Complex64::from_polar(1.0, 2.0 * PI * fy * dy);
            let row = j * nx..(j + 1) * nx;
            let mut row_sum = Complex64::new(0.0, 0.0);
            for ((f, p), (h, ph)) in self.fiber_conj[row.clone()]
                .iter()
                .zip(&pillar.data[row.clone()])
                .zip(h[row].iter().zip(&px))
            {
                let prop = p * h;
                pnorm += prop.norm_sqr();
                row_sum += f * prop * ph;
            }
            cross += row_sum * py;
        }
        (cross.norm_sqr() / (self.fiber_norm2 * pnorm)).clamp(0.0, 1.0)
    }

    /// Coupling efficiency of the fundamental mode of `pillar` (facet loss included).
    pub fn efficiency(&self, pillar: &PillarSpec, gap: f64, offset: f64) -> Result<f64, OpticsError> {
        let mode = make_pillar_mode(pillar, 0, self.grid)?;
        let spec = self.spectrum(&mode)?;
        Ok(self.facet_transmission * self.field_overlap(&spec, gap, offset.abs(), 0.0))
    }

    /// Coupling of a (possibly degenerate) mode family for every lateral
    /// offset on the grid, via one correlation FFT per partner field.
    pub fn landscape(&self, family: &[PillarSpectrum], gap: f64) -> CouplingLandscape {
        let h = self.transfer(gap);
        let (nx, ny) = (self.grid.samples_x, self.grid.samples_y);
        let mut total = vec![0.0; nx * ny];
        for partner in family {
            let mut corr: Vec<Complex64> = self
                .fiber_conj
                .iter()
                .zip(&partner.data)
                .zip(h.iter())
                .map(|((f, p), h)| f * p * h)
                .collect();
            let pnorm: f64 = partner.data.iter().zip(h.iter()).map(|(p, h)| (p * h).norm_sqr()).sum();
            self.fft.inverse(&mut corr);
            let scale = (nx * ny) as f64;
            let norm = scale * scale / (self.fiber_norm2 * pnorm);
            // fftshift so that index i maps to offset (i - n/2)·d
            for j in 0..ny {
                let sj = (j + ny / 2) % ny;
                for i in 0..nx {
                    let si = (i + nx / 2) % nx;
                    total[j * nx + i] += corr[sj * nx + si].norm_sqr() * norm;
                }
            }
        }
        CouplingLandscape { grid: self.grid, gap, values: total }
    }
}

/// Overlap versus lateral fiber offset at a fixed gap, sampled on the grid
/// spacing and interpolated bilinearly. Facet loss is not included.
#[derive(Debug, Clone)]
pub struct CouplingLandscape {
    grid: Grid2D,
    pub gap: f64,
    values: Vec<f64>,
}

impl CouplingLandscape {
    /// Offsets within this radius of the edge wrap around the periodic grid
    /// and are reported as zero coupling.
    const EDGE_MARGIN_UM: f64 = 1.0;

    pub fn at(&self, dx: f64, dy: f64) -> f64 {
        let g = &self.grid;
        let (nx, ny) = (g.samples_x, g.samples_y);
        let limit_x = g.extent_x / 2.0 - Self::EDGE_MARGIN_UM;
        let limit_y = g.extent_y / 2.0 - Self::EDGE_MARGIN_UM;
        if dx.abs() > limit_x || dy.abs() > limit_y {
            return 0.0;
        }
        let fx = dx / g.dx() + (nx / 2) as f64;
        let fy = dy / g.dy() + (ny / 2) as f64;
        let (i0, j0) = (fx.floor() as usize, fy.floor() as usize);
        let (tx, ty) = (fx - i0 as f64, fy - j0 as f64);
        let v = |i: usize, j: usize| self.values[j.min(ny - 1) * nx + i.min(nx - 1)];
        let top = v(i0, j0) * (1.0 - tx) + v(i0 + 1, j0) * tx;
        let bottom = v(i0, j0 + 1) * (1.0 - tx) + v(i0 + 1, j0 + 1) * tx;
        (top * (1.0 - ty) + bottom * ty).clamp(0.0, 1.0)
    }
}

impl PillarSpectrum {
    /// Spectra of every degenerate partner of pillar mode `order`.
    pub fn family(engine: &CouplingEngine, pillar: &PillarSpec, order: usize) -> Result<Vec<Self>, OpticsError> {
        let fields = pillar_mode_family(pillar, order, engine.grid())?;
        fields
            .iter()
            .map(|f| {
                let relabeled = ScalarField::new(f.grid, f.amplitude.clone(), engine.wavelength_nm());
                engine.spectrum(&relabeled)
            })
            .collect()
    }
}

/// Diameter maximizing the on-axis coupling at `gap`, by golden-section
/// search over `[lo, hi]` to within `tol` µm. Returns `(diameter, efficiency)`.
pub fn optimal_diameter(
    engine: &CouplingEngine,
    pillar: &PillarSpec,
    gap: f64,
    bracket: (f64, f64),
    tol: f64,
) -> Result<(f64, f64), OpticsError> {
    // surface construction errors before the search swallows them
    engine.efficiency(&pillar.with_diameter(bracket.0), gap, 0.0)?;
    engine.efficiency(&pillar.with_diameter(bracket.1), gap, 0.0)?;
    Ok(golden_section_maximize(
        |d| engine.efficiency(&pillar.with_diameter(d), gap, 0.0).unwrap_or(0.0),
        bracket.0,
        bracket.1,
        tol,
    ))
}

/// Fit the pillar waist ratio so that a pillar of `diameter` at `gap` couples
/// with efficiency `target`. Searches the rising branch `[0.4, 0.85]`.
pub fn calibrate_waist_ratio(
    fiber: &FiberSpec,
    pillar: &PillarSpec,
    grid: Grid2D,
    diameter: f64,
    gap: f64,
    target: f64,
) -> Result<f64, OpticsError> {
    let engine = CouplingEngine::new(fiber, grid, pillar.mode_wavelengths[0])?;
    let eff = |ratio: f64| {
        let p = PillarSpec { waist_ratio: ratio, diameter, ..pillar.clone() };
        engine.efficiency(&p, gap, 0.0).map(|e| e - target).unwrap_or(f64::NAN)
    };
    bisect_root(eff, 0.4, 0.85, 1e-5)
        .ok_or_else(|| OpticsError::InvalidSpec(format!("target coupling {target} not reachable")))
}

/// Coupling efficiency sampled over pillar diameter × gap × lateral offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingMap {
    pub diameters: Vec<f64>,
    pub gaps: Vec<f64>,
    pub offsets: Vec<f64>,
    /// Row-major `[diameter][gap][offset]`.
    pub efficiency: Vec<f64>,
}

impl CouplingMap {
    pub fn get(&self, d: usize, g: usize, o: usize) -> f64 {
        self.efficiency[(d * self.gaps.len() + g) * self.offsets.len() + o]
    }

    /// Best on-grid diameter and its efficiency at gap index `g`, offset index `o`.
    pub fn best_diameter(&self, g: usize, o: usize) -> (f64, f64) {
        (0..self.diameters.len())
            .map(|d| (self.diameters[d], self.get(d, g, o)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((f64::NAN, f64::NAN))
    }
}

pub fn coupling_map(
    pillar: &PillarSpec,
    fiber: &FiberSpec,
    grid: Grid2D,
    diameters: &[f64],
    gaps: &[f64],
    offsets: &[f64],
) -> Result<CouplingMap, OpticsError> {
    if diameters.is_empty() || gaps.is_empty() || offsets.is_empty() {
        return Err(OpticsError::InvalidSpec("coupling map axes must be nonempty".into()));
    }
    if let Some(g) = gaps.iter().find(|g| !(**g >= 0.0)) {
        return Err(OpticsError::NegativeDistance(*g));
    }
    let engine = CouplingEngine::new(fiber, grid, pillar.mode_wavelengths[0])?;
    let rows: Vec<Vec<f64>> = diameters
        .par_iter()
        .map(|&d| {
            let mode = make_pillar_mode(&pillar.with_diameter(d), 0, grid)?;
            let spec = engine.spectrum(&mode)?;
            let mut row = Vec::with_capacity(gaps.len() * offsets.len());
            for &g in gaps {
                for &o in offsets {
                    row.push(engine.facet_transmission() * engine.field_overlap(&spec, g, o.abs(), 0.0));
                }
            }
            Ok(row)
        })
        .collect::<Result<_, OpticsError>>()?;
    Ok(CouplingMap {
        diameters: diameters.to_vec(),
        gaps: gaps.to_vec(),
        offsets: offsets.to_vec(),
        efficiency: rows.concat(),
    })
}
