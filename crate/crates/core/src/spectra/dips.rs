use serde::{Deserialize, Serialize};

use super::{SpectraConfig, SpectraError, Spectrum};
use crate::optics::PillarSpec;
use crate::optimize::{golden_section_minimize, least_squares};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipFeature {
    pub mode_order: usize,
    /// nm
    pub center_wavelength: f64,
    /// `(baseline − minimum) / baseline`; 0 when `found` is false.
    pub contrast: f64,
    /// FWHM (nm)
    pub linewidth: f64,
    pub found: bool,
}

/// Fit `B(x)·(1 − C·L(x))` with a quadratic baseline `B` and a Lorentzian `L`
/// of half-width `h` centred at `center`. Returns `(sse, C)`.
fn fit_dip(wl: &[f64], r: &[f64], center: f64, h: f64) -> Option<(f64, f64)> {
    // x²·L is a combination of 1 and L, so the basis stops at x·L
    let rows: Vec<Vec<f64>> = wl
        .iter()
        .map(|l| {
            let x = l - center;
            let lor = 1.0 / (1.0 + (x / h).powi(2));
            vec![1.0, x, x * x, lor, x * lor]
        })
        .collect();
    let beta = least_squares(&rows, r)?;
    let sse = rows
        .iter()
        .zip(r)
        .map(|(row, y)| (y - row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>()).powi(2))
        .sum();
    let baseline = beta[0] - beta[2] * h * h;
    if !(baseline > 0.0) {
        return None;
    }
    Some((sse, -beta[3] / baseline))
}

/// Locate the dip of each expected mode within `±dip_window_nm` of its
/// expected wavelength and measure its contrast against a local baseline.
///
/// A mode whose fitted contrast stays below `dip_threshold` is reported with
/// contrast 0 and `found = false`.
pub fn find_mode_dips(s: &Spectrum, expected: &PillarSpec, cfg: &SpectraConfig) -> Vec<DipFeature> {
    expected
        .mode_wavelengths
        .iter()
        .enumerate()
        .map(|(order, &target)| {
            let nominal_hw = target / (2.0 * expected.quality_factor);
            let missing = DipFeature {
                mode_order: order,
                center_wavelength: target,
                contrast: 0.0,
                linewidth: 2.0 * nominal_hw,
                found: false,
            };
            let lo = s.wavelengths.partition_point(|l| *l < target - cfg.dip_window_nm);
            let hi = s.wavelengths.partition_point(|l| *l <= target + cfg.dip_window_nm);
            if hi < lo + 8 {
                return missing;
            }
            let (wl, r) = (&s.wavelengths[lo..hi], &s.reflectivity[lo..hi]);
            let sse = |c: f64, h: f64| fit_dip(wl, r, c, h).map(|v| v.0).unwrap_or(f64::INFINITY);

            let step = s.resolution() / 2.0;
            let n = ((wl[wl.len() - 1] - wl[0]) / step) as usize;
            let coarse = (0..=n)
                .map(|k| wl[0] + k as f64 * step)
                .min_by(|a, b| sse(*a, nominal_hw).total_cmp(&sse(*b, nominal_hw)))
                .unwrap_or(target);
            let (mut center, _) = golden_section_minimize(|c| sse(c, nominal_hw), coarse - step, coarse + step, 1e-5);
            let (hw, _) =
                golden_section_minimize(|h| sse(center, h), nominal_hw / 3.0, nominal_hw * 3.0, nominal_hw * 1e-3);
            center = golden_section_minimize(|c| sse(c, hw), center - step, center + step, 1e-5).0;
            match fit_dip(wl, r, center, hw) {
                Some((_, c)) if c >= cfg.dip_threshold => DipFeature {
                    mode_order: order,
                    center_wavelength: center,
                    contrast: c.min(1.0),
                    linewidth: 2.0 * hw,
                    found: true,
                },
                _ => missing,
            }
        })
        .collect()
}

/// Per-mode dip contrast versus lateral offset along one scan axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastProfile {
    /// µm, increasing
    pub offsets: Vec<f64>,
    /// `contrast_per_mode[mode][point]`
    pub contrast_per_mode: Vec<Vec<f64>>,
}

pub fn contrast_profile(
    scan: &[(f64, Spectrum)],
    expected: &PillarSpec,
    cfg: &SpectraConfig,
) -> Result<ContrastProfile, SpectraError> {
    if scan.len() < 5 {
        return Err(SpectraError::InsufficientScan { points: scan.len() });
    }
    let mut order: Vec<usize> = (0..scan.len()).collect();
    order.sort_by(|a, b| scan[*a].0.total_cmp(&scan[*b].0));
    let mut contrast_per_mode = vec![Vec::with_capacity(scan.len()); expected.n_transverse_modes];
    let mut offsets = Vec::with_capacity(scan.len());
    for i in order {
        let (offset, spectrum) = &scan[i];
        offsets.push(*offset);
        for dip in find_mode_dips(spectrum, expected, cfg) {
            contrast_per_mode[dip.mode_order].push(dip.contrast);
        }
    }
    Ok(ContrastProfile { offsets, contrast_per_mode })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterEstimate {
    /// µm
    pub center: f64,
    /// µm, one standard error
    pub uncertainty: f64,
    /// Vertex of a parabola fitted to the antisymmetric-mode contrast within
    /// ±1 µm of the center, when available. A coarse consistency check only.
    pub antisymmetric_minimum: Option<f64>,
}

fn even_fit_sse(x: &[f64], y: &[f64], x0: f64, quartic: bool) -> Option<(f64, Vec<f64>)> {
    let rows: Vec<Vec<f64>> = x
        .iter()
        .map(|v| {
            let u2 = (v - x0).powi(2);
            if quartic {
                vec![1.0, u2, u2 * u2]
            } else {
                vec![1.0, u2]
            }
        })
        .collect();
    let beta = least_squares(&rows, y)?;
    let sse = rows
        .iter()
        .zip(y)
        .map(|(row, y)| (y - row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>()).powi(2))
        .sum();
    Some((sse, beta))
}

fn symmetric_center(x: &[f64], y: &[f64], quartic: bool) -> Option<(f64, f64, Vec<f64>)> {
    let sse = |c: f64| even_fit_sse(x, y, c, quartic).map(|v| v.0).unwrap_or(f64::INFINITY);
    let (a, b) = (x[0], x[x.len() - 1]);
    let n = 64;
    let h = (b - a) / n as f64;
    let coarse = (0..=n).map(|k| a + k as f64 * h).min_by(|p, q| sse(*p).total_cmp(&sse(*q)))?;
    let (c, _) = golden_section_minimize(sse, coarse - h, coarse + h, 1e-9);
    let (s, beta) = even_fit_sse(x, y, c, quartic)?;
    Some((c, s, beta))
}

/// Lateral center from an even-polynomial fit `a0 + a2·u² + a4·u⁴` (u = x − x0)
/// of the fundamental-mode contrast around its maximum, cross-checked
/// against the minimum of the antisymmetric mode.
pub fn estimate_center(p: &ContrastProfile) -> Result<CenterEstimate, SpectraError> {
    let n = p.offsets.len();
    if n < 5 {
        return Err(SpectraError::InsufficientScan { points: n });
    }
    let fund = &p.contrast_per_mode[0];
    let (kmax, &cmax) = fund
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(SpectraError::NoInteriorMaximum)?;
    if kmax == 0 || kmax == n - 1 || !(cmax > 0.0) {
        return Err(SpectraError::NoInteriorMaximum);
    }
    let keep = |k: usize| fund[k] >= 0.3 * cmax;
    let mut lo = kmax;
    while lo > 0 && keep(lo - 1) {
        lo -= 1;
    }
    let mut hi = kmax;
    while hi + 1 < n && keep(hi + 1) {
        hi += 1;
    }
    let (x, y) = (&p.offsets[lo..=hi], &fund[lo..=hi]);
    let quartic = x.len() >= 5;
    if x.len() < 3 {
        return Err(SpectraError::FitFailed("fewer than 3 points around the contrast maximum".into()));
    }
    let (center, sse, beta) =
        symmetric_center(x, y, quartic).ok_or_else(|| SpectraError::FitFailed("even-polynomial fit".into()))?;
    let params = if quartic { 4.0 } else { 3.0 };
    let dof = x.len() as f64 - params;
    let jac: f64 = x
        .iter()
        .map(|v| {
            let u = v - center;
            let d = 2.0 * beta[1] * u + if quartic { 4.0 * beta[2] * u.powi(3) } else { 0.0 };
            d * d
        })
        .sum();
    let uncertainty = if dof > 0.0 && jac > 0.0 { (sse / dof / jac).sqrt() } else { 0.0 };

    let antisymmetric_minimum = p.contrast_per_mode.get(1).and_then(|anti| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = p
            .offsets
            .iter()
            .zip(anti)
            .filter(|(x, _)| (**x - center).abs() <= 1.0)
            .map(|(x, y)| (*x, *y))
            .unzip();
        if xs.len() < 3 {
            return None;
        }
        let rows: Vec<Vec<f64>> = xs.iter().map(|x| vec![1.0, x - center, (x - center).powi(2)]).collect();
        let beta = least_squares(&rows, &ys)?;
        (beta[2] > 0.0).then(|| center - beta[1] / (2.0 * beta[2]))
    });
    Ok(CenterEstimate { center, uncertainty, antisymmetric_minimum })
}
