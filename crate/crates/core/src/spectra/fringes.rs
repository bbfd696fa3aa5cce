use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{SpectraConfig, SpectraError, Spectrum};
use crate::optimize::{golden_section_minimize, least_squares};

/// Two successive reflectivity maxima (nm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringePair {
    pub lambda1: f64,
    pub lambda2: f64,
    pub delta: f64,
}

impl FringePair {
    pub fn new(lambda1: f64, lambda2: f64) -> Option<Self> {
        (lambda2 > lambda1).then_some(FringePair { lambda1, lambda2, delta: lambda2 - lambda1 })
    }

    pub fn gap_um(&self) -> f64 {
        gap_from_pair(self.lambda1, self.lambda2)
    }
}

/// Gap (µm) from two successive maxima (nm): `λ1·λ2 / (2·(λ2 − λ1))`.
pub fn gap_from_pair(lambda1_nm: f64, lambda2_nm: f64) -> f64 {
    lambda1_nm * lambda2_nm / (2.0 * (lambda2_nm - lambda1_nm)) * 1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapMethod {
    PairFormula,
    ModelFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub gap_um: f64,
    pub uncertainty_um: f64,
    pub method: GapMethod,
    pub maxima_nm: Vec<f64>,
}

/// Replace samples lying well below the running median (mode dips) by the median.
fn mask_dips(s: &Spectrum, cfg: &SpectraConfig) -> Vec<f64> {
    let r = &s.reflectivity;
    let n = r.len();
    let half = ((cfg.mask_window_nm / s.resolution() / 2.0).round() as usize).max(1);
    let mut window = Vec::with_capacity(2 * half + 1);
    let medians: Vec<f64> = (0..n)
        .map(|i| {
            window.clear();
            window.extend_from_slice(&r[i.saturating_sub(half)..(i + half + 1).min(n)]);
            let mid = window.len() / 2;
            *window.select_nth_unstable_by(mid, f64::total_cmp).1
        })
        .collect();
    // noise from second differences: var(x[i-1] - 2x[i] + x[i+1]) = 6σ²
    let mut dev: Vec<f64> =
        r.windows(3).filter(|w| w[1] > 0.0).map(|w| ((w[0] - 2.0 * w[1] + w[2]) / w[1]).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let sigma = 1.4826 * dev.get(dev.len() / 2).copied().unwrap_or(0.0) / 6f64.sqrt();
    let threshold = 4.0 * sigma + 2e-3;
    let flagged: Vec<bool> = r.iter().zip(&medians).map(|(&x, &m)| x < m * (1.0 - threshold)).collect();
    // a deep dip drags the median down over its wings, so widen every run
    // by its own width on each side and bridge it linearly
    let mut masked = vec![false; n];
    let mut i = 0;
    while i < n {
        if !flagged[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && flagged[i] {
            i += 1;
        }
        let pad = (i - start).max(half);
        masked[start.saturating_sub(pad)..(i + pad).min(n)].iter_mut().for_each(|m| *m = true);
    }
    let mut out = r.clone();
    let mut i = 0;
    while i < n {
        if !masked[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && masked[i] {
            i += 1;
        }
        match (start.checked_sub(1), (i < n).then_some(i)) {
            (Some(a), Some(b)) => {
                for k in start..i {
                    let t = (k - a) as f64 / (b - a) as f64;
                    out[k] = r[a] + t * (r[b] - r[a]);
                }
            }
            (Some(a), None) => out[start..].iter_mut().for_each(|v| *v = r[a]),
            (None, Some(b)) => out[..i].iter_mut().for_each(|v| *v = r[b]),
            (None, None) => out.copy_from_slice(&medians),
        }
    }
    out
}

/// Quadratic Savitzky-Golay smoothing; the edges are left untouched.
fn savitzky_golay(y: &[f64], window: usize) -> Vec<f64> {
    let m = (window.max(3) | 1) / 2;
    if y.len() <= 2 * m {
        return y.to_vec();
    }
    let mf = m as f64;
    let norm = (2.0 * mf - 1.0) * (2.0 * mf + 1.0) * (2.0 * mf + 3.0) / 3.0;
    let coef: Vec<f64> = (0..=2 * m)
        .map(|k| {
            let k = k as f64 - mf;
            (3.0 * mf * mf + 3.0 * mf - 1.0 - 5.0 * k * k) / norm
        })
        .collect();
    let mut out = y.to_vec();
    for i in m..y.len() - m {
        out[i] = coef.iter().zip(&y[i - m..=i + m]).map(|(c, v)| c * v).sum();
    }
    out
}

/// Least-squares parabola vertex of `(x, y)`; `None` unless it is a maximum inside the data.
fn parabola_vertex(x: &[f64], y: &[f64]) -> Option<f64> {
    let x0 = x[x.len() / 2];
    let design: Vec<Vec<f64>> = x.iter().map(|&v| vec![1.0, v - x0, (v - x0).powi(2)]).collect();
    let c = least_squares(&design, y)?;
    if c[2] >= 0.0 {
        return None;
    }
    let v = x0 - c[1] / (2.0 * c[2]);
    let (lo, hi) = (x[0].min(x[x.len() - 1]), x[0].max(x[x.len() - 1]));
    (v > lo && v < hi).then_some(v)
}

/// Index of the nearest strictly higher sample on each side.
fn nearest_higher(y: &[f64]) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
    let n = y.len();
    let mut left = vec![None; n];
    let mut right = vec![None; n];
    let mut stack: Vec<usize> = Vec::new();
    for i in 0..n {
        while stack.last().is_some_and(|&k| y[k] <= y[i]) {
            stack.pop();
        }
        left[i] = stack.last().copied();
        stack.push(i);
    }
    stack.clear();
    for i in (0..n).rev() {
        while stack.last().is_some_and(|&k| y[k] <= y[i]) {
            stack.pop();
        }
        right[i] = stack.last().copied();
        stack.push(i);
    }
    (left, right)
}

/// Sparse table for O(1) minimum over a half-open index range.
struct RangeMin {
    levels: Vec<Vec<f64>>,
}

impl RangeMin {
    fn new(y: &[f64]) -> Self {
        let mut levels = vec![y.to_vec()];
        let mut width = 1;
        while 2 * width <= y.len() {
            let prev = levels.last().expect("level 0 exists");
            let next = (0..=y.len() - 2 * width).map(|i| prev[i].min(prev[i + width])).collect();
            levels.push(next);
            width *= 2;
        }
        RangeMin { levels }
    }

    /// Minimum of `y[a..b]`, `+∞` when empty.
    fn min(&self, a: usize, b: usize) -> f64 {
        if b <= a {
            return f64::INFINITY;
        }
        let k = (usize::BITS - 1 - (b - a).leading_zeros()) as usize;
        let w = 1 << k;
        self.levels[k][a].min(self.levels[k][b - w])
    }
}

/// Interior background maxima (nm), dips masked, refined by a parabola fit in
/// wavenumber over ±1/8 of the local fringe spacing.
pub fn find_maxima(s: &Spectrum, cfg: &SpectraConfig) -> Vec<f64> {
    let masked = mask_dips(s, cfg);
    let smooth = savitzky_golay(&masked, cfg.smoothing_window);
    let n = smooth.len();
    let edge = cfg.smoothing_window / 2 + 1;
    let (lo, hi) = smooth.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let min_prom = cfg.min_prominence * (hi - lo);
    let (left_higher, right_higher) = nearest_higher(&smooth);
    let low = RangeMin::new(&smooth);
    let mut coarse = Vec::new();
    for i in edge.max(1)..n.saturating_sub(edge.max(1)) {
        if !(smooth[i] > smooth[i - 1] && smooth[i] >= smooth[i + 1]) {
            continue;
        }
        // lowest point on each side before the signal rises above this peak
        let left = low.min(left_higher[i].map_or(0, |k| k + 1), i);
        let right = low.min(i, right_higher[i].unwrap_or(n));
        if smooth[i] - left.max(right) >= min_prom && min_prom > 0.0 {
            coarse.push(i);
        }
    }
    let wl = &s.wavelengths;
    let step = s.resolution();
    coarse
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let spacing = [k.checked_sub(1).map(|p| coarse[p]), coarse.get(k + 1).copied()]
                .into_iter()
                .flatten()
                .map(|j| (wl[j] - wl[i]).abs())
                .fold(f64::INFINITY, f64::min);
            let spacing = if spacing.is_finite() { spacing } else { wl[n - 1] - wl[0] };
            // fringes are periodic in wavenumber, so fit there with a window
            // kept symmetric about the current vertex
            let half_nu = 1e3 * (spacing / 8.0).max(3.0 * step) / (wl[i] * wl[i]);
            let mut center = 1e3 / wl[i];
            for _ in 0..3 {
                let (lo, hi) = (1e3 / (center + half_nu), 1e3 / (center - half_nu));
                let a = wl.partition_point(|l| *l < lo);
                let b = wl.partition_point(|l| *l <= hi);
                if b < a + 3 {
                    break;
                }
                let nu: Vec<f64> = wl[a..b].iter().map(|l| 1e3 / l).collect();
                match parabola_vertex(&nu, &masked[a..b]) {
                    Some(v) => center = v,
                    None => break,
                }
            }
            1e3 / center
        })
        .collect()
}

fn resolution_term_um(s: &Spectrum, gap_um: f64) -> f64 {
    let mean_l = 0.5 * (s.wavelengths[0] + s.wavelengths[s.len() - 1]);
    let g_nm = gap_um * 1e3;
    2f64.sqrt() * s.resolution() * 2.0 * g_nm * g_nm / (mean_l * mean_l) * 1e-3
}

/// Gap from the spacing of successive background maxima, averaged over all
/// pairs. The uncertainty combines the pair-to-pair scatter and the
/// wavelength-sampling limit `√2·δλ·2g²/λ̄²`.
pub fn estimate_gap(s: &Spectrum, cfg: &SpectraConfig) -> Result<GapEstimate, SpectraError> {
    s.validate()?;
    let maxima = find_maxima(s, cfg);
    if maxima.len() < 2 {
        return Err(SpectraError::TooFewFringes { found: maxima.len() });
    }
    let gaps: Vec<f64> = maxima.windows(2).map(|w| gap_from_pair(w[0], w[1])).collect();
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    let spread = if gaps.len() > 1 {
        (gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    let res = resolution_term_um(s, mean);
    Ok(GapEstimate {
        gap_um: mean,
        uncertainty_um: spread.hypot(res),
        method: GapMethod::PairFormula,
        maxima_nm: maxima,
    })
}

/// Least-squares fit of the background `A + B·cos(4πg/λ)` (B ≥ 0) with the
/// gap scanned over `range_um` and refined by golden section. Works with any
/// number of fringes in the band, including none.
pub fn estimate_gap_by_fit(s: &Spectrum, cfg: &SpectraConfig, range_um: (f64, f64)) -> Result<GapEstimate, SpectraError> {
    s.validate()?;
    if !(range_um.0 > 0.0 && range_um.1 > range_um.0) {
        return Err(SpectraError::InvalidGap(range_um.0));
    }
    let y = mask_dips(s, cfg);
    let x = &s.wavelengths;
    let ss = |g: f64, stride: usize| -> f64 {
        let (mut n, mut sc, mut scc, mut sy, mut syc, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for i in (0..x.len()).step_by(stride) {
            let c = (4.0 * PI * g * 1e3 / x[i]).cos();
            n += 1.0;
            sc += c;
            scc += c * c;
            sy += y[i];
            syc += y[i] * c;
            syy += y[i] * y[i];
        }
        let det = n * scc - sc * sc;
        let total = syy - sy * sy / n;
        if det.abs() < 1e-12 * n * n {
            return total;
        }
        let b = (n * syc - sc * sy) / det;
        if b <= 0.0 {
            return total;
        }
        let a = (sy - b * sc) / n;
        (syy - a * sy - b * syc).max(0.0)
    };
    let stride = (x.len() / 400).max(1);
    // the residual oscillates in g with period λ/2; sample it 20 times per period
    let step = x[0].min(x[x.len() - 1]) * 1e-3 / 40.0;
    let n_steps = ((range_um.1 - range_um.0) / step).ceil() as usize;
    let best = (0..=n_steps)
        .map(|k| range_um.0 + k as f64 * step)
        .map(|g| (g, ss(g, stride)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| SpectraError::FitFailed("empty scan".into()))?;
    let (g, sse) = golden_section_minimize(|g| ss(g, 1), (best.0 - step).max(1e-3), best.0 + step, 1e-7);

    // linearized standard error of g
    let fit = {
        let design: Vec<Vec<f64>> = x.iter().map(|l| vec![1.0, (4.0 * PI * g * 1e3 / l).cos()]).collect();
        least_squares(&design, &y).ok_or_else(|| SpectraError::FitFailed("singular background fit".into()))?
    };
    let jac: f64 = x.iter().map(|l| (fit[1] * 4.0 * PI * 1e3 / l * (4.0 * PI * g * 1e3 / l).sin()).powi(2)).sum();
    let dof = (x.len() as f64 - 3.0).max(1.0);
    let stat = if jac > 0.0 { (sse / dof / jac).sqrt() } else { f64::INFINITY };
    Ok(GapEstimate {
        gap_um: g,
        uncertainty_um: stat.hypot(resolution_term_um(s, g)),
        method: GapMethod::ModelFit,
        maxima_nm: find_maxima(s, cfg),
    })
}

/// Pair formula when the band holds at least two maxima, otherwise the
/// background fit over 0.1-20 µm.
pub fn measure_gap(s: &Spectrum, cfg: &SpectraConfig) -> Result<GapEstimate, SpectraError> {
    match estimate_gap(s, cfg) {
        Err(SpectraError::TooFewFringes { .. }) => estimate_gap_by_fit(s, cfg, (0.1, 20.0)),
        other => other,
    }
}
