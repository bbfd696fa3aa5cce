use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{g2_zero, histogram_coincidences, hom_visibility, DetectorParams, PhotonError, SourceParams, TimeTags};
use crate::measurement::Measurement;
use crate::optimize::golden_section_minimize;

/// Imperfections of the HOM interferometer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interferometer {
    /// Classical fringe-contrast deficit ε.
    pub epsilon: f64,
    /// Splitting ratio R:T of the beam splitter.
    pub reflectivity: f64,
    pub transmission: f64,
}

impl Default for Interferometer {
    fn default() -> Self {
        Interferometer { epsilon: 0.0, reflectivity: 0.5, transmission: 0.5 }
    }
}

impl Interferometer {
    pub fn validate(&self) -> Result<(), PhotonError> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(PhotonError::InvalidInterferometer(format!("epsilon {} outside [0, 1)", self.epsilon)));
        }
        if !(self.reflectivity > 0.0 && self.transmission > 0.0) {
            return Err(PhotonError::InvalidInterferometer("R and T must be positive".into()));
        }
        Ok(())
    }

    /// `(1 − ε)²·4RT/(R + T)²`, 1 for an ideal interferometer.
    pub fn visibility_limit(&self) -> f64 {
        let (r, t) = (self.reflectivity, self.transmission);
        (1.0 - self.epsilon).powi(2) * 4.0 * r * t / (r + t).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corrected {
    pub value: f64,
    pub sigma: f64,
    /// Correction before clamping to [0, 1].
    pub raw: f64,
    pub clamped: bool,
}

/// Wave-packet overlap `M = (V + 2g²)/((1 − ε)²·4RT/(R + T)²)`, first order in
/// g²(0), clamped to [0, 1] with a flag.
pub fn indistinguishability(v_hom: Measurement, g2: Measurement, ifm: &Interferometer) -> Result<Corrected, PhotonError> {
    ifm.validate()?;
    for (name, x) in [("v_hom", v_hom.value), ("g2", g2.value)] {
        if !(0.0..=1.0).contains(&x) {
            return Err(PhotonError::InvalidParams(format!("{name} = {x} outside [0, 1]")));
        }
    }
    let den = ifm.visibility_limit();
    let raw = (v_hom.value + 2.0 * g2.value) / den;
    let sigma = v_hom.sigma.hypot(2.0 * g2.sigma) / den;
    let value = raw.clamp(0.0, 1.0);
    Ok(Corrected { value, sigma, raw, clamped: value != raw })
}

/// Single-photon brightness at the fiber output per pulse,
/// `(rate / rep rate)·(1 − g²(0))`.
pub fn fibered_brightness(rate_mhz: f64, rep_rate_mhz: f64, g2: f64) -> f64 {
    rate_mhz / rep_rate_mhz * (1.0 - g2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    pub r_inf: f64,
    pub p_sat: f64,
    /// Root-mean-square residual (rate units).
    pub residual: f64,
    /// False when the data do not bracket P_sat, so P_sat is poorly constrained.
    pub well_constrained: bool,
}

/// Least-squares fit of `R(P) = R_inf·(1 − exp(−P/P_sat))`. `R_inf` is
/// solved linearly for each `P_sat`, and `P_sat` by a log-spaced scan
/// refined with golden section.
pub fn fit_saturation(points: &[(f64, f64)]) -> Result<SaturationFit, PhotonError> {
    if points.len() < 4 {
        return Err(PhotonError::TooFewSamples { found: points.len(), needed: 4 });
    }
    if points.iter().any(|(p, r)| !(p.is_finite() && r.is_finite()) || *p <= 0.0) {
        return Err(PhotonError::NonConvergence("powers must be positive and rates finite".into()));
    }
    let (p_min, p_max) = points.iter().fold((f64::INFINITY, 0f64), |(a, b), (p, _)| (a.min(*p), b.max(*p)));
    let solve = |log_ps: f64| -> (f64, f64) {
        let ps = log_ps.exp();
        let (mut fy, mut ff) = (0.0, 0.0);
        for (p, r) in points {
            let f = 1.0 - (-p / ps).exp();
            fy += f * r;
            ff += f * f;
        }
        let r_inf = fy / ff;
        let sse = points.iter().map(|(p, r)| (r - r_inf * (1.0 - (-p / ps).exp())).powi(2)).sum();
        (r_inf, sse)
    };
    let (lo, hi) = ((p_min / 100.0).ln(), (p_max * 100.0).ln());
    let n = 400;
    let best = (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .min_by(|a, b| solve(*a).1.total_cmp(&solve(*b).1))
        .expect("non-empty scan");
    let step = (hi - lo) / n as f64;
    let (log_ps, sse) = golden_section_minimize(|x| solve(x).1, (best - step).max(lo), (best + step).min(hi), 1e-10);
    let (r_inf, _) = solve(log_ps);
    if !(r_inf > 0.0) || !sse.is_finite() {
        return Err(PhotonError::NonConvergence(format!("R_inf = {r_inf}")));
    }
    let p_sat = log_ps.exp();
    let at_edge = log_ps - lo < 2.0 * step || hi - log_ps < 2.0 * step;
    Ok(SaturationFit {
        r_inf,
        p_sat,
        residual: (sse / points.len() as f64).sqrt(),
        well_constrained: !at_edge && p_min < p_sat && p_sat < p_max,
    })
}

/// Single-photon rate `rep·occupation·(1 − exp(−P/P_sat))·chain` at each
/// power, with multiplicative Gaussian noise of relative size `noise`.
pub fn saturation_curve(params: &SourceParams, powers: &[f64], noise: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    powers
        .iter()
        .map(|&p| {
            let r = params.rep_rate_mhz * params.emission_probability(p) * params.chain_efficiency;
            let z: f64 = StandardNormal.sample(&mut rng);
            (p, r * (1.0 + noise * z))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation over the mean.
    pub relative_std: f64,
    /// Least-squares slope (value units per hour).
    pub drift_per_hour: f64,
}

/// Statistics of a `(time in hours, value)` series.
pub fn stability_stats(series: &[(f64, f64)]) -> Result<StabilityStats, PhotonError> {
    let n = series.len();
    if n < 10 {
        return Err(PhotonError::TooFewSamples { found: n, needed: 10 });
    }
    let nf = n as f64;
    let mean = series.iter().map(|(_, v)| v).sum::<f64>() / nf;
    let t_mean = series.iter().map(|(t, _)| t).sum::<f64>() / nf;
    let var = series.iter().map(|(_, v)| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let stt: f64 = series.iter().map(|(t, _)| (t - t_mean).powi(2)).sum();
    let stv: f64 = series.iter().map(|(t, v)| (t - t_mean) * (v - mean)).sum();
    Ok(StabilityStats {
        n,
        mean,
        relative_std: var.sqrt() / mean.abs(),
        drift_per_hour: if stt > 0.0 { stv / stt } else { 0.0 },
    })
}

/// `n` samples over `hours`: `mean·(1 + rel_std·x) + drift·t` with `x` a
/// unit-variance AR(1) process of lag-one correlation `correlation`.
pub fn stability_series(
    n: usize,
    hours: f64,
    mean: f64,
    rel_std: f64,
    correlation: f64,
    drift_per_hour: f64,
    seed: u64,
) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho = correlation.clamp(-0.999, 0.999);
    let innovation = (1.0 - rho * rho).sqrt();
    let mut x: f64 = StandardNormal.sample(&mut rng);
    (0..n)
        .map(|i| {
            if i > 0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = rho * x + innovation * z;
            }
            let t = hours * i as f64 / n.max(2).saturating_sub(1) as f64;
            (t, mean * (1.0 + rel_std * x) + drift_per_hour * t)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonMetrics {
    pub g2_zero: Measurement,
    pub v_hom: Measurement,
    pub indistinguishability: Measurement,
    pub indistinguishability_clamped: bool,
    /// Photon rate at the fiber output, corrected for detector efficiency
    /// and dead time (MHz).
    pub rate_mhz: f64,
    pub fibered_brightness: f64,
}

/// Rate at the fiber output from HBT tags over `pulses` pulses. Dead time
/// hides every pulse within it after a click, so the per-pulse click
/// probability `p_m` relates to the true one by `p = p_m/(1 − d·p_m)` with
/// `d` blocked pulses.
pub fn corrected_rate_mhz(tags: &TimeTags, pulses: u64, detector: &DetectorParams) -> f64 {
    let blocked = (detector.dead_time_ps / tags.period_ps()).floor();
    let per_pulse: f64 = tags
        .channels
        .iter()
        .map(|ts| {
            let pm = ts.len() as f64 / pulses as f64;
            pm / (1.0 - blocked * pm).max(f64::EPSILON)
        })
        .sum();
    per_pulse * tags.rep_rate_mhz / detector.efficiency
}

/// g²(0), HOM visibility, corrected indistinguishability, rate and
/// brightness from an HBT and an HOM stream of `pulses` pulses each.
pub fn photon_metrics(
    hbt: &TimeTags,
    hom: &TimeTags,
    pulses: u64,
    detector: &DetectorParams,
    ifm: &Interferometer,
    window_ps: u64,
    bin_width_ps: u64,
) -> Result<PhotonMetrics, PhotonError> {
    let g2 = g2_zero(&histogram_coincidences(hbt, window_ps, bin_width_ps)?)?;
    let v = hom_visibility(&histogram_coincidences(hom, window_ps, bin_width_ps)?)?;
    let m = indistinguishability(
        Measurement::new(v.value.clamp(0.0, 1.0), v.sigma),
        Measurement::new(g2.value.clamp(0.0, 1.0), g2.sigma),
        ifm,
    )?;
    let rate = corrected_rate_mhz(hbt, pulses, detector);
    Ok(PhotonMetrics {
        g2_zero: g2,
        v_hom: v,
        indistinguishability: Measurement::new(m.value, m.sigma),
        indistinguishability_clamped: m.clamped,
        rate_mhz: rate,
        fibered_brightness: fibered_brightness(rate, hbt.rep_rate_mhz, g2.value),
    })
}
