use std::io::{BufWriter, Write};

use serde::{Deserialize, Serialize};

use super::{ExperimentKind, PhotonError, TimeTags};
use crate::measurement::Measurement;

/// Side peaks the normalizing estimators need at minimum.
const MIN_SIDE_PEAKS: usize = 6;

/// Start-stop delay histogram between channel 0 (start) and channel 1
/// (stop). Bin `i` is centered on delay `i·bin_width_ps` for `i` in
/// `-half_bins..=half_bins`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub kind: ExperimentKind,
    pub bin_width_ps: u64,
    pub half_bins: usize,
    /// Pulse period of the source (ps).
    pub period_ps: f64,
    pub counts: Vec<u64>,
}

/// Bin of a delay; a delay exactly between two bins goes to the one nearer
/// zero, so swapping start and stop mirrors the histogram exactly.
fn bin_index(delay: i64, bin_width: u64) -> i64 {
    let a = delay.unsigned_abs();
    let i = ((2 * a + bin_width - 1) / (2 * bin_width)) as i64;
    if delay < 0 {
        -i
    } else {
        i
    }
}

impl CoincidenceHistogram {
    pub fn empty(kind: ExperimentKind, period_ps: f64, window_ps: u64, bin_width_ps: u64) -> Result<Self, PhotonError> {
        if bin_width_ps == 0 || bin_width_ps > window_ps {
            return Err(PhotonError::BinWiderThanWindow { bin_ps: bin_width_ps, window_ps });
        }
        let half_bins = (window_ps / bin_width_ps) as usize;
        Ok(CoincidenceHistogram { kind, bin_width_ps, half_bins, period_ps, counts: vec![0; 2 * half_bins + 1] })
    }

    pub fn centers(&self) -> Vec<i64> {
        let n = self.half_bins as i64;
        (-n..=n).map(|i| i * self.bin_width_ps as i64).collect()
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        let n = self.half_bins as i64;
        (-n..=n + 1).map(|i| (i as f64 - 0.5) * self.bin_width_ps as f64).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn add_delay(&mut self, delay: i64) {
        let i = bin_index(delay, self.bin_width_ps);
        if i.unsigned_abs() as usize <= self.half_bins {
            self.counts[(i + self.half_bins as i64) as usize] += 1;
        }
    }

    /// Add the counts of a histogram accumulated over another block of tags.
    pub fn merge(&mut self, other: &CoincidenceHistogram) -> Result<(), PhotonError> {
        if self.kind != other.kind {
            return Err(PhotonError::Incompatible("kind"));
        }
        if self.bin_width_ps != other.bin_width_ps || self.half_bins != other.half_bins {
            return Err(PhotonError::Incompatible("binning"));
        }
        if (self.period_ps - other.period_ps).abs() > 1e-9 * self.period_ps {
            return Err(PhotonError::Incompatible("period"));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// `delay_ps,counts` with the bin center as delay.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "delay_ps,counts")?;
        for (d, c) in self.centers().iter().zip(&self.counts) {
            writeln!(w, "{d},{c}")?;
        }
        w.flush()
    }
}

/// Histogram of `t_stop - t_start` over `±window_ps` for channels 0 and 1.
pub fn histogram_coincidences(
    tags: &TimeTags,
    window_ps: u64,
    bin_width_ps: u64,
) -> Result<CoincidenceHistogram, PhotonError> {
    let mut h = CoincidenceHistogram::empty(tags.kind, tags.period_ps(), window_ps, bin_width_ps)?;
    if tags.channels.len() < 2 {
        return Err(PhotonError::EmptyChannel(tags.channels.len()));
    }
    let (start, stop) = (&tags.channels[0], &tags.channels[1]);
    if start.is_empty() {
        return Err(PhotonError::EmptyChannel(0));
    }
    if stop.is_empty() {
        return Err(PhotonError::EmptyChannel(1));
    }
    let reach = (h.half_bins as u64 + 1) * bin_width_ps;
    let mut lo = 0;
    for &t0 in start {
        while lo < stop.len() && stop[lo] + reach < t0 {
            lo += 1;
        }
        for &t1 in &stop[lo..] {
            if t1 > t0 + reach {
                break;
            }
            h.add_delay(t1 as i64 - t0 as i64);
        }
    }
    Ok(h)
}

/// Counts per pulse peak: bin centers within half a period of `k·T` belong
/// to peak `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakAreas {
    pub central: u64,
    /// Peaks at `k = ±1`.
    pub neighbors: [u64; 2],
    /// `(k, area)` for every peak with `|k| ≥ 2` lying wholly inside the window.
    pub side: Vec<(i64, u64)>,
}

impl PeakAreas {
    pub fn side_mean(&self) -> f64 {
        self.side.iter().map(|(_, a)| *a as f64).sum::<f64>() / self.side.len() as f64
    }
}

pub fn peak_areas(h: &CoincidenceHistogram) -> PeakAreas {
    let t = h.period_ps;
    let reach = (h.half_bins as f64 + 0.5) * h.bin_width_ps as f64;
    let k_max = ((reach / t) - 0.5).floor() as i64;
    let mut areas = std::collections::BTreeMap::new();
    for (c, n) in h.centers().iter().zip(&h.counts) {
        let k = (*c as f64 / t).round() as i64;
        *areas.entry(k).or_insert(0u64) += n;
    }
    let get = |k: i64| areas.get(&k).copied().unwrap_or(0);
    let side = (2..=k_max).flat_map(|k| [-k, k]).map(|k| (k, get(k))).collect::<Vec<_>>();
    PeakAreas { central: get(0), neighbors: [get(-1), get(1)], side }
}

/// `C/Ā` with Poisson errors on the central area and on the mean side area.
/// A central area of zero uses one count for its error.
fn normalized_central(p: &PeakAreas) -> Result<(f64, f64), PhotonError> {
    if p.side.len() < MIN_SIDE_PEAKS {
        return Err(PhotonError::InsufficientSidePeaks { found: p.side.len(), needed: MIN_SIDE_PEAKS });
    }
    let mean = p.side_mean();
    if mean <= 0.0 {
        return Err(PhotonError::InsufficientSidePeaks { found: 0, needed: MIN_SIDE_PEAKS });
    }
    let c = p.central as f64;
    let ratio = c / mean;
    let var = c.max(1.0) / (mean * mean) + ratio * ratio / (mean * p.side.len() as f64);
    Ok((ratio, var.sqrt()))
}

/// Central-peak area over the mean area of the peaks with `|k| ≥ 2`. The ±1
/// peaks are excluded because detector dead time longer than one period
/// distorts them.
pub fn g2_zero(h: &CoincidenceHistogram) -> Result<Measurement, PhotonError> {
    if h.kind != ExperimentKind::Hbt {
        return Err(PhotonError::WrongKind { found: h.kind, expected: ExperimentKind::Hbt });
    }
    let (g, s) = normalized_central(&peak_areas(h))?;
    Ok(Measurement::new(g, s))
}

/// `V = 1 - 2·C/Ā`, with `Ā` the mean of the uncorrelated peaks `|k| ≥ 2`.
/// With the one-period delay interferometer the far peaks carry weight 1, the
/// ±1 peaks 3/4 and the central peak 1/2 for distinguishable photons.
pub fn hom_visibility(h: &CoincidenceHistogram) -> Result<Measurement, PhotonError> {
    if h.kind != ExperimentKind::Hom {
        return Err(PhotonError::WrongKind { found: h.kind, expected: ExperimentKind::Hom });
    }
    let (r, s) = normalized_central(&peak_areas(h))?;
    Ok(Measurement::new(1.0 - 2.0 * r, 2.0 * s))
}
