use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExperimentKind, PhotonError, SourceParams, TimeTags};

/// Streams shorter than this are flagged as too short for the statistical targets.
const MIN_PULSES: u64 = 1_000_000;
/// First pulse time, keeping jittered tags positive (ps).
const START_PS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum Light {
    /// The quantum-dot source described by [`SourceParams`].
    SinglePhoton,
    /// Attenuated laser pulses with Poisson photon number at the fiber output.
    Coherent { mean_photons: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub kind: ExperimentKind,
    pub pulses: u64,
    /// Excitation power in units of the source's saturation power scale.
    pub power: f64,
    pub light: Light,
    /// Pulses per independently seeded generation block.
    pub block_pulses: u64,
}

impl StreamConfig {
    pub fn new(kind: ExperimentKind, pulses: u64, power: f64) -> Self {
        StreamConfig { kind, pulses, power, light: Light::SinglePhoton, block_pulses: 1 << 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub tags: TimeTags,
    pub pulses: u64,
    pub duration_ps: f64,
    /// Photons that reached the fiber output.
    pub photons_emitted: u64,
    /// Set when the stream holds fewer than 10⁶ pulses.
    pub too_short: bool,
}

#[derive(Debug, Clone, Copy)]
struct Photon {
    /// Arrival at the last beam splitter (ps).
    time: f64,
    signal: bool,
}

#[derive(Default)]
struct Block {
    events: Vec<(u8, f64)>,
    /// HOM photons in the first slot of the block, resolved later together
    /// with the previous block's spill.
    first_slot: Vec<Photon>,
    spill: Vec<Photon>,
    emitted: u64,
}

struct Model<'a> {
    params: &'a SourceParams,
    config: &'a StreamConfig,
    period: f64,
    signal_p: f64,
    noise_p: f64,
    jitter: Option<Normal<f64>>,
    coherent: Option<Poisson<f64>>,
}

impl Model<'_> {
    fn emit(&self, pulse: u64, rng: &mut ChaCha8Rng, out: &mut Vec<Photon>) {
        let t0 = START_PS + pulse as f64 * self.period;
        let decay = |rng: &mut ChaCha8Rng| -self.params.decay_time_ps * (1.0 - rng.random::<f64>()).ln();
        match &self.coherent {
            Some(poisson) => {
                let n = poisson.sample(rng) as u64;
                for _ in 0..n {
                    out.push(Photon { time: t0 + decay(rng), signal: false });
                }
            }
            None => {
                if rng.random::<f64>() < self.signal_p {
                    out.push(Photon { time: t0 + decay(rng), signal: true });
                }
                if self.noise_p > 0.0 && rng.random::<f64>() < self.noise_p {
                    out.push(Photon { time: t0 + decay(rng), signal: false });
                }
            }
        }
    }

    fn detect(&self, channel: u8, time: f64, rng: &mut ChaCha8Rng, events: &mut Vec<(u8, f64)>) {
        if rng.random::<f64>() < self.params.detector.efficiency {
            let j = self.jitter.map_or(0.0, |n| n.sample(rng));
            events.push((channel, time + j));
        }
    }

    /// Route the photons meeting at the output splitter of the interferometer.
    /// Two signal photons bunch with probability equal to their overlap.
    fn resolve_slot(&self, photons: &[Photon], rng: &mut ChaCha8Rng, events: &mut Vec<(u8, f64)>) {
        let signals: Vec<usize> = (0..photons.len()).filter(|&i| photons[i].signal).collect();
        let bunch = signals.len() == 2 && rng.random::<f64>() < self.params.intrinsic_indistinguishability;
        let shared = rng.random::<bool>() as u8;
        for (i, p) in photons.iter().enumerate() {
            let ch = if bunch && signals.contains(&i) { shared } else { rng.random::<bool>() as u8 };
            self.detect(ch, p.time, rng, events);
        }
    }

    fn dark_counts(&self, from: f64, to: f64, rng: &mut ChaCha8Rng, events: &mut Vec<(u8, f64)>) {
        let mean = self.params.detector.dark_rate_hz * (to - from) * 1e-12;
        if mean <= 0.0 {
            return;
        }
        let dist = Poisson::new(mean).expect("positive mean");
        for ch in 0..2u8 {
            let n = dist.sample(rng) as u64;
            for _ in 0..n {
                events.push((ch, from + (to - from) * rng.random::<f64>()));
            }
        }
    }

    fn block(&self, seed: u64, b: u64) -> Block {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b + 1);
        let first = b * self.config.block_pulses;
        let last = (first + self.config.block_pulses).min(self.config.pulses);
        let mut out = Block::default();
        let mut pulse_photons = Vec::new();
        let mut pending: Vec<Photon> = Vec::new();
        for k in first..last {
            pulse_photons.clear();
            self.emit(k, &mut rng, &mut pulse_photons);
            out.emitted += pulse_photons.len() as u64;
            match self.config.kind {
                ExperimentKind::Hbt => {
                    for p in &pulse_photons {
                        let ch = rng.random::<bool>() as u8;
                        self.detect(ch, p.time, &mut rng, &mut out.events);
                    }
                }
                ExperimentKind::Hom => {
                    let mut slot = std::mem::take(&mut pending);
                    for p in &pulse_photons {
                        if rng.random::<bool>() {
                            pending.push(Photon { time: p.time + self.period, ..*p });
                        } else {
                            slot.push(*p);
                        }
                    }
                    if k == first {
                        out.first_slot = slot;
                    } else {
                        self.resolve_slot(&slot, &mut rng, &mut out.events);
                    }
                }
            }
        }
        out.spill = pending;
        let t = |k: u64| START_PS + (k as f64 - 0.5) * self.period;
        self.dark_counts(t(first), t(last), &mut rng, &mut out.events);
        out
    }
}

/// Simulate detector time tags for `config.pulses` excitation pulses.
///
/// Each pulse yields a signal photon with probability
/// `occupation·(1 − exp(−P/P_sat))·chain` and, independently, a noise photon
/// at the rate that gives the configured g²(0). Photons are split 50/50
/// (HBT) or pass a one-period delay interferometer (HOM), then hit
/// detectors with finite efficiency, jitter, dead time and dark counts.
pub fn simulate_stream(params: &SourceParams, config: &StreamConfig, seed: u64) -> Result<StreamReport, PhotonError> {
    params.validate()?;
    if config.pulses == 0 || config.block_pulses == 0 {
        return Err(PhotonError::InvalidParams("stream needs pulses and a positive block size".into()));
    }
    if !(config.power >= 0.0) || !config.power.is_finite() {
        return Err(PhotonError::InvalidParams(format!("excitation power {}", config.power)));
    }
    let coherent = match config.light {
        Light::SinglePhoton => None,
        Light::Coherent { mean_photons } => {
            if !(mean_photons > 0.0) || !mean_photons.is_finite() {
                return Err(PhotonError::InvalidParams(format!("coherent mean photon number {mean_photons}")));
            }
            Some(Poisson::new(mean_photons).map_err(|e| PhotonError::InvalidParams(e.to_string()))?)
        }
    };
    let signal = params.emission_probability(config.power) * params.chain_efficiency;
    let model = Model {
        params,
        config,
        period: params.period_ps(),
        signal_p: signal,
        noise_p: signal * params.noise_ratio(),
        jitter: (params.detector.jitter_ps > 0.0).then(|| Normal::new(0.0, params.detector.jitter_ps).expect("finite sigma")),
        coherent,
    };
    let n_blocks = config.pulses.div_ceil(config.block_pulses);
    let blocks: Vec<Block> = (0..n_blocks).into_par_iter().map(|b| model.block(seed, b)).collect();

    let mut events: Vec<(u8, f64)> = Vec::new();
    let mut emitted = 0;
    let mut boundary = ChaCha8Rng::seed_from_u64(seed);
    boundary.set_stream(0);
    let mut spill: Vec<Photon> = Vec::new();
    for block in blocks {
        emitted += block.emitted;
        events.extend_from_slice(&block.events);
        if config.kind == ExperimentKind::Hom {
            let mut slot = std::mem::take(&mut spill);
            slot.extend_from_slice(&block.first_slot);
            model.resolve_slot(&slot, &mut boundary, &mut events);
            spill = block.spill;
        }
    }
    model.resolve_slot(&spill, &mut boundary, &mut events);

    let dead = params.detector.dead_time_ps;
    let mut channels = vec![Vec::new(); 2];
    for (ch, t) in events {
        channels[ch as usize].push(t.round().max(0.0) as u64);
    }
    for ts in &mut channels {
        ts.sort_unstable();
        let mut last: Option<u64> = None;
        ts.retain(|&t| {
            let free = last.is_none_or(|l| (t - l) as f64 >= dead);
            if free {
                last = Some(t);
            }
            free
        });
    }
    let tags = TimeTags::new(config.kind, params.rep_rate_mhz, channels)?;
    Ok(StreamReport {
        tags,
        pulses: config.pulses,
        duration_ps: config.pulses as f64 * model.period,
        photons_emitted: emitted,
        too_short: config.pulses < MIN_PULSES,
    })
}

/// Two or more independent continuous-time Poisson streams at `rate_hz` each.
pub fn poisson_tags(
    kind: ExperimentKind,
    rep_rate_mhz: f64,
    rate_hz: f64,
    duration_ps: f64,
    n_channels: usize,
    seed: u64,
) -> Result<TimeTags, PhotonError> {
    if !(rate_hz >= 0.0 && duration_ps > 0.0) {
        return Err(PhotonError::InvalidParams("Poisson stream needs rate ≥ 0 and positive duration".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = rate_hz * duration_ps * 1e-12;
    let dist = (mean > 0.0).then(|| Poisson::new(mean)).transpose().map_err(|e| PhotonError::InvalidParams(e.to_string()))?;
    let channels = (0..n_channels)
        .map(|_| {
            let n = dist.as_ref().map_or(0, |d| d.sample(&mut rng) as usize);
            let mut ts: Vec<u64> = (0..n).map(|_| (rng.random::<f64>() * duration_ps) as u64).collect();
            ts.sort_unstable();
            ts
        })
        .collect();
    TimeTags::new(kind, rep_rate_mhz, channels)
}
