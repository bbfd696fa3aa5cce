//! Shared inputs for the pipeline benchmarks.

use pigtail_core::device::DeviceSpec;
use pigtail_core::photon::{simulate_stream, ExperimentKind, SourceParams, StreamConfig, TimeTags};
use pigtail_core::spectra::{synth_reflectivity, Band, ContrastModel, Probe, Spectrum};

pub fn contrast_model() -> ContrastModel {
    ContrastModel::new(DeviceSpec::default()).expect("default device")
}

/// Noisy spectrum at the stamp gap with a small lateral offset.
pub fn landed_spectrum(model: &ContrastModel) -> Spectrum {
    synth_reflectivity(model, &Probe::new(3.0, (0.3, -0.2)), &Band::default(), 0.005, 1).expect("synthesis")
}

pub fn stream(kind: ExperimentKind, pulses: u64) -> TimeTags {
    let src = SourceParams::default();
    simulate_stream(&src, &StreamConfig::new(kind, pulses, src.operating_power()), 1).expect("simulation").tags
}
