use pigtail_core::measurement::Measurement;
use pigtail_core::photon::*;
use proptest::prelude::*;

const WINDOW_PS: u64 = 200_000;
const BIN_PS: u64 = 100;

fn run(p: &SourceParams, kind: ExperimentKind, pulses: u64, seed: u64) -> StreamReport {
    simulate_stream(p, &StreamConfig::new(kind, pulses, p.operating_power()), seed).unwrap()
}

fn g2_of(t: &TimeTags) -> Measurement {
    g2_zero(&histogram_coincidences(t, WINDOW_PS, BIN_PS).unwrap()).unwrap()
}

fn v_of(t: &TimeTags) -> Measurement {
    hom_visibility(&histogram_coincidences(t, WINDOW_PS, BIN_PS).unwrap()).unwrap()
}

fn ideal_counting() -> SourceParams {
    let mut p = SourceParams::default();
    p.detector.dead_time_ps = 0.0;
    p
}

/// Visibility of the delay-interferometer model with independent noise
/// photons at ratio `r`, counting every photon.
fn v_oracle(m: f64, r: f64) -> f64 {
    1.0 - ((1.0 - m) + 4.0 * r) / (1.0 + r).powi(2)
}

#[test]
fn default_g2_within_three_sigma() {
    let p = SourceParams::default();
    let (mut central, mut side) = (0.0, 0.0);
    for seed in 1..=6 {
        let r = run(&p, ExperimentKind::Hbt, 10_000_000, seed);
        assert!(!r.too_short);
        let h = histogram_coincidences(&r.tags, WINDOW_PS, BIN_PS).unwrap();
        let g = g2_zero(&h).unwrap();
        assert!(g.agrees_with(0.013, 4.0), "seed {seed}: g2 = {g}");
        let a = peak_areas(&h);
        central += a.central as f64;
        side += a.side_mean();
    }
    let pooled = central / side;
    let sigma = central.sqrt() / side;
    assert!((pooled - 0.013).abs() <= 3.0 * sigma, "pooled g2 = {pooled} ± {sigma}");
}

#[test]
fn visibility_matches_model_oracle_with_ideal_counting() {
    let p = ideal_counting();
    let v = v_of(&run(&p, ExperimentKind::Hom, 10_000_000, 2).tags);
    let expect = v_oracle(p.intrinsic_indistinguishability, p.noise_ratio());
    assert!(v.agrees_with(expect, 3.0), "V = {v}, oracle {expect}");
}

#[test]
fn g2_matches_model_with_ideal_counting() {
    let g = g2_of(&run(&ideal_counting(), ExperimentKind::Hbt, 10_000_000, 3).tags);
    assert!(g.agrees_with(0.013, 3.0), "g2 = {g}");
}

#[test]
fn coherent_light_gives_unity() {
    let p = SourceParams::default();
    let cfg = StreamConfig { light: Light::Coherent { mean_photons: 0.2 }, ..StreamConfig::new(ExperimentKind::Hbt, 2_000_000, 1.0) };
    let g = g2_of(&simulate_stream(&p, &cfg, 4).unwrap().tags);
    assert!(g.agrees_with(1.0, 3.0), "g2 = {g}");
}

#[test]
fn perfect_source_has_no_central_peak() {
    let p = SourceParams { multiphoton_prob: 0.0, ..SourceParams::default() };
    let g = g2_of(&run(&p, ExperimentKind::Hbt, 2_000_000, 5).tags);
    assert!(g.value.abs() <= 3.0 * g.sigma, "g2 = {g}");
}

#[test]
fn distinguishable_photons_give_zero_visibility() {
    // Low brightness keeps two photons in one detector slot rare.
    let p = SourceParams {
        intrinsic_indistinguishability: 0.0,
        multiphoton_prob: 0.0,
        chain_efficiency: 0.05,
        ..SourceParams::default()
    };
    let v = v_of(&run(&p, ExperimentKind::Hom, 10_000_000, 6).tags);
    assert!(v.agrees_with(0.0, 3.0), "V = {v}");
}

#[test]
fn identical_photons_give_unit_visibility() {
    let p = SourceParams { intrinsic_indistinguishability: 1.0, multiphoton_prob: 0.0, ..SourceParams::default() };
    let v = v_of(&run(&p, ExperimentKind::Hom, 2_000_000, 7).tags);
    assert!(v.agrees_with(1.0, 3.0), "V = {v}");
}

#[test]
fn detected_rate_near_operating_point() {
    let p = SourceParams::default();
    let r = run(&p, ExperimentKind::Hbt, 10_000_000, 8);
    let rate = corrected_rate_mhz(&r.tags, r.pulses, &p.detector);
    assert!((rate - 16.75).abs() / 16.75 < 0.01, "rate {rate}");
}

#[test]
fn metrics_bundle() {
    let p = SourceParams::default();
    let hbt = run(&p, ExperimentKind::Hbt, 2_000_000, 9);
    let hom = run(&p, ExperimentKind::Hom, 2_000_000, 10);
    let m = photon_metrics(&hbt.tags, &hom.tags, 2_000_000, &p.detector, &Interferometer::default(), WINDOW_PS, BIN_PS).unwrap();
    let expect = m.v_hom.value + 2.0 * m.g2_zero.value;
    assert!((m.indistinguishability.value - expect).abs() < 1e-12);
    assert!((m.fibered_brightness - m.rate_mhz / p.rep_rate_mhz * (1.0 - m.g2_zero.value)).abs() < 1e-12);
}

#[test]
fn short_stream_flagged() {
    assert!(run(&SourceParams::default(), ExperimentKind::Hbt, 10_000, 1).too_short);
}

#[test]
fn wrong_experiment_kind_rejected() {
    let r = run(&SourceParams::default(), ExperimentKind::Hom, 100_000, 1);
    let h = histogram_coincidences(&r.tags, WINDOW_PS, BIN_PS).unwrap();
    assert!(matches!(g2_zero(&h), Err(PhotonError::WrongKind { .. })));
}

#[test]
fn narrow_window_lacks_side_peaks() {
    let r = run(&SourceParams::default(), ExperimentKind::Hbt, 100_000, 1);
    let h = histogram_coincidences(&r.tags, 40_000, BIN_PS).unwrap();
    assert!(matches!(g2_zero(&h), Err(PhotonError::InsufficientSidePeaks { .. })));
}

#[test]
fn simulated_stream_survives_binary_round_trip() {
    let r = run(&SourceParams::default(), ExperimentKind::Hbt, 50_000, 11);
    let mut buf = Vec::new();
    write_time_tags(&r.tags, &mut buf).unwrap();
    assert_eq!(buf.len(), 28 + 9 * r.tags.total());
    assert_eq!(read_time_tags(&buf[..]).unwrap(), r.tags);
}

#[test]
fn same_seed_same_stream() {
    let p = SourceParams::default();
    assert_eq!(run(&p, ExperimentKind::Hom, 300_000, 12), run(&p, ExperimentKind::Hom, 300_000, 12));
}

#[test]
fn errors_shrink_as_inverse_root_n() {
    let p = SourceParams::default();
    let mut sigmas = Vec::new();
    for (i, n) in [100_000u64, 1_000_000, 10_000_000].into_iter().enumerate() {
        let g = g2_of(&run(&p, ExperimentKind::Hbt, n, 20 + i as u64).tags);
        assert!(g.agrees_with(0.013, 4.0), "N = {n}: {g}");
        sigmas.push(g.sigma);
    }
    for w in sigmas.windows(2) {
        let ratio = w[0] / w[1];
        assert!((2.5..4.0).contains(&ratio), "σ ratio {ratio} for 10× pulses");
    }
}

#[test]
fn correction_formula_values() {
    let ideal = Interferometer::default();
    let m = indistinguishability(Measurement::exact(0.950), Measurement::exact(0.013), &ideal).unwrap();
    assert!((m.value - 0.976).abs() < 1e-12);
    assert!((m.value - 0.975).abs() <= 0.003);
    let eps = 1.0 - 0.999f64.sqrt();
    let lossy = Interferometer { epsilon: eps, ..ideal };
    let m = indistinguishability(Measurement::exact(0.950), Measurement::exact(0.013), &lossy).unwrap();
    assert!((m.value - 0.976 / 0.999).abs() < 1e-12);
}

#[test]
fn brightness_arithmetic() {
    let b = fibered_brightness(16.75, 79.21, 0.013);
    assert!((b - 0.2087).abs() < 1e-4);
    assert!((b - 0.208).abs() <= 0.008);
}

#[test]
fn saturation_fit_recovers_generator() {
    let p = SourceParams::default();
    let powers: Vec<f64> = (1..=24).map(|i| 0.25 * i as f64).collect();
    let fit = fit_saturation(&saturation_curve(&p, &powers, 0.005, 30)).unwrap();
    assert!((fit.r_inf - 17.60).abs() < 0.1, "R_inf {}", fit.r_inf);
    assert!(fit.well_constrained);
}

#[test]
fn noiseless_saturation_points_fit_exactly() {
    let p = SourceParams::default();
    let powers = [0.2, 0.5, 1.0, 2.0, 3.0, 5.0];
    let fit = fit_saturation(&saturation_curve(&p, &powers, 0.0, 0)).unwrap();
    assert!(fit.residual < 1e-6, "residual {}", fit.residual);
    assert!((fit.p_sat - 1.0).abs() < 1e-4 && (fit.r_inf - 17.60).abs() < 1e-4);
}

#[test]
fn saturated_points_flag_p_sat() {
    let p = SourceParams::default();
    let fit = fit_saturation(&saturation_curve(&p, &[20.0, 30.0, 40.0, 50.0], 0.01, 31)).unwrap();
    assert!(!fit.well_constrained);
}

#[test]
fn saturation_fit_needs_four_points() {
    assert!(matches!(fit_saturation(&[(1.0, 1.0); 3]), Err(PhotonError::TooFewSamples { .. })));
}

#[test]
fn stability_recovers_generator_spread() {
    for (target, seed) in [(0.0282, 40), (0.0069, 41)] {
        let series = stability_series(3600, 10.0, 16.75, target, 0.5, 0.0, seed);
        let s = stability_stats(&series).unwrap();
        assert!((s.relative_std - target).abs() <= 0.003, "{} vs {target}", s.relative_std);
    }
}

#[test]
fn constant_series_has_no_spread() {
    let series: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 3.0)).collect();
    let s = stability_stats(&series).unwrap();
    assert_eq!(s.relative_std, 0.0);
    assert_eq!(s.drift_per_hour, 0.0);
}

#[test]
fn injected_drift_recovered() {
    let drift = 0.02 * 16.75;
    let s = stability_stats(&stability_series(3600, 10.0, 16.75, 0.0282, 0.5, drift, 42)).unwrap();
    assert!((s.drift_per_hour - drift).abs() / drift < 0.05, "slope {}", s.drift_per_hour);
}

#[test]
fn stability_needs_ten_samples() {
    assert!(stability_stats(&[(0.0, 1.0); 9]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn estimators_ignore_time_translation(offset in 0u64..1_000_000_000, seed in 0u64..1000) {
        let p = SourceParams::default();
        let hbt = run(&p, ExperimentKind::Hbt, 200_000, seed).tags;
        let hom = run(&p, ExperimentKind::Hom, 200_000, seed).tags;
        prop_assert_eq!(g2_of(&hbt), g2_of(&hbt.shifted(offset)));
        prop_assert_eq!(v_of(&hom), v_of(&hom.shifted(offset)));
    }

    #[test]
    fn g2_ignores_channel_relabeling(seed in 0u64..1000) {
        let tags = run(&SourceParams::default(), ExperimentKind::Hbt, 200_000, seed).tags;
        let swapped = TimeTags { channels: vec![tags.channels[1].clone(), tags.channels[0].clone()], ..tags.clone() };
        prop_assert_eq!(g2_of(&tags), g2_of(&swapped));
    }

    #[test]
    fn correction_is_monotone(v in 0.0..0.9f64, g in 0.0..0.04f64, dv in 0.0..0.05f64, dg in 0.0..0.01f64) {
        let ifm = Interferometer::default();
        let m = |v: f64, g: f64| indistinguishability(Measurement::exact(v), Measurement::exact(g), &ifm).unwrap().value;
        prop_assert!(m(v + dv, g) >= m(v, g));
        prop_assert!(m(v, g + dg) >= m(v, g));
        prop_assert_eq!(m(v, 0.0), v);
    }
}
