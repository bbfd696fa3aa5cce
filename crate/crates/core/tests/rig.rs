use std::sync::{Arc, OnceLock};

use pigtail_core::device::DeviceSpec;
use pigtail_core::rig::{Phase, RigConfig, RigError, RigSession, BASE_TEMPERATURE_K};
use pigtail_core::spectra::{estimate_gap_by_fit, find_mode_dips, ContrastModel, SpectraConfig};
use proptest::prelude::*;
use rayon::prelude::*;

fn model() -> Arc<ContrastModel> {
    static MODEL: OnceLock<Arc<ContrastModel>> = OnceLock::new();
    MODEL.get_or_init(|| Arc::new(ContrastModel::new(DeviceSpec::default()).unwrap())).clone()
}

fn session(config: RigConfig, seed: u64) -> RigSession {
    RigSession::with_model(model(), config, seed).unwrap()
}

fn landed(config: RigConfig, seed: u64) -> RigSession {
    let mut s = session(config, seed);
    s.vertical_landing().unwrap();
    s
}

fn aligned_and_secured(seed: u64) -> RigSession {
    let mut s = landed(RigConfig::default(), seed);
    assert!(s.auto_align().unwrap().success);
    s.secure().unwrap();
    s
}

#[test]
fn seeded_sessions_are_reproducible() {
    let a = session(RigConfig::default(), 42);
    let b = session(RigConfig::default(), 42);
    let c = session(RigConfig::default(), 43);
    assert_eq!(a.state().true_pillar_center, b.state().true_pillar_center);
    assert_ne!(a.state().true_pillar_center, c.state().true_pillar_center);
    assert_eq!(a.state().phase, Phase::Free);
}

#[test]
fn pillar_center_within_misalignment_radius() {
    for seed in 0..200 {
        let [x, y] = session(RigConfig::default(), seed).state().true_pillar_center;
        assert!(x.hypot(y) <= 5.0);
    }
    let cfg = RigConfig { initial_misalignment: 0.0, ..RigConfig::default() };
    assert_eq!(session(cfg, 7).state().true_pillar_center, [0.0, 0.0]);
}

#[test]
fn invalid_config_rejected() {
    let cfg = RigConfig { stage_step_noise: -0.1, ..RigConfig::default() };
    assert!(matches!(RigSession::with_model(model(), cfg, 0), Err(RigError::InvalidConfig(_))));
}

#[test]
fn identical_operations_give_identical_logs() {
    let run = || {
        let mut s = session(RigConfig { start_height: 30.0, ..RigConfig::default() }, 9);
        s.move_stage(1.0, -0.5, 0.0).unwrap();
        s.acquire_spectrum().unwrap();
        s.vertical_landing().unwrap();
        s.secure().unwrap();
        s.run_cooldown(BASE_TEMPERATURE_K, 3).unwrap();
        s.state().clone()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    let seqs: Vec<u64> = a.event_log.events().iter().map(|e| e.seq).collect();
    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1));
    assert!(a.event_log.events().windows(2).all(|w| w[1].time_s >= w[0].time_s));
}

#[test]
fn zero_move_only_logs() {
    let mut s = session(RigConfig::default(), 1);
    let before = s.state().clone();
    s.move_stage(0.0, 0.0, 0.0).unwrap();
    let after = s.state();
    assert_eq!(after.stage_position, before.stage_position);
    assert_eq!(after.stage_error, before.stage_error);
    assert_eq!(after.event_log.len(), before.event_log.len() + 1);
}

#[test]
fn lowering_past_contact_lands_at_design_gap() {
    let mut s = session(RigConfig::default(), 2);
    s.move_stage(0.0, 0.0, -500.0).unwrap();
    assert_eq!(s.state().phase, Phase::Landed);
    assert_eq!(s.state().gap, 3.0);
    assert!(matches!(s.move_stage(0.0, 0.0, -1.0), Err(RigError::MotionForbidden { .. })));
}

#[test]
fn landing_estimates_design_gap() {
    for seed in 0..4 {
        let mut s = session(RigConfig::default(), seed);
        let est = s.vertical_landing().unwrap();
        assert_eq!(s.state().phase, Phase::Landed);
        assert_eq!(s.state().gap, 3.0);
        assert!((est - 3.0).abs() < 0.3, "landing estimate {est}");
        assert_eq!(s.state().landing_gap_estimate, Some(est));
        assert!(matches!(s.vertical_landing(), Err(RigError::WrongPhase { .. })));
    }
}

#[test]
fn stage_fault_aborts_landing() {
    let mut s = session(RigConfig { stage_fault_z: 60.0, ..RigConfig::default() }, 3);
    assert!(matches!(s.vertical_landing(), Err(RigError::LandingFailure { .. })));
    assert_eq!(s.state().phase, Phase::Free);
}

#[test]
fn landed_fringes_match_three_micron_gap() {
    let mut s = landed(RigConfig::default(), 5);
    let spec = s.acquire_spectrum().unwrap();
    // background maxima at λ = 2g/m, minima at λ = 2g/(m + 1/2)
    let at = |l: f64| spec.reflectivity[spec.wavelengths.partition_point(|w| *w < l)];
    let (hi_a, hi_b, lo) = (at(6000.0 / 7.0), at(6000.0 / 6.0 - 0.01), at(6000.0 / 6.5));
    assert!(hi_a > 0.97 && hi_b > 0.97, "{hi_a} {hi_b}");
    assert!(lo < 0.3, "{lo}");
    let fit = estimate_gap_by_fit(&spec, &SpectraConfig::default(), (1.0, 10.0)).unwrap();
    assert!((fit.gap_um - 3.0).abs() < 0.05);
}

#[test]
fn repeated_acquisitions_differ_only_by_noise() {
    let mut s = landed(RigConfig::default(), 6);
    let a = s.acquire_spectrum().unwrap();
    let b = s.acquire_spectrum().unwrap();
    assert_ne!(a.reflectivity, b.reflectivity);
    let rel: f64 = a.reflectivity.iter().zip(&b.reflectivity).map(|(x, y)| ((x - y) / x).powi(2)).sum::<f64>()
        / a.len() as f64;
    // difference of two draws with 0.5% relative noise
    assert!((rel.sqrt() - 0.005 * 2f64.sqrt()).abs() < 1e-3);
}

#[test]
fn alignment_success_rate() {
    let reports: Vec<_> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let mut s = landed(RigConfig::default(), 1000 + seed);
            s.auto_align().unwrap()
        })
        .collect();
    let ok = reports.iter().filter(|r| r.success).count();
    assert!(ok >= 95, "{ok}/100 sessions aligned");
    for r in &reports {
        assert_eq!(r.success, r.residual_offset < 0.2 && r.message.is_none());
        assert!(r.n_spectra_acquired > 0 && !r.trajectory.is_empty());
    }
}

#[test]
fn aligns_onto_given_pillar_position() {
    let mut s = RigSession::with_pillar_at(model(), RigConfig::default(), 11, [3.1, -2.4]).unwrap();
    s.vertical_landing().unwrap();
    let r = s.auto_align().unwrap();
    assert!(r.success && r.residual_offset < 0.2, "{r:?}");
    assert!((r.final_gap - 3.0).abs() < 0.3);
}

#[test]
fn noiseless_centered_alignment() {
    let cfg = RigConfig { initial_misalignment: 0.0, ..RigConfig::noiseless() };
    let mut s = landed(cfg, 0);
    let r = s.auto_align().unwrap();
    assert!(r.success);
    assert_eq!(r.iterations, 1);
    assert!(r.residual_offset < 0.01, "{}", r.residual_offset);
}

#[test]
fn full_raster_alignment() {
    let cfg = RigConfig { full_raster: true, ..RigConfig::default() };
    let mut s = RigSession::with_pillar_at(model(), cfg, 4, [1.2, 0.7]).unwrap();
    s.vertical_landing().unwrap();
    let r = s.auto_align().unwrap();
    assert!(r.success, "{r:?}");
}

#[test]
fn pillar_outside_search_radius_fails() {
    let mut s = RigSession::with_pillar_at(model(), RigConfig::default(), 8, [14.0, 0.0]).unwrap();
    s.vertical_landing().unwrap();
    let r = s.auto_align().unwrap();
    assert!(!r.success);
    assert!(r.message.is_some());
    assert!(r.residual_offset > 10.0);
}

#[test]
fn secure_locks_lateral_motion() {
    let mut s = landed(RigConfig::noiseless(), 12);
    let before = s.state().true_offset();
    s.secure().unwrap();
    assert_eq!(s.state().true_offset(), before);
    assert!(s.state().ferrule_locked);
    assert!(matches!(s.move_stage(0.1, 0.0, 0.0), Err(RigError::MotionForbidden { .. })));
    assert!(matches!(s.secure(), Err(RigError::WrongPhase { .. })));
}

#[test]
fn secure_keeps_contrast_within_noise() {
    let s = aligned_and_secured(13);
    let ev = s.state().event_log.events().iter().rfind(|e| e.event == "secured").unwrap();
    let pre = ev.payload["contrast_before"].as_f64().unwrap();
    let post = ev.payload["contrast_after"].as_f64().unwrap();
    assert!(pre > 0.5);
    assert!((pre - post).abs() < 0.03, "{pre} -> {post}");
}

#[test]
fn cooldown_blue_shifts_and_keeps_alignment() {
    let mut s = aligned_and_secured(14);
    let offset = s.state().true_offset();
    let room = s.acquire_spectrum().unwrap();
    let room_fund = s.measure_dips(&room)[0].center_wavelength;
    let series = s.run_cooldown(BASE_TEMPERATURE_K, 12).unwrap();
    assert_eq!(s.state().phase, Phase::Cold);
    assert_eq!(s.state().true_offset(), offset);
    assert!(series.windows(2).all(|w| w[1].0 < w[0].0));
    let mut last = room_fund;
    for (t, spec) in &series {
        let dips = find_mode_dips(spec, &s.expected_pillar_at(*t), &SpectraConfig::default());
        assert!(dips[0].found, "T = {t}");
        assert!(dips.iter().skip(1).all(|d| d.contrast < dips[0].contrast), "T = {t}");
        assert!(dips[0].center_wavelength <= last + 0.01);
        last = dips[0].center_wavelength;
    }
    assert!(room_fund - last > 4.0);
    let gap = pigtail_core::spectra::measure_gap(&series.last().unwrap().1, &SpectraConfig::default()).unwrap();
    assert!((gap.gap_um - 3.5).abs() < 0.2, "{gap:?}");
}

#[test]
fn nine_cycles_are_stable() {
    let mut s = aligned_and_secured(15);
    let r = s.thermal_cycle(9).unwrap();
    assert_eq!(r.n_cycles, 9);
    assert!(r.std_defined);
    assert!(r.fundamental_wavelength_std_nm < 0.030, "{}", r.fundamental_wavelength_std_nm);
    for m in 0..r.contrasts.len() {
        assert_eq!(r.contrasts[m].len(), 9);
        assert_eq!(r.mode_wavelengths_nm[m].len(), 9);
    }
    assert!((0..9).all(|c| r.contrasts[1][c] < r.contrasts[0][c]));
    assert!(r.second_mode_contrast_max.unwrap() < r.contrasts[0].iter().copied().fold(f64::INFINITY, f64::min));
    assert!(r.gap_estimates_um.iter().all(|g| (g.unwrap() - 3.5).abs() < 0.2));
}

#[test]
fn single_cycle_std_undefined() {
    let mut s = aligned_and_secured(16);
    let r = s.thermal_cycle(1).unwrap();
    assert!(!r.std_defined);
    assert_eq!(r.fundamental_wavelength_std_nm, 0.0);
}

#[test]
fn operations_rejected_in_wrong_phase() {
    let mut s = session(RigConfig::default(), 17);
    assert!(matches!(s.secure(), Err(RigError::WrongPhase { .. })));
    assert!(matches!(s.run_cooldown(BASE_TEMPERATURE_K, 2), Err(RigError::WrongPhase { .. })));
    assert!(matches!(s.thermal_cycle(1), Err(RigError::WrongPhase { .. })));
    assert!(matches!(s.warm_up(), Err(RigError::WrongPhase { .. })));
}

#[derive(Debug, Clone)]
enum Op {
    Move(f64, f64, f64),
    Land,
    Secure,
    Cooldown,
    WarmUp,
    Cycle,
    Acquire,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (-2.0..2.0f64, -2.0..2.0f64, -30.0..5.0f64).prop_map(|(x, y, z)| Op::Move(x, y, z)),
        Just(Op::Land),
        Just(Op::Secure),
        Just(Op::Cooldown),
        Just(Op::WarmUp),
        Just(Op::Cycle),
        Just(Op::Acquire),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn phase_machine_has_no_illegal_transitions(ops in prop::collection::vec(op(), 1..10), seed in 0u64..1000) {
        let mut s = session(RigConfig { start_height: 20.0, ..RigConfig::default() }, seed);
        for op in ops {
            let before = s.state().phase;
            let res = match op {
                Op::Move(x, y, z) => s.move_stage(x, y, z).map(|_| ()),
                Op::Land => s.vertical_landing().map(|_| ()),
                Op::Secure => s.secure().map(|_| ()),
                Op::Cooldown => s.run_cooldown(BASE_TEMPERATURE_K, 2).map(|_| ()),
                Op::WarmUp => s.warm_up().map(|_| ()),
                Op::Cycle => s.thermal_cycle(1).map(|_| ()),
                Op::Acquire => s.acquire_spectrum().map(|_| ()),
            };
            let after = s.state().phase;
            prop_assert!(before.can_become(after), "{before} -> {after}");
            if res.is_err() {
                prop_assert_eq!(before, after);
            }
        }
    }
}
