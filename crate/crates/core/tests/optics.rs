use num_complex::Complex64;
use pigtail_core::optics::*;
use proptest::prelude::*;

fn gaussian(grid: Grid2D, w: f64, x0: f64, y0: f64) -> ScalarField {
    ScalarField::from_fn(grid, 945.0, |x, y| {
        Complex64::new((-((x - x0).powi(2) + (y - y0).powi(2)) / (w * w)).exp(), 0.0)
    })
}

fn wide() -> Grid2D {
    Grid2D::square(24.0, 512).unwrap()
}

#[test]
fn gaussian_offset_overlap_matches_closed_form() {
    let w = 1.2;
    let a = gaussian(wide(), w, 0.0, 0.0);
    let b = gaussian(wide(), w, w, 0.0);
    let eta = overlap(&a, &b).unwrap();
    assert!((eta - (-1.0f64).exp()).abs() < 1e-3, "{eta}");
    let c = gaussian(wide(), w, 0.3, -0.4);
    let expect = (-(0.25) / (w * w)).exp();
    assert!((overlap(&a, &c).unwrap() - expect).abs() < 1e-3);
}

#[test]
fn gaussian_waist_mismatch_matches_closed_form() {
    for &(w1, w2) in &[(1.0, 1.5), (0.9, 2.0), (1.1, 1.1)] {
        let a = gaussian(wide(), w1, 0.0, 0.0);
        let b = gaussian(wide(), w2, 0.0, 0.0);
        let expect = (2.0 * w1 * w2 / (w1 * w1 + w2 * w2)).powi(2);
        assert!((overlap(&a, &b).unwrap() - expect).abs() < 1e-3, "{w1} {w2}");
    }
}

#[test]
fn gaussian_beam_waist_growth() {
    let (w0, lambda_um) = (2.5, 0.945);
    let z_r = std::f64::consts::PI * w0 * w0 / lambda_um;
    let beam = gaussian(Grid2D::square(32.0, 512).unwrap(), w0, 0.0, 0.0);
    for z in [5.0, 20.0, 30.0] {
        let out = propagate(&beam, z).unwrap();
        let w = mode_field_diameter(&out) / 2.0;
        let expect = w0 * (1.0 + (z / z_r).powi(2)).sqrt();
        assert!((w / expect - 1.0).abs() < 0.01, "z {z}: {w} vs {expect}");
    }
}

#[test]
fn propagation_conserves_power_at_cold_gap() {
    let pillar = make_pillar_mode(&PillarSpec::reference_device(), 0, Grid2D::default()).unwrap();
    let out = propagate(&pillar, 3.5).unwrap();
    assert!((out.power() / pillar.power() - 1.0).abs() < 1e-6, "{}", out.power() / pillar.power() - 1.0);
}

#[test]
fn fiber_mode_field_diameter() {
    let fiber = FiberSpec::uhna3();
    let coarse = make_fiber_mode(&fiber, Grid2D::square(12.0, 256).unwrap(), 945.0).unwrap();
    let fine = make_fiber_mode(&fiber, Grid2D::square(12.0, 512).unwrap(), 945.0).unwrap();
    assert!((coarse.power() - 1.0).abs() < 1e-12);
    let (a, b) = (mode_field_diameter(&coarse), mode_field_diameter(&fine));
    assert!((a / b - 1.0).abs() < 0.01);
    assert!((1.8..=2.6).contains(&b), "{b}");
    // second-moment MFD of the LP01 solution, evaluated independently
    assert!((b - 2.2219).abs() < 0.01, "{b}");
}

#[test]
fn fiber_mode_rejects_coarse_grid_and_cutoff() {
    let fiber = FiberSpec::uhna3();
    let coarse = Grid2D::square(12.0, 32).unwrap();
    assert!(matches!(make_fiber_mode(&fiber, coarse, 945.0), Err(OpticsError::GridTooCoarse { .. })));
    let thin = FiberSpec { core_diameter: 0.2, ..fiber };
    assert!(matches!(make_fiber_mode(&thin, Grid2D::default(), 945.0), Err(OpticsError::NoGuidedMode(_))));
}

#[test]
fn pillar_fundamental_is_gaussian_like() {
    let grid = Grid2D::default();
    let mode = make_pillar_mode(&PillarSpec::reference_device(), 0, grid).unwrap();
    // brute-force best Gaussian waist
    let lambda = mode.wavelength_nm;
    let best = (500..2000)
        .map(|k| k as f64 * 1e-3)
        .map(|w| overlap(&mode, &ScalarField { wavelength_nm: lambda, ..gaussian(grid, w, 0.0, 0.0) }).unwrap())
        .step_by(5)
        .fold(0.0, f64::max);
    assert!(best >= 0.99, "{best}");
}

#[test]
fn pillar_higher_modes_are_antisymmetric() {
    let grid = Grid2D::default();
    let m1 = make_pillar_mode(&PillarSpec::reference_device(), 1, grid).unwrap();
    assert!(m1.integral().norm() < 1e-9);
    let m0 = make_pillar_mode(&PillarSpec::reference_device(), 0, grid).unwrap();
    let n = grid.samples_x;
    for (j, i) in [(10, 200), (256, 300), (100, 411)] {
        assert!((m0.at(i, j) - m0.at(n - 1 - i, n - 1 - j)).norm() < 1e-12);
        assert!((m1.at(i, j) + m1.at(n - 1 - i, n - 1 - j)).norm() < 1e-12);
    }
}

#[test]
fn coupling_at_contact_is_direct_overlap() {
    let grid = Grid2D::square(12.0, 256).unwrap();
    let pillar = PillarSpec::reference_device();
    let fiber = FiberSpec::uhna3();
    let q = CouplingQuery { grid, ..CouplingQuery::new(pillar.clone(), fiber.clone(), 0.0, 0.0) };
    let a = make_pillar_mode(&pillar, 0, grid).unwrap();
    let b = make_fiber_mode(&fiber, grid, a.wavelength_nm).unwrap();
    let direct = fiber.facet_transmission() * overlap(&a, &b).unwrap();
    assert!((coupling_efficiency(&q).unwrap() - direct).abs() < 1e-12);
}

#[test]
fn grid_refinement_changes_efficiency_by_less_than_half_a_point() {
    let pillar = PillarSpec::reference_device();
    for gap in [0.23, 3.5] {
        let mut q = CouplingQuery::new(pillar.clone(), FiberSpec::uhna3(), gap, 0.4);
        q.grid = Grid2D::square(12.0, 256).unwrap();
        let coarse = coupling_efficiency(&q).unwrap();
        q.grid = Grid2D::square(12.0, 512).unwrap();
        let fine = coupling_efficiency(&q).unwrap();
        assert!((coarse - fine).abs() < 0.005, "gap {gap}: {coarse} vs {fine}");
    }
}

#[test]
fn efficiency_non_increasing_in_gap_at_optimum() {
    let pillar = PillarSpec::reference_device();
    let engine = CouplingEngine::new(&FiberSpec::uhna3(), Grid2D::square(12.0, 256).unwrap(), 945.8).unwrap();
    let mut last = f64::INFINITY;
    for k in 0..=8 {
        let gap = 0.5 * k as f64;
        let (_, eta) = optimal_diameter(&engine, &pillar, gap, (1.5, 5.0), 0.01).unwrap();
        assert!(eta <= last + 1e-9, "gap {gap}");
        last = eta;
    }
}

#[test]
fn offset_sweep_peaks_at_zero() {
    let map = coupling_map(
        &PillarSpec::reference_device(),
        &FiberSpec::uhna3(),
        Grid2D::square(12.0, 256).unwrap(),
        &[2.8, 3.2],
        &[0.23, 2.0],
        &(-14..=14).map(|k| k as f64 * 0.1).collect::<Vec<_>>(),
    )
    .unwrap();
    assert!(map.efficiency.iter().all(|e| (0.0..=1.0).contains(e)));
    for d in 0..2 {
        for g in 0..2 {
            let row: Vec<f64> = (0..map.offsets.len()).map(|o| map.get(d, g, o)).collect();
            let argmax = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert_eq!(map.offsets[argmax], 0.0);
        }
    }
}

#[test]
fn coupling_map_binary_round_trip() {
    let map = coupling_map(
        &PillarSpec::reference_device(),
        &FiberSpec::uhna3(),
        Grid2D::square(12.0, 128).unwrap(),
        &[2.8, 3.0],
        &[0.5],
        &[0.0, 0.5],
    )
    .unwrap();
    let mut buf = Vec::new();
    write_coupling_map_binary(&map, &mut buf).unwrap();
    assert_eq!(&buf[..4], &COUPLING_MAP_MAGIC);
    assert_eq!(read_coupling_map_binary(&buf[..]).unwrap(), map);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn overlap_symmetric_and_bounded(w1 in 0.6f64..2.0, w2 in 0.6f64..2.0, dx in -2.0f64..2.0, dy in -2.0f64..2.0) {
        let g = Grid2D::square(16.0, 128).unwrap();
        let a = gaussian(g, w1, 0.0, 0.0);
        let b = gaussian(g, w2, dx, dy);
        let ab = overlap(&a, &b).unwrap();
        prop_assert_eq!(ab, overlap(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((overlap(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coupling_even_in_offset(d in 0.0f64..1.5, gap in 0.0f64..4.0) {
        let mut q = CouplingQuery::new(PillarSpec::reference_device(), FiberSpec::uhna3(), gap, d);
        q.grid = Grid2D::square(12.0, 128).unwrap();
        let plus = coupling_efficiency(&q).unwrap();
        q.radial_offset = -d;
        prop_assert_eq!(plus, coupling_efficiency(&q).unwrap());
    }

    #[test]
    fn coupling_decreasing_on_pillar_radius(diameter in 2.0f64..3.5, gap in 0.0f64..4.0) {
        let engine = CouplingEngine::new(&FiberSpec::uhna3(), Grid2D::square(12.0, 128).unwrap(), 945.8).unwrap();
        let pillar = PillarSpec::reference_device().with_diameter(diameter);
        let mut last = f64::INFINITY;
        for k in 0..=10 {
            let eta = engine.efficiency(&pillar, gap, pillar.radius() * k as f64 / 10.0).unwrap();
            prop_assert!(eta < last);
            last = eta;
        }
    }

    #[test]
    fn propagation_unitary(w in 0.8f64..1.6, z in 0.0f64..4.0) {
        let g = Grid2D::square(16.0, 128).unwrap();
        let f = gaussian(g, w, 0.0, 0.0);
        let out = propagate(&f, z).unwrap();
        prop_assert!((out.power() / f.power() - 1.0).abs() < 1e-6);
        if z == 0.0 {
            prop_assert_eq!(out, f);
        }
    }
}
