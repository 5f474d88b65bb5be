use darkspin::physics::PhysicalConstants;
use darkspin::spectra::*;
use proptest::prelude::*;

fn n14(omega_e: f64) -> P1Params {
    P1Params::new(Isotope::N14, DERIVED_A_PAR_14N, DERIVED_A_PERP_14N, 0.0, omega_e, 0.0).unwrap()
}

fn triplet(omega_e: f64, axis: Axis, sd: f64) -> [Peak; 3] {
    let l = p1_resonances(&n14(omega_e), axis);
    [Peak::new(l[0].frequency, sd), Peak::new(l[1].frequency, sd), Peak::new(l[2].frequency, sd)]
}

/// Dark-spin line that a g = 2.0067 spin would show in the field implied by ω_e = 551.9 MHz.
fn dark_peak(g: f64, omega_e: f64, c: &PhysicalConstants) -> f64 {
    g * c.mu_bohr_over_h_mhz_per_gauss() * omega_e / c.gamma_electron_linear()
}

#[test]
fn derived_constants_reproduce_splittings() {
    let on = p1_resonances(&n14(549.1), Axis::On);
    let off = p1_resonances(&n14(554.7), Axis::Off);
    assert!((on[0].frequency - on[2].frequency - 227.1).abs() < 1e-9);
    assert!((off[0].frequency - off[2].frequency - 170.1).abs() < 1e-9);
    let (ap, _) = off_axis_constants(113.5, 81.4);
    assert!((ap - 85.0).abs() < 0.05);
}

#[test]
fn n14_pipeline() {
    let c = PhysicalConstants::default();
    let dark = Peak::new(dark_peak(2.0067, 551.9, &c), 0.5);
    let r = g_factor_14n(triplet(549.1, Axis::On, 0.5), triplet(554.7, Axis::Off, 0.5), dark, &c).unwrap();
    assert!((r.omega_e_candidates[0] - 549.1).abs() < 1e-9);
    assert!((r.omega_e_candidates[1] - 554.7).abs() < 1e-9);
    assert!((r.omega_e_avg - 551.9).abs() < 1e-9);
    assert!((r.b_eff - 196.9).abs() < 0.1, "{}", r.b_eff);
    assert!((r.g - 2.0067).abs() < 0.003);
    assert!(r.g_stderr > 0.0 && r.g_stderr < 0.01);
    assert!(r.warnings.is_empty());
}

#[test]
fn n14_pipeline_rejects_mixed_triplets() {
    let c = PhysicalConstants::default();
    let mut on = triplet(549.1, Axis::On, 0.5);
    on[1].center -= 60.0;
    assert!(g_factor_14n(on, triplet(554.7, Axis::Off, 0.5), Peak::new(553.0, 0.5), &c).is_err());
}

#[test]
fn doubling_gamma_halves_field_and_doubles_g() {
    let c = PhysicalConstants::default();
    let c2 = PhysicalConstants::new(c.mu0_over_4pi(), c.hbar(), c.gamma_electron(), 2.0 * c.gamma_electron_linear(), c.mu_bohr()).unwrap();
    let args = (triplet(549.1, Axis::On, 0.5), triplet(554.7, Axis::Off, 0.5), Peak::new(553.0, 0.5));
    let a = g_factor_14n(args.0, args.1, args.2, &c).unwrap();
    let b = g_factor_14n(args.0, args.1, args.2, &c2).unwrap();
    assert!((b.b_eff - a.b_eff / 2.0).abs() < 1e-12 * a.b_eff);
    assert!((b.g - 2.0 * a.g).abs() < 1e-12 * a.g);
}

fn n15_input(c: &PhysicalConstants) -> Gfactor15nInput {
    // the two printed roots fix S/2 = r₁ + r₂ and A² = 4 r₁ r₂; the 120.1 MHz
    // splitting then places the two lines
    let (r1, r2): (f64, f64) = (549.0944, 11.6556);
    let sum = 2.0 * (r1 + r2);
    let a = (4.0 * r1 * r2).sqrt();
    Gfactor15nInput {
        t1: Peak::new((sum + 120.1) / 2.0, 0.5),
        t2: Peak::new((sum - 120.1) / 2.0, 0.5),
        a_perp: a,
        a_perp_kind: PerpConstant::OnAxis,
        omega_n: 0.0,
        dark: Peak::new(dark_peak(1.9966, r1, c), 0.5),
        window: (400.0, 700.0),
    }
}

#[test]
fn n15_quadratic_roots_and_g() {
    let c = PhysicalConstants::default();
    let r = g_factor_15n(&n15_input(&c), &c).unwrap();
    assert!((r.omega_e_candidates[0] - 549.0944).abs() < 1e-9);
    assert!((r.omega_e_candidates[1] - 11.6556).abs() < 1e-9);
    assert!((r.omega_e_avg - 549.0944).abs() < 1e-9);
    assert!((r.g - 1.9966).abs() < 0.003);
}

#[test]
fn n15_window_must_select_one_root() {
    let c = PhysicalConstants::default();
    let mut inp = n15_input(&c);
    inp.window = (0.0, 1000.0);
    assert!(matches!(g_factor_15n(&inp, &c), Err(darkspin::Error::Ambiguous(_))));
    inp.window = (100.0, 200.0);
    assert!(g_factor_15n(&inp, &c).is_err());
}

#[test]
fn n15_without_transverse_coupling_has_one_root() {
    let (hi, lo) = quadratic_15n_roots(1100.0, 0.0, 0.0).unwrap();
    assert_eq!(hi, 550.0);
    assert_eq!(lo, 0.0);
}

#[test]
fn perturbative_error_falls_as_inverse_square() {
    let err = |we: f64| -> f64 {
        let p = P1Params::new(Isotope::N14, 114.0, 81.0, 0.0, we, 0.0).unwrap();
        let mut exact = p1_exact(&p, Axis::On).unwrap();
        exact.sort_by(|a, b| b.m_i.total_cmp(&a.m_i));
        exact.iter().zip(p1_resonances(&p, Axis::On)).map(|(e, q)| (e.frequency - q.frequency).abs()).fold(0.0, f64::max)
    };
    assert!(err(550.0) < 2.5);
    let xs: Vec<f64> = (0..=10).map(|k| (550.0f64 * 10f64.powf(k as f64 / 10.0)).ln()).collect();
    let ys: Vec<f64> = xs.iter().map(|x| err(x.exp()).ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope + 2.0).abs() < 0.2, "slope {slope}");
}

proptest! {
    #[test]
    fn n14_sum_rule(ap in -200.0f64..200.0, aq in -150.0f64..150.0, we in 200.0f64..3000.0) {
        let p = P1Params::new(Isotope::N14, ap, aq, 0.0, we, 0.0).unwrap();
        for axis in [Axis::On, Axis::Off] {
            let l = p1_resonances(&p, axis);
            let rhs = l[0].frequency + l[2].frequency - l[1].frequency;
            prop_assert!((rhs - we).abs() <= 1e-12 * we);
        }
    }

    #[test]
    fn off_axis_map_is_linear(ap in -200.0f64..200.0, aq in -200.0f64..200.0, k in -3.0f64..3.0) {
        let (a, b) = off_axis_constants(ap, aq);
        let (c, d) = off_axis_constants(k * ap, k * aq);
        prop_assert!((c - k * a).abs() < 1e-10 && (d - k * b).abs() < 1e-10);
    }
}
