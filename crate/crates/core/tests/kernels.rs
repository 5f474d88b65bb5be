use darkspin::kernels::*;
use darkspin::lindblad::*;
use darkspin::physics::TWO_PI;
use proptest::prelude::*;

#[test]
fn oracle_sweep_agrees_with_closed_forms() {
    let rows = residual_sweep(40, 99).unwrap();
    let max = rows.iter().map(|r| r.max_residual()).fold(0.0, f64::max);
    assert!(max < 1e-6, "{max}");
    assert!(rows.iter().any(|r| r.gamma_e1 > TWO_PI * r.v_mhz));
}

#[test]
fn over_damped_pair_matches_oracle() {
    let p = KernelParams::new(TWO_PI * 0.3, 4.0 * TWO_PI * 0.3, 0.5, 6.0).unwrap();
    assert!((f_deer(&p) - run_deer(&p).unwrap()).abs() < 1e-6);
    assert!((f_echo(&p) - run_echo(&p).unwrap()).abs() < 1e-6);
}

#[test]
fn dephasing_does_not_enter_either_signal() {
    let base = KernelParams::new(TWO_PI * 1.3, 2.1, 0.0, 1.7).unwrap();
    let (d0, e0) = (run_deer(&base).unwrap(), run_echo(&base).unwrap());
    for g2 in [0.1, 3.0, 40.0] {
        let p = KernelParams { gamma_e2: g2, ..base };
        assert!((run_deer(&p).unwrap() - d0).abs() < 1e-8);
        assert!((run_echo(&p).unwrap() - e0).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn echo_is_one_without_depolarization(v in -60.0f64..60.0, t in 0.0f64..40.0) {
        prop_assert!((f_echo(&KernelParams::new(v, 0.0, 0.0, t).unwrap()) - 1.0).abs() <= 1e-9);
    }

    // the kernels depend on (V, γ, t) only through Vt and γt
    #[test]
    fn time_rescaling(v in -30.0f64..30.0, r in 0.0f64..3.0, t in 0.0f64..20.0, k in 0.1f64..10.0) {
        let g = r * v.abs();
        let a = KernelParams::new(v, g, 0.0, t).unwrap();
        let b = KernelParams::new(v * k, g * k, 0.0, t / k).unwrap();
        prop_assert!((f_deer(&a) - f_deer(&b)).abs() < 1e-9);
        prop_assert!((f_echo(&a) - f_echo(&b)).abs() < 1e-9);
    }

    #[test]
    fn real_form_matches_difference(v in -30.0f64..30.0, r in 0.0f64..3.0, t in 0.0f64..20.0) {
        let g = r * v.abs();
        let p = KernelParams::new(v, g, 0.0, t).unwrap();
        prop_assert!((pair_decay(v, g, t) - f_deer_minus_echo(&p)).abs() < 1e-9);
    }

    #[test]
    fn signals_are_even_in_the_coupling(v in 0.01f64..30.0, r in 0.0f64..3.0, t in 0.0f64..20.0) {
        let a = KernelParams::new(v, r * v, 0.0, t).unwrap();
        let b = KernelParams::new(-v, r * v, 0.0, t).unwrap();
        prop_assert!((f_deer(&a) - f_deer(&b)).abs() < 1e-12);
        prop_assert!((f_echo(&a) - f_echo(&b)).abs() < 1e-12);
    }
}
