use darkspin::nucleation::*;
use proptest::prelude::*;

fn reported() -> NucleationModel {
    NucleationModel::new(0.047, 0.04667).unwrap()
}

#[test]
fn branches_are_continuous_and_smooth() {
    let b = reported().branch_limits();
    assert!((b.constrained_value / b.hemisphere_value - 1.0).abs() < 1e-12);
    assert!((b.constrained_slope / b.hemisphere_slope - 1.0).abs() < 1e-8);
    let m = reported();
    let rc = m.r_cov();
    assert!((b.hemisphere_value - 2.0 / 3.0 * m.n_d() * std::f64::consts::PI * rc.powi(3)).abs() < 1e-15);
}

#[test]
fn slope_matches_finite_differences() {
    let m = reported();
    let rc = m.r_cov();
    for r in [0.3 * rc, 0.9 * rc, 1.1 * rc, 2.0 * rc, 10.0 * rc] {
        let h = 1e-5 * r;
        let fd = (m.thickness_at_radius(r + h) - m.thickness_at_radius(r - h)) / (2.0 * h);
        assert!((fd / m.thickness_slope_at_radius(r) - 1.0).abs() < 1e-7, "r={r}");
    }
}

#[test]
fn unit_cell_radius_from_reported_density() {
    assert!((reported().r_cov() - 2.60).abs() < 0.02);
    assert_eq!(sites_per_um2(0.047), 47_000.0);
}

#[test]
fn asymptotic_growth_rate() {
    let m = reported();
    let x = 1e4 * m.coalescence_cycles();
    assert!((m.growth_per_cycle(x).unwrap() / m.g() - 1.0).abs() < 1e-6);
    assert_eq!(m.film_thickness(0.0).unwrap(), 0.0);
    assert!(m.film_thickness(-1.0).is_err());
}

fn synthetic(m: &NucleationModel, cycles: &[f64]) -> Vec<f64> {
    cycles.iter().map(|x| m.film_thickness(*x).unwrap()).collect()
}

#[test]
fn noiseless_round_trip() {
    let m = reported();
    let cycles: Vec<f64> = (1..=30).map(|k| 10.0 * k as f64).collect();
    let fit = fit_nucleation(&cycles, &synthetic(&m, &cycles)).unwrap();
    assert!((fit.value("n_d") / 0.047 - 1.0).abs() < 1e-8, "{}", fit.value("n_d"));
    assert!((fit.value("g") / 0.04667 - 1.0).abs() < 1e-8);
    assert!((fit.value("r_squared") - 1.0).abs() < 1e-12);
    assert!(fit.diagnostics.warnings.is_empty());
}

#[test]
fn linear_regime_only_is_unidentifiable() {
    let m = reported();
    let cycles: Vec<f64> = (0..8).map(|k| 400.0 + 50.0 * k as f64).collect();
    let e = fit_nucleation(&cycles, &synthetic(&m, &cycles)).unwrap_err();
    assert!(matches!(e, darkspin::Error::Unidentifiable(_)), "{e}");
}

#[test]
fn few_points_warn() {
    let m = reported();
    let cycles = [20.0, 40.0, 200.0];
    let fit = fit_nucleation(&cycles, &synthetic(&m, &cycles)).unwrap();
    assert!(!fit.diagnostics.warnings.is_empty());
}

proptest! {
    #[test]
    fn thickness_increases(nd in 0.005f64..0.5, g in 0.01f64..0.2, x in 0.0f64..500.0, dx in 0.01f64..50.0) {
        let m = NucleationModel::new(nd, g).unwrap();
        prop_assert!(m.film_thickness(x + dx).unwrap() > m.film_thickness(x).unwrap());
    }

    #[test]
    fn quarter_density_doubles_radius(nd in 0.005f64..0.5) {
        let a = NucleationModel::new(nd, 0.05).unwrap().r_cov();
        let b = NucleationModel::new(nd / 4.0, 0.05).unwrap().r_cov();
        prop_assert!((b / a - 2.0).abs() < 1e-12);
    }
}
