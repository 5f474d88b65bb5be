use darkspin::bathavg::*;
use proptest::prelude::*;

fn ts() -> Vec<f64> {
    (0..12).map(|i| 0.1 * 200f64.powf(i as f64 / 11.0)).collect()
}

#[test]
fn analytic_average_matches_monte_carlo() {
    let w = BathKernelIntegral::default();
    let ts = ts();
    for gamma in [0.0, 0.1] {
        let bath = BathParams::plane(2000.0, gamma, 5.0).unwrap();
        let a = fid_curve(&w, &bath, &ts).unwrap();
        let mc = simulate_fid_mc(&bath, &ts, 5000, 3, &McOptions::default()).unwrap();
        for i in 0..ts.len() {
            assert!((a[i] - mc.f[i]).abs() < 3.0 * mc.stderr[i], "gamma {gamma} t {}: {} vs {} ± {}", ts[i], a[i], mc.f[i], mc.stderr[i]);
        }
    }
}

#[test]
fn half_space_monte_carlo() {
    let w = BathKernelIntegral::default();
    let ts = [0.2, 1.0, 3.0];
    let bath = BathParams::new(1e5, 0.0, 6.0, Dimensionality::HalfSpace, 1.0).unwrap();
    let a = fid_curve(&w, &bath, &ts).unwrap();
    let mc = simulate_fid_mc(&bath, &ts, 4000, 8, &McOptions::default()).unwrap();
    for i in 0..ts.len() {
        assert!((a[i] - mc.f[i]).abs() < 3.0 * mc.stderr[i], "t {}: {} vs {} ± {}", ts[i], a[i], mc.f[i], mc.stderr[i]);
    }
}

#[test]
fn flip_fraction_rescales_density() {
    let w = BathKernelIntegral::default();
    let ts = ts();
    let half = BathParams::new(2000.0, 0.05, 4.0, Dimensionality::Plane, 0.5).unwrap();
    let full = BathParams::plane(1000.0, 0.05, 4.0).unwrap();
    let (a, b) = (fid_curve(&w, &half, &ts).unwrap(), fid_curve(&w, &full, &ts).unwrap());
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-14);
    }
}

#[test]
fn table_tracks_direct_quadrature() {
    let direct = BathKernelIntegral::default();
    let table =
        WTable::build(BathKernelIntegral::default(), WTableSpec::covering(Dimensionality::Plane, (0.3, 10.0), (3.0, 8.0), 0.3)).unwrap();
    for (g, d, t) in [(0.0, 4.0, 1.0), (0.1, 3.3, 7.5), (0.29, 7.9, 0.31), (0.05, 5.5, 2.2)] {
        let a = direct.w(g, d, t, Dimensionality::Plane).unwrap();
        let b = WKernel::w(&table, g, d, t, Dimensionality::Plane).unwrap();
        assert!((b / a - 1.0).abs() < 1e-3, "({g}, {d}, {t}): {a} vs {b}");
    }
}

#[test]
fn double_log_of_stretched_exponential() {
    let ts = ts();
    let f: Vec<f64> = ts.iter().map(|t| (-(t / 3.0f64).powf(0.7)).exp()).collect();
    let dl = double_log(&darkspin::DecayCurve::new(ts.clone(), f, None).unwrap()).unwrap();
    let (t, fp) = (dl.curve.t(), dl.curve.y());
    for i in 1..t.len() {
        let slope = (fp[i] - fp[i - 1]) / (t[i].ln() - t[i - 1].ln());
        assert!((slope - 0.7).abs() < 1e-9, "{slope}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // W(γ, d, t) = d²·W(γd³, 1, t/d³) for a plane
    #[test]
    fn depth_scale_equivariance(d in 2.0f64..8.0, t in 0.1f64..5.0, g in 0.0f64..0.3) {
        let w = BathKernelIntegral::default();
        let a = w.w(g, d, t, Dimensionality::Plane).unwrap();
        let b = w.w(g * d.powi(3), 1.0, t / d.powi(3), Dimensionality::Plane).unwrap();
        prop_assert!((a / (d * d * b) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn decay_deepens_with_density(s in 10.0f64..3000.0, t in 0.1f64..10.0) {
        let w = BathKernelIntegral::default();
        let a = fid(&w, &BathParams::plane(s, 0.0, 4.0).unwrap(), t).unwrap();
        let b = fid(&w, &BathParams::plane(2.0 * s, 0.0, 4.0).unwrap(), t).unwrap();
        prop_assert!((b - a * a).abs() < 1e-12 && b <= a && a <= 1.0);
    }
}
