use darkspin::bathavg::*;
use darkspin::fitting::*;
use darkspin::physics::{coupling_at_frequency, PhysicalConstants};
use darkspin::spectra::{p1_resonances, Axis, Isotope, P1Params, DERIVED_A_PAR_14N, DERIVED_A_PERP_14N};
use darkspin::DecayCurve;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn sampled(t: Vec<f64>, noise: f64, seed: u64, f: impl Fn(f64) -> f64) -> DecayCurve {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, noise.max(1e-300)).unwrap();
    let y = t.iter().map(|&t| f(t) + if noise > 0.0 { n.sample(&mut rng) } else { 0.0 }).collect();
    let e = (noise > 0.0).then(|| vec![noise; t.len()]);
    DecayCurve::new(t, y, e).unwrap()
}

#[test]
fn fid_fit_recovers_a_deep_nv() {
    let w = BathKernelIntegral::default();
    let ts = log_grid(0.5, 30.0, 24);
    let bath = BathParams::plane(1461.0, 0.0, 7.2).unwrap();
    let f = fid_curve(&w, &bath, &ts).unwrap();
    let curve = DecayCurve::new(ts, f, None).unwrap();
    let opts = FidFitOptions { depth_bounds: (4.0, 12.0), gamma_bounds: (0.0, 0.5), grid: (8, 8), ..Default::default() };
    let fit = fit_fid(&curve, &w, &opts).unwrap().result;
    assert!((fit.value("depth") / 7.2 - 1.0).abs() < 0.01, "{fit:?}");
    assert!((fit.value("sigma") / 1461.0 - 1.0).abs() < 0.03, "{fit:?}");
    assert!(fit.value("gamma") < 0.01, "{fit:?}");
}

#[test]
fn two_stage_t1_product() {
    let t: Vec<f64> = (1..=60).map(|i| 4.0 * i as f64).collect();
    let nv = StretchedDecayModel { a: 0.3, c: 0.02, t1_nv: 400.0, n_nv: 0.8, t1_e: f64::INFINITY, n_e: 1.0 };
    let nv_fit = fit_stretched_t1(&sampled(t.clone(), 0.0, 0, |x| stretched_t1_model(&nv, x)), None).unwrap();
    let fixed = (nv_fit.value("T1_nv"), nv_fit.value("n_nv"));
    assert!((fixed.0 / 400.0 - 1.0).abs() < 1e-6 && (fixed.1 / 0.8 - 1.0).abs() < 1e-6);
    let both = StretchedDecayModel { t1_e: 50.0, n_e: 1.0, ..nv };
    let curve = sampled(t, 0.002, 3, |x| stretched_t1_model(&both, x));
    let r = fit_stretched_t1(&curve, Some(fixed)).unwrap();
    assert!((r.value("T1_e") / 50.0 - 1.0).abs() < 0.05, "{r:?}");
    assert!((r.value("n_e") - 1.0).abs() < 0.05, "{r:?}");
}

#[test]
fn carbon_larmor_modulation() {
    // ¹³C at 196.9 G
    let omega_n = 1.0705e-3 * 196.9;
    let m = EchoModulationModel { a: 0.9, t2: 40.0, n: 1.5, alpha: 0.3, omega_n, phi1: 0.2 };
    let t: Vec<f64> = (1..=150).map(|i| 0.3 * i as f64).collect();
    let r = fit_echo_modulation(&sampled(t, 0.005, 9, |x| echo_modulation_model(&m, x)), &EchoFitOptions::default()).unwrap();
    assert!((r.value("omega_n") / omega_n - 1.0).abs() < 0.01, "{r:?}");
    assert!((r.value("omega_n") - 0.2108).abs() < 1e-3);
}

#[test]
fn echo_without_modulation_flags_frequency() {
    let m = EchoModulationModel { a: 0.9, t2: 40.0, n: 1.5, alpha: 0.0, omega_n: 0.2, phi1: 0.0 };
    let t: Vec<f64> = (1..=80).map(|i| 0.5 * i as f64).collect();
    let opts = EchoFitOptions { omega_n: Some(0.2), fix_omega: false };
    let r = fit_echo_modulation(&sampled(t, 0.0, 0, |x| echo_modulation_model(&m, x)), &opts).unwrap();
    assert!((r.value("T2") / 40.0 - 1.0).abs() < 1e-4, "{r:?}");
    assert!(r.stderr("omega_n").is_infinite());
    assert!(r.diagnostics.warnings.iter().any(|w| w.contains("unidentifiable")));
}

#[test]
fn decaying_rabi_round_trip() {
    let m = RabiModel { a: 0.4, t_rabi: 0.5453, n: 1.103, f: 16.7, phi: 0.0, c: 0.5 };
    let t: Vec<f64> = (0..200).map(|i| 0.005 * i as f64).collect();
    let r = fit_rabi(&sampled(t, 0.01, 21, |x| rabi_model(&m, x))).unwrap();
    for (name, v) in [("T_rabi", 0.5453), ("n", 1.103), ("f", 16.7)] {
        let (e, se) = (r.value(name), r.stderr(name));
        assert!((e - v).abs() < 3.0 * se, "{name}: {e} ± {se}");
    }
}

#[test]
fn coupled_nv_oscillation() {
    // FID-ratio trace with a 175.2 kHz beat, 1% noise
    let m = RabiModel { a: 0.1, t_rabi: 15.0, n: 1.0, f: 0.1752, phi: 0.0, c: 0.9 };
    let t: Vec<f64> = (0..120).map(|i| 0.2 * i as f64).collect();
    let r = fit_rabi(&sampled(t, 0.01, 5, |x| rabi_model(&m, x))).unwrap();
    assert!((r.value("f") - 0.1752).abs() < 4.7e-3, "{r:?}");
    let sep = coupling_at_frequency(r.value("f"), std::f64::consts::FRAC_PI_2, &PhysicalConstants::default()).unwrap();
    assert!((sep - 6.7).abs() < 0.2, "{sep}");
}

fn spectrum(lines: &[f64], width: f64, depth: f64) -> DecayCurve {
    let x: Vec<f64> = (0..1200).map(|i| 350.0 + 0.4 * i as f64).collect();
    let peaks: Vec<(f64, f64, f64)> = lines.iter().map(|&c| (c, width, -depth)).collect();
    let y = x.iter().map(|&v| lorentzian_sum(1.0, &peaks, v)).collect();
    DecayCurve::new(x, y, None).unwrap()
}

#[test]
fn n14_triplet_splitting() {
    let p = P1Params::new(Isotope::N14, DERIVED_A_PAR_14N, DERIVED_A_PERP_14N, 0.0, 549.1, 0.0).unwrap();
    let lines: Vec<f64> = p1_resonances(&p, Axis::On).iter().map(|l| l.frequency).collect();
    let r = fit_lorentzians(&spectrum(&lines, 6.0, 0.05), &LorentzianOptions::new(3)).unwrap();
    assert!((r.value("center_3") - r.value("center_1") - 227.1).abs() < 1e-3, "{r:?}");
    assert!((r.value("center_1") + r.value("center_3") - r.value("center_2") - 549.1).abs() < 1e-3);
}

#[test]
fn n15_doublet_splitting() {
    let r = fit_lorentzians(&spectrum(&[500.0, 620.1], 5.0, 0.04), &LorentzianOptions::new(2)).unwrap();
    assert!((r.value("center_2") - r.value("center_1") - 120.1).abs() < 1e-3, "{r:?}");
}

#[test]
fn linked_spacing_centres_middle_peak() {
    let lines = [450.0, 551.0, 650.0];
    let opts = LorentzianOptions { linked: vec![LinkedSpacing { low: 0, middle: 1, high: 2 }], ..LorentzianOptions::new(3) };
    let r = fit_lorentzians(&spectrum(&lines, 6.0, 0.05), &opts).unwrap();
    let mid = 0.5 * (r.value("center_1") + r.value("center_3"));
    assert!((r.value("center_2") - mid).abs() < 1e-9, "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // stretching time by k divides the frequency by k and multiplies T_rabi by k
    #[test]
    fn rabi_time_scaling(k in 0.2f64..5.0) {
        let m = RabiModel { a: 0.4, t_rabi: 0.6, n: 1.2, f: 12.0, phi: 0.3, c: 0.5 };
        let t: Vec<f64> = (0..150).map(|i| 0.006 * i as f64).collect();
        let a = fit_rabi(&sampled(t.clone(), 0.0, 0, |x| rabi_model(&m, x))).unwrap();
        let ts: Vec<f64> = t.iter().map(|x| x * k).collect();
        let b = fit_rabi(&sampled(ts, 0.0, 0, |x| rabi_model(&m, x / k))).unwrap();
        prop_assert!((b.value("f") * k / a.value("f") - 1.0).abs() < 1e-6);
        prop_assert!((b.value("T_rabi") / (k * a.value("T_rabi")) - 1.0).abs() < 1e-6);
    }

    // scaling the signal scales A and c and leaves the decay times alone
    #[test]
    fn t1_amplitude_scaling(k in 0.1f64..10.0) {
        let m = StretchedDecayModel { a: 0.3, c: 0.02, t1_nv: 100.0, n_nv: 0.9, t1_e: f64::INFINITY, n_e: 1.0 };
        let t: Vec<f64> = (1..=40).map(|i| 5.0 * i as f64).collect();
        let curve = sampled(t, 0.0, 0, |x| stretched_t1_model(&m, x));
        let a = fit_stretched_t1(&curve, None).unwrap();
        let b = fit_stretched_t1(&curve.scaled(k).unwrap(), None).unwrap();
        prop_assert!((b.value("A") / (k * a.value("A")) - 1.0).abs() < 1e-6);
        prop_assert!((b.value("T1_nv") / a.value("T1_nv") - 1.0).abs() < 1e-6);
    }
}
