//! Closed-form single-pair coherence kernels for an NV coupled to one
//! depolarizing electron spin: DEER, Hahn echo, their difference, and the
//! nuclear-spin-free T1 correlation sequence.
//!
//! With D = √(V² − γ²) the DEER and echo signals are
//!
//! ```text
//! f_DEER = |V| e^{−γt/2} / D · cos(tD/2 − ψ),        ψ = arcsec(|V|/D)
//! f_Echo = |V| e^{−γt/2} / D² · (|V| − γ cos(tD/2 + φ)), φ = arccos(γ/|V|)
//! ```
//!
//! Both are evaluated on one complex path: D is the principal square root and
//! the inverse trigonometric functions are written as logarithms of the same D,
//! so the over-damped branch (γ > |V|) is reached by analytic continuation.

use crate::error::{Error, Result};
use num_complex::Complex64;

/// Relative width |V² − γ²| < SWITCH·V² inside which the series is used.
const SERIES_SWITCH: f64 = 1e-6;

/// Inputs of the pair kernels, all in internal units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    /// Dipolar coupling (rad/µs, signed).
    pub v_dd: f64,
    /// Dark-spin depolarization rate (rad/µs).
    pub gamma_e1: f64,
    /// Dark-spin dephasing rate (rad/µs); only the oracle uses it.
    pub gamma_e2: f64,
    /// Total free-evolution time (µs).
    pub t: f64,
}

impl KernelParams {
    pub fn new(v_dd: f64, gamma_e1: f64, gamma_e2: f64, t: f64) -> Result<Self> {
        if !v_dd.is_finite() {
            return Err(Error::InvalidInput("coupling must be finite".into()));
        }
        for (name, x) in [("gamma_e1", gamma_e1), ("gamma_e2", gamma_e2), ("t", t)] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be finite and >= 0, got {x}")));
            }
        }
        Ok(Self { v_dd, gamma_e1, gamma_e2, t })
    }
}

/// NV relaxation rates (rad/µs).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NvRelaxation {
    pub gamma_v1: f64,
    pub gamma_v2: f64,
}

impl NvRelaxation {
    pub fn new(gamma_v1: f64, gamma_v2: f64) -> Result<Self> {
        if !(gamma_v1.is_finite() && gamma_v1 >= 0.0 && gamma_v2.is_finite() && gamma_v2 >= 0.0) {
            return Err(Error::InvalidInput("NV rates must be finite and >= 0".into()));
        }
        Ok(Self { gamma_v1, gamma_v2 })
    }
}

fn near_degenerate(v: f64, g: f64) -> bool {
    let v2 = v * v;
    (v2 - g * g).abs() < SERIES_SWITCH * v2
}

/// e^{−a}·cos z without intermediate overflow.
fn damped_cos(z: Complex64, a: f64) -> Complex64 {
    let i = Complex64::i();
    ((i * z - a).exp() + (-i * z - a).exp()) * 0.5
}

/// e^{−a}·sin z without intermediate overflow.
fn damped_sin(z: Complex64, a: f64) -> Complex64 {
    let i = Complex64::i();
    ((i * z - a).exp() - (-i * z - a).exp()) / (2.0 * i)
}

/// Power series around V² = γ²: returns (cos x, sin x / D, (1 − cos x)/D²)
/// with x = tD/2, all even in D and hence analytic in δ = D².
fn degenerate_series(t: f64, delta: f64) -> (f64, f64, f64) {
    let y = -t * t * delta / 4.0;
    let (mut c, mut s, mut q) = (0.0, 0.0, 0.0);
    // term_k = y^k / (2k)!, y^k / (2k+1)!, y^k / (2k+2)!
    let (mut tc, mut ts, mut tq) = (1.0, 1.0, 0.5);
    for k in 0..400 {
        c += tc;
        s += ts;
        q += tq;
        let kf = k as f64;
        tc *= y / ((2.0 * kf + 1.0) * (2.0 * kf + 2.0));
        ts *= y / ((2.0 * kf + 2.0) * (2.0 * kf + 3.0));
        tq *= y / ((2.0 * kf + 3.0) * (2.0 * kf + 4.0));
        if k >= 4 && tc.abs() <= 1e-17 * c.abs().max(1e-300) && ts.abs() <= 1e-17 * s.abs() && tq.abs() <= 1e-17 * q.abs() {
            break;
        }
    }
    (c, 0.5 * t * s, 0.25 * t * t * q)
}

/// Complex evaluation of f_DEER; the imaginary part is round-off only.
pub fn f_deer_complex(p: &KernelParams) -> Complex64 {
    let (a, g, t) = (p.v_dd.abs(), p.gamma_e1, p.t);
    if t == 0.0 || a == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    if near_degenerate(a, g) {
        let (c, s, _) = degenerate_series(t, a * a - g * g);
        return Complex64::new((-0.5 * g * t).exp() * (c + g * s), 0.0);
    }
    let i = Complex64::i();
    let d = Complex64::new(a * a - g * g, 0.0).sqrt();
    let psi = -i * ((d + i * g) / a).ln();
    damped_cos(0.5 * t * d - psi, 0.5 * g * t) * a / d
}

/// Complex evaluation of f_Echo; the imaginary part is round-off only.
pub fn f_echo_complex(p: &KernelParams) -> Complex64 {
    let (a, g, t) = (p.v_dd.abs(), p.gamma_e1, p.t);
    if t == 0.0 || a == 0.0 || g == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    if near_degenerate(a, g) {
        let (_, s, q) = degenerate_series(t, a * a - g * g);
        return Complex64::new((-0.5 * g * t).exp() * (1.0 + g * g * q + g * s), 0.0);
    }
    let i = Complex64::i();
    let d = Complex64::new(a * a - g * g, 0.0).sqrt();
    // over-damped: g + iD = g − √(g² − a²), evaluated without cancellation
    let ratio = if a < g { Complex64::new(a / (g + (g * g - a * a).sqrt()), 0.0) } else { (g + i * d) / a };
    let phi = -i * ratio.ln();
    let decay = (-0.5 * g * t).exp();
    (a * decay - g * damped_cos(0.5 * t * d + phi, 0.5 * g * t)) * a / (d * d)
}

/// DEER pair signal Tr[σ_z^(v) ρ] for one bath spin.
pub fn f_deer(p: &KernelParams) -> f64 {
    f_deer_complex(p).re
}

/// Hahn-echo pair signal; exactly 1 when γ₁ = 0.
pub fn f_echo(p: &KernelParams) -> f64 {
    f_echo_complex(p).re
}

/// f_DEER − f_Echo from the two closed forms.
pub fn f_deer_minus_echo(p: &KernelParams) -> f64 {
    f_deer(p) - f_echo(p)
}

/// Real form −e^{−γt/2}·2V²sin²(tD/4)/D² of f_DEER − f_Echo, used as the
/// bath integrand. Equal to [`f_deer_minus_echo`] up to round-off.
#[inline]
pub fn pair_decay(v: f64, g: f64, t: f64) -> f64 {
    let v2 = v * v;
    let u2 = t * t * (v2 - g * g) / 16.0;
    let base = -v2 * t * t / 8.0;
    if u2.abs() < 1e-3 {
        // (sin u / u)² = 1 − u²/3 + 2u⁴/45 − u⁶/315 + 2u⁸/14175
        let s = 1.0 - u2 / 3.0 + u2 * u2 * (2.0 / 45.0) - u2 * u2 * u2 / 315.0 + u2 * u2 * u2 * u2 * (2.0 / 14175.0);
        return base * s * (-0.5 * g * t).exp();
    }
    if u2 > 0.0 {
        let u = u2.sqrt();
        let s = u.sin() / u;
        base * s * s * (-0.5 * g * t).exp()
    } else {
        // sinh²(w) e^{−γt/2} = ((1 − e^{−2w})/2)² e^{2w − γt/2}, 2w − γt/2 ≤ 0.
        let w = (-u2).sqrt();
        let h = 0.5 * (1.0 - (-2.0 * w).exp());
        base * h * h / (w * w) * (2.0 * w - 0.5 * g * t).exp()
    }
}

/// F_y^π − F_y^0 of the correlation T1 sequence as printed:
/// e^{−(γv1+γe1)τ}·[e^{−((γv1+γe1)/2+γv2)t}·|V|/D·sin(tD/2)]².
pub fn t1_sequence_signal(p: &KernelParams, nv: &NvRelaxation, tau: f64, t: f64) -> Result<f64> {
    if !(tau.is_finite() && tau >= 0.0 && t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidInput("tau and t must be finite and >= 0".into()));
    }
    let (a, g) = (p.v_dd.abs(), p.gamma_e1);
    let outer = (-(nv.gamma_v1 + g) * tau).exp();
    let inner_decay = ((nv.gamma_v1 + g) / 2.0 + nv.gamma_v2) * t;
    if a == 0.0 || t == 0.0 {
        return Ok(0.0);
    }
    let amp = if near_degenerate(a, g) {
        let (_, s, _) = degenerate_series(t, a * a - g * g);
        a * s * (-inner_decay).exp()
    } else {
        let d = Complex64::new(a * a - g * g, 0.0).sqrt();
        (damped_sin(0.5 * t * d, inner_decay) * a / d).re
    };
    Ok(outer * amp * amp)
}

/// Common-mode-rejecting composite S = (F_y^π − F_y^0) − (F_{−y}^π − F_{−y}^0).
pub fn composite_t1_signal(f_y_pi: f64, f_y_0: f64, f_my_pi: f64, f_my_0: f64) -> f64 {
    (f_y_pi - f_y_0) - (f_my_pi - f_my_0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::TWO_PI;
    use proptest::prelude::*;

    #[test]
    fn weak_coupling_under_strong_damping_is_finite() {
        for v in [1e-12, 1e-9, 1e-6] {
            let p = KernelParams { v_dd: v, gamma_e1: 0.1, gamma_e2: 0.0, t: 2.0 };
            assert!((f_echo(&p) - 1.0).abs() < 1e-12);
            assert!((f_deer(&p) - 1.0).abs() < 1e-12);
        }
    }

    fn kp(v: f64, g: f64, t: f64) -> KernelParams {
        KernelParams::new(v, g, 0.0, t).unwrap()
    }

    /// Real-form reference written with cosh/sinh, independent of the complex path.
    fn reference(v: f64, g: f64, t: f64) -> (f64, f64) {
        let d2 = v * v - g * g;
        let e = (-0.5 * g * t).exp();
        let (c, s) = if d2 > 0.0 {
            let d = d2.sqrt();
            ((0.5 * t * d).cos(), (0.5 * t * d).sin() / d)
        } else {
            let d = (-d2).sqrt();
            ((0.5 * t * d).cosh(), (0.5 * t * d).sinh() / d)
        };
        let deer = e * (c + g * s);
        let echo = e * (v * v - g * g * c + g * d2 * s) / d2;
        (deer, echo)
    }

    #[test]
    fn trivial_values() {
        assert_eq!(f_deer(&kp(3.0, 0.5, 0.0)), 1.0);
        assert_eq!(f_echo(&kp(3.0, 0.5, 0.0)), 1.0);
        assert_eq!(f_deer_minus_echo(&kp(3.0, 0.5, 0.0)), 0.0);
        let v = TWO_PI;
        assert!((f_deer(&kp(v, 0.0, 0.25)) - (std::f64::consts::PI / 4.0).cos()).abs() < 1e-14);
        for t in [0.1, 1.0, 7.0] {
            assert_eq!(f_echo(&kp(2.3, 0.0, t)), 1.0);
        }
    }

    #[test]
    fn gamma_zero_difference() {
        for t in [0.1, 0.9, 3.3] {
            let v = 1.7;
            let diff = f_deer_minus_echo(&kp(v, 0.0, t));
            let mag = 2.0 * (v * t / 4.0).sin().powi(2);
            assert!((diff + mag).abs() < 1e-14);
            assert!((mag - (1.0 - (v * t / 2.0).cos())).abs() < 1e-14);
        }
    }

    #[test]
    fn matches_real_reference_away_from_degeneracy() {
        for &(v, g) in &[(3.0, 0.5), (1.0, 2.5), (0.2, 0.19), (5.0, 40.0), (-2.0, 1.0)] {
            for k in 0..40 {
                let t = 0.13 * k as f64;
                let (d, e) = reference(v, g, t);
                assert!((f_deer(&kp(v, g, t)) - d).abs() < 1e-11, "deer {v} {g} {t}");
                assert!((f_echo(&kp(v, g, t)) - e).abs() < 1e-11, "echo {v} {g} {t}");
            }
        }
    }

    #[test]
    fn continuity_across_degenerate_point() {
        // Straddle the series/closed-form switch on both sides of V² = γ².
        let v = 1.3f64;
        for &t in &[0.5, 3.0, 12.0, 40.0] {
            for &side in &[-1.0, 1.0] {
                let at = |scale: f64| {
                    let g = (v * v * (1.0 + side * SERIES_SWITCH * scale)).sqrt();
                    kp(v, g, t)
                };
                let (inner, outer) = (at(1.0 - 1e-9), at(1.0 + 1e-9));
                for f in [f_deer, f_echo] {
                    assert!((f(&inner) - f(&outer)).abs() < 1e-8, "t={t} side={side}");
                }
                let nv = NvRelaxation::default();
                let a = t1_sequence_signal(&inner, &nv, 0.0, t).unwrap();
                let b = t1_sequence_signal(&outer, &nv, 0.0, t).unwrap();
                assert!((a - b).abs() < 1e-8);
            }
            let exact = kp(v, v, t);
            let (d, e) = reference(v, v * (1.0 + 1e-4), t);
            assert!((f_deer(&exact) - d).abs() < 1e-3 && (f_echo(&exact) - e).abs() < 1e-3);
        }
    }

    #[test]
    fn pair_decay_matches_difference() {
        for &(v, g) in &[(3.0, 0.5), (1.0, 2.5), (0.2, 0.2), (5.0, 40.0), (1e-3, 0.0), (7.0, 7.0000001)] {
            for k in 0..60 {
                let t = 0.21 * k as f64;
                let a = pair_decay(v, g, t);
                let b = f_deer_minus_echo(&kp(v, g, t));
                assert!((a - b).abs() < 1e-9, "{v} {g} {t}: {a} {b}");
            }
        }
        assert!(pair_decay(1e3, 1e3 * 0.3, 500.0).is_finite());
        assert!(pair_decay(1.0, 1e4, 1e3).is_finite());
    }

    #[test]
    fn t1_signal_examples() {
        let nv = NvRelaxation::default();
        let v = 2.1;
        for t in [0.3, 1.0, 2.2] {
            let s = t1_sequence_signal(&kp(v, 0.0, t), &nv, 0.0, t).unwrap();
            assert!((s - (v * t / 2.0).sin().powi(2)).abs() < 1e-13);
        }
        let nv = NvRelaxation::new(0.01, 0.02).unwrap();
        let p = kp(TWO_PI * 0.2, 0.05, 0.0);
        let t = 1.7;
        let s1 = t1_sequence_signal(&p, &nv, 2.0, t).unwrap();
        let s2 = t1_sequence_signal(&p, &nv, 5.0, t).unwrap();
        let slope = (s2.ln() - s1.ln()) / 3.0;
        assert!((slope + 0.06).abs() < 1e-9);
        assert!(t1_sequence_signal(&kp(1.0, 1.0, 0.0), &nv, 0.0, 2.0).unwrap().is_finite());
    }

    #[test]
    fn composite_examples() {
        assert_eq!(composite_t1_signal(0.3, 0.3, 0.3, 0.3), 0.0);
        let (a, b) = (0.7, 0.2);
        assert!((composite_t1_signal(a, b, -a, -b) - 2.0 * (a - b)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn bounded_and_real(v in -20.0f64..20.0, r in 0.0f64..3.0, t in 0.0f64..30.0) {
            let g = r * v.abs();
            let p = kp(v, g, t);
            let d = f_deer_complex(&p);
            let e = f_echo_complex(&p);
            prop_assert!(d.re.abs() <= 1.0 + 1e-12);
            prop_assert!(e.re.abs() <= 1.0 + 1e-12);
            prop_assert!(d.im.abs() < 1e-12, "deer im {}", d.im);
            prop_assert!(e.im.abs() < 1e-12, "echo im {}", e.im);
        }

        #[test]
        fn difference_non_positive(v in -20.0f64..20.0, r in 0.0f64..3.0, t in 0.0f64..30.0) {
            let g = r * v.abs();
            prop_assert!(f_deer_minus_echo(&kp(v, g, t)) <= 1e-12);
            prop_assert!(pair_decay(v, g, t) <= 0.0);
        }
    }
}
