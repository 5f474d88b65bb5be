//! Stretched T1 product, echo with nuclear modulation and decaying Rabi fits.

use super::optim::{self, LmOptions, LmOutcome};
use super::{Diagnostics, Estimate, FitResult};
use crate::curve::DecayCurve;
use crate::error::{Error, Result};
use crate::physics::TWO_PI;
use serde::Serialize;
use std::f64::consts::PI;

/// A·exp(−(τ/T_nv)^n_nv − (τ/T_e)^n_e) + c. The electron term is absent when
/// `t1_e` is infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StretchedDecayModel {
    pub a: f64,
    pub c: f64,
    pub t1_nv: f64,
    pub n_nv: f64,
    pub t1_e: f64,
    pub n_e: f64,
}

pub fn stretched_t1_model(m: &StretchedDecayModel, tau: f64) -> f64 {
    let mut e = (tau / m.t1_nv).powf(m.n_nv);
    if m.t1_e.is_finite() {
        e += (tau / m.t1_e).powf(m.n_e);
    }
    m.a * (-e).exp() + m.c
}

/// A·exp(−(t/T2)^n)·[1 + α sin²(π ω_n t / 2 + φ1)], t in µs and ω_n in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EchoModulationModel {
    pub a: f64,
    pub t2: f64,
    pub n: f64,
    pub alpha: f64,
    pub omega_n: f64,
    pub phi1: f64,
}

pub fn echo_modulation_model(m: &EchoModulationModel, t: f64) -> f64 {
    let s = (PI * m.omega_n * t / 2.0 + m.phi1).sin();
    m.a * (-(t / m.t2).powf(m.n)).exp() * (1.0 + m.alpha * s * s)
}

/// A·exp(−(τ/T)^n)·cos(2π f τ + φ) + C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RabiModel {
    pub a: f64,
    pub t_rabi: f64,
    pub n: f64,
    pub f: f64,
    pub phi: f64,
    pub c: f64,
}

pub fn rabi_model(m: &RabiModel, tau: f64) -> f64 {
    m.a * (-(tau / m.t_rabi).powf(m.n)).exp() * (TWO_PI * m.f * tau + m.phi).cos() + m.c
}

/// Largest allowed stretch exponent.
pub const MAX_STRETCH: f64 = 4.0;
const MIN_STRETCH: f64 = 0.05;
/// Periodogram peak-to-median power ratio below which no oscillation is assumed.
pub const PEAK_SNR: f64 = 20.0;

pub(super) struct Spec<'a> {
    pub model: &'a str,
    pub names: Vec<&'a str>,
    pub x0: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub scale: Vec<f64>,
}

fn weights(curve: &DecayCurve) -> Vec<f64> {
    match curve.y_err() {
        Some(e) => e.iter().map(|v| 1.0 / v).collect(),
        None => vec![1.0; curve.len()],
    }
}

pub(super) fn run_lm<M>(curve: &DecayCurve, spec: Spec, model: M) -> Result<(FitResult, LmOutcome)>
where
    M: Fn(&[f64], f64) -> f64,
{
    let p = spec.names.len();
    if curve.len() <= p {
        return Err(Error::InsufficientData(format!("{} points for {p} parameters", curve.len())));
    }
    let w = weights(curve);
    let (t, y) = (curve.t(), curve.y());
    let resid = |x: &[f64]| -> Result<Vec<f64>> { Ok((0..t.len()).map(|i| (model(x, t[i]) - y[i]) * w[i]).collect()) };
    let out = optim::levenberg_marquardt(resid, &spec.x0, &spec.lower, &spec.upper, &spec.scale, LmOptions::default())?;
    let grad = out.scaled_gradient(&spec.lower, &spec.upper, &spec.scale);
    let data_scale: f64 = y.iter().zip(&w).map(|(y, w)| (y * w).powi(2)).sum();
    let converged = out.converged && grad <= 1e-4 * out.cost + 1e-10 * data_scale;
    let unit = vec![1.0; t.len()];
    let se = optim::gauss_newton_stderr(&out.jacobian, &unit, out.cost, curve.y_err().is_none()).unwrap_or_else(|| vec![f64::INFINITY; p]);
    let mut warnings = Vec::new();
    for k in 0..p {
        let span = spec.upper[k] - spec.lower[k];
        let at = |b: f64| (out.x[k] - b).abs() <= 1e-9 * span.max(b.abs());
        if spec.upper[k].is_finite() && at(spec.upper[k]) {
            warnings.push(format!("boundary solution: {} at upper bound {}", spec.names[k], spec.upper[k]));
        }
        if spec.lower[k].is_finite() && at(spec.lower[k]) {
            warnings.push(format!("boundary solution: {} at lower bound {}", spec.names[k], spec.lower[k]));
        }
    }
    if let Some(corr) = optim::correlation(&out.jacobian) {
        for i in 0..p {
            for j in 0..i {
                if corr[(i, j)].abs() > 0.99 {
                    warnings.push(format!("{} and {} correlated at {:.3}", spec.names[i], spec.names[j], corr[(i, j)]));
                }
            }
        }
    }
    let params = spec
        .names
        .iter()
        .zip(&out.x)
        .zip(&se)
        .map(|((n, v), s)| {
            (n.to_string(), Estimate { value: *v, stderr: if s.is_finite() { *s } else { f64::INFINITY }, gauss_newton_stderr: None })
        })
        .collect();
    let result = FitResult {
        model: spec.model.into(),
        params,
        residual: out.cost,
        diagnostics: Diagnostics { dropped_points: 0, converged, iterations: out.iterations, gradient_norm: grad, warnings },
    };
    Ok((result, out))
}

/// Time at which (y − c)/a first falls below e⁻¹, linearly interpolated.
fn one_over_e_time(t: &[f64], y: &[f64], a: f64, c: f64) -> f64 {
    let target = (-1.0f64).exp();
    for i in 1..t.len() {
        let (r0, r1) = ((y[i - 1] - c) / a, (y[i] - c) / a);
        if r0 >= target && r1 < target {
            return t[i - 1] + (t[i] - t[i - 1]) * (r0 - target) / (r0 - r1);
        }
    }
    0.5 * t[t.len() - 1]
}

fn span(t: &[f64]) -> f64 {
    t[t.len() - 1] - t[0].min(0.0)
}

/// Stretched T1 fit. With `fixed_nv = None` the NV term alone is fitted
/// (A, c, T1_nv, n_nv); with `Some((T1_nv, n_nv))` those are held and
/// (A, c, T1_e, n_e) are fitted on the product form.
pub fn fit_stretched_t1(curve: &DecayCurve, fixed_nv: Option<(f64, f64)>) -> Result<FitResult> {
    if curve.len() < 6 {
        return Err(Error::InsufficientData("stretched T1 fit needs at least 6 points".into()));
    }
    let (t, y) = (curve.t(), curve.y());
    let n = t.len();
    let tail = (n / 10).max(1);
    let c0 = y[n - tail..].iter().sum::<f64>() / tail as f64;
    let a0 = y[0] - c0;
    let a0 = if a0.abs() > 0.0 { a0 } else { y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300) };
    let amp = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let sp = span(t).max(1e-300);
    match fixed_nv {
        None => {
            let t0 = one_over_e_time(t, y, a0, c0).max(1e-3 * sp);
            let spec = Spec {
                model: "stretched-t1-nv",
                names: vec!["A", "c", "T1_nv", "n_nv"],
                x0: vec![a0, c0, t0, 1.0],
                lower: vec![f64::NEG_INFINITY, f64::NEG_INFINITY, 1e-6 * sp, MIN_STRETCH],
                upper: vec![f64::INFINITY, f64::INFINITY, 1e4 * sp, MAX_STRETCH],
                scale: vec![amp, amp, sp, 1.0],
            };
            let model = |x: &[f64], tau: f64| {
                stretched_t1_model(&StretchedDecayModel { a: x[0], c: x[1], t1_nv: x[2], n_nv: x[3], t1_e: f64::INFINITY, n_e: 1.0 }, tau)
            };
            Ok(run_lm(curve, spec, model)?.0)
        }
        Some((t1_nv, n_nv)) => {
            if !(t1_nv > 0.0 && n_nv > 0.0 && n_nv <= MAX_STRETCH) {
                return Err(Error::InvalidInput("NV decay time must be > 0 and stretch in (0, 4]".into()));
            }
            // electron-only decay after dividing out the NV envelope
            let env: Vec<f64> = t.iter().map(|tau| (-(tau / t1_nv).powf(n_nv)).exp()).collect();
            let ratio: Vec<f64> = y.iter().zip(&env).map(|(y, e)| (y - c0) / (a0 * e)).collect();
            let te0 = one_over_e_time(t, &ratio, 1.0, 0.0).max(1e-3 * sp);
            let spec = Spec {
                model: "stretched-t1-product",
                names: vec!["A", "c", "T1_e", "n_e"],
                x0: vec![a0, c0, te0, 1.0],
                lower: vec![f64::NEG_INFINITY, f64::NEG_INFINITY, 1e-6 * sp, MIN_STRETCH],
                upper: vec![f64::INFINITY, f64::INFINITY, 1e4 * sp, MAX_STRETCH],
                scale: vec![amp, amp, sp, 1.0],
            };
            let model = |x: &[f64], tau: f64| {
                stretched_t1_model(&StretchedDecayModel { a: x[0], c: x[1], t1_nv, n_nv, t1_e: x[2], n_e: x[3] }, tau)
            };
            let (mut r, _) = run_lm(curve, spec, model)?;
            r.params.push(("T1_nv".into(), Estimate { value: t1_nv, stderr: 0.0, gauss_newton_stderr: None }));
            r.params.push(("n_nv".into(), Estimate { value: n_nv, stderr: 0.0, gauss_newton_stderr: None }));
            Ok(r)
        }
    }
}

/// Options of [`fit_echo_modulation`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EchoFitOptions {
    /// Nuclear Larmor frequency in MHz; overrides the periodogram estimate.
    pub omega_n: Option<f64>,
    /// Hold `omega_n` fixed instead of using it as a starting value.
    pub fix_omega: bool,
}

/// A·exp(−(t/T)^n) without offset, the start for the modulated fit.
fn fit_envelope(curve: &DecayCurve) -> Result<(f64, f64, f64)> {
    let (t, y) = (curve.t(), curve.y());
    if t.len() < 6 {
        return Err(Error::InsufficientData("echo fit needs at least 6 points".into()));
    }
    let a0 = y[0];
    let sp = span(t).max(1e-300);
    let amp = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let t0 = one_over_e_time(t, y, a0, 0.0).max(1e-3 * sp);
    let spec = Spec {
        model: "stretched",
        names: vec!["A", "T", "n"],
        x0: vec![a0, t0, 1.0],
        lower: vec![f64::NEG_INFINITY, 1e-6 * sp, MIN_STRETCH],
        upper: vec![f64::INFINITY, 1e4 * sp, MAX_STRETCH],
        scale: vec![amp, sp, 1.0],
    };
    let (_, out) = run_lm(curve, spec, |x: &[f64], tau: f64| x[0] * (-(tau / x[1]).powf(x[2])).exp())?;
    Ok((out.x[0], out.x[1], out.x[2]))
}

/// Linear fit of r ≈ a0 + a1 cos(w t) + a2 sin(w t).
fn harmonic_projection(t: &[f64], r: &[f64], w: f64) -> Option<[f64; 3]> {
    let n = t.len();
    let m = nalgebra::DMatrix::from_fn(n, 3, |i, k| match k {
        0 => 1.0,
        1 => (w * t[i]).cos(),
        _ => (w * t[i]).sin(),
    });
    let b = nalgebra::DVector::from_column_slice(r);
    let sol = (m.transpose() * &m).lu().solve(&(m.transpose() * b))?;
    Some([sol[0], sol[1], sol[2]])
}

/// Echo decay with nuclear modulation. ω_n is started from the dominant
/// periodogram component of the envelope-normalised curve unless supplied.
pub fn fit_echo_modulation(curve: &DecayCurve, opts: &EchoFitOptions) -> Result<FitResult> {
    let (t, y) = (curve.t(), curve.y());
    let (a_env, t_env, n_env) = fit_envelope(curve)?;
    let sp = span(t).max(1e-300);
    let env: Vec<f64> = t.iter().map(|tau| a_env * (-(tau / t_env).powf(n_env)).exp()).collect();
    let ratio: Vec<f64> = y.iter().zip(&env).map(|(y, e)| y / e - 1.0).collect();
    let omega = match opts.omega_n {
        Some(w) if w > 0.0 && w.is_finite() => w,
        Some(w) => return Err(Error::InvalidInput(format!("omega_n must be positive, got {w}"))),
        None => {
            let (f, snr) = optim::dominant_frequency(t, &ratio)
                .ok_or_else(|| Error::InsufficientData("too few points for a spectral estimate of omega_n".into()))?;
            if snr < PEAK_SNR {
                return Err(Error::InsufficientData("no modulation peak above the noise floor; supply omega_n".into()));
            }
            // sin²(π ω t/2) oscillates at ω/2
            let w = 2.0 * f;
            if sp * w / 2.0 < 3.0 {
                return Err(Error::InsufficientData("fewer than 3 modulation periods in the window; supply omega_n".into()));
            }
            w
        }
    };
    let [_, a1, a2] = harmonic_projection(t, &ratio, PI * omega).unwrap_or([0.0, 0.0, 0.0]);
    let alpha0 = 2.0 * (a1 * a1 + a2 * a2).sqrt();
    let phi0 = 0.5 * a2.atan2(-a1);
    let a0 = a_env / (1.0 + alpha0 / 2.0);
    let amp = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let fixed = opts.fix_omega && opts.omega_n.is_some();
    let mut names = vec!["A", "T2", "n", "alpha", "omega_n", "phi1"];
    let mut x0 = vec![a0, t_env, n_env, alpha0, omega, phi0];
    let mut lower = vec![f64::NEG_INFINITY, 1e-6 * sp, MIN_STRETCH, 0.0, 0.5 * omega, -10.0];
    let mut upper = vec![f64::INFINITY, 1e4 * sp, MAX_STRETCH, f64::INFINITY, 2.0 * omega, 10.0];
    let mut scale = vec![amp, sp, 1.0, 1.0, omega, 1.0];
    if fixed {
        for v in [&mut x0, &mut lower, &mut upper, &mut scale] {
            v.remove(4);
        }
        names.remove(4);
    }
    let spec = Spec { model: "echo-modulation", names, x0, lower, upper, scale };
    let model = |x: &[f64], tt: f64| {
        let (w, phi) = if fixed { (omega, x[4]) } else { (x[4], x[5]) };
        echo_modulation_model(&EchoModulationModel { a: x[0], t2: x[1], n: x[2], alpha: x[3], omega_n: w, phi1: phi }, tt)
    };
    let (mut r, _) = run_lm(curve, spec, model)?;
    if fixed {
        r.params.insert(4, ("omega_n".into(), Estimate { value: omega, stderr: 0.0, gauss_newton_stderr: None }));
    }
    let alpha = r.value("alpha");
    let alpha_se = r.stderr("alpha");
    if alpha <= 1e-8 || !(alpha > 2.0 * alpha_se) {
        for (name, e) in r.params.iter_mut() {
            if (name == "omega_n" && !fixed) || name == "phi1" {
                e.stderr = f64::INFINITY;
            }
        }
        r.diagnostics.warnings.push("modulation depth consistent with 0: omega_n and phi1 unidentifiable".into());
    }
    Ok(r)
}

/// Decaying sinusoid fit; f starts from the dominant periodogram component.
pub fn fit_rabi(curve: &DecayCurve) -> Result<FitResult> {
    let (t, y) = (curve.t(), curve.y());
    if t.len() < 8 {
        return Err(Error::InsufficientData("Rabi fit needs at least 8 points".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let (f0, snr) =
        optim::dominant_frequency(t, y).ok_or_else(|| Error::InsufficientData("too few points for a spectral estimate".into()))?;
    if snr < PEAK_SNR {
        return Err(Error::InsufficientData("no oscillation peak above the noise floor".into()));
    }
    let centred: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let [c0, a1, a2] = harmonic_projection(t, &centred, TWO_PI * f0).unwrap_or([0.0, 0.0, 0.0]);
    let amp0 = (a1 * a1 + a2 * a2).sqrt();
    let phi0 = (-a2).atan2(a1);
    let sp = span(t).max(1e-300);
    let amp = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    // the harmonic projection averages over the decay: start the amplitude higher
    let spec = Spec {
        model: "rabi",
        names: vec!["A", "T_rabi", "n", "f", "phi", "C"],
        x0: vec![1.5 * amp0, 0.5 * sp, 1.0, f0, phi0, mean + c0],
        lower: vec![0.0, 1e-3 * sp, MIN_STRETCH, 0.5 * f0, -10.0, f64::NEG_INFINITY],
        upper: vec![f64::INFINITY, 1e6 * sp, MAX_STRETCH, 2.0 * f0, 10.0, f64::INFINITY],
        scale: vec![amp, sp, 1.0, f0, 1.0, amp],
    };
    let model = |x: &[f64], tau: f64| rabi_model(&RabiModel { a: x[0], t_rabi: x[1], n: x[2], f: x[3], phi: x[4], c: x[5] }, tau);
    Ok(run_lm(curve, spec, model)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(t: Vec<f64>, f: impl Fn(f64) -> f64) -> DecayCurve {
        let y = t.iter().map(|&t| f(t)).collect();
        DecayCurve::new(t, y, None).unwrap()
    }

    #[test]
    fn nv_only_stretched_roundtrip() {
        let m = StretchedDecayModel { a: 0.8, c: 0.1, t1_nv: 120.0, n_nv: 0.7, t1_e: f64::INFINITY, n_e: 1.0 };
        let c = curve((1..60).map(|i| i as f64 * 8.0).collect(), |t| stretched_t1_model(&m, t));
        let r = fit_stretched_t1(&c, None).unwrap();
        assert!(r.diagnostics.converged, "{r:?}");
        for (name, v) in [("A", 0.8), ("c", 0.1), ("T1_nv", 120.0), ("n_nv", 0.7)] {
            assert!((r.value(name) - v).abs() < 1e-6 * v.abs(), "{name}: {}", r.value(name));
        }
    }

    #[test]
    fn rabi_pure_cosine_frequency_exact() {
        let c = curve((0..120).map(|i| i as f64 * 0.01).collect(), |t| 0.5 * (TWO_PI * 16.7 * t).cos() + 0.5);
        let r = fit_rabi(&c).unwrap();
        assert!((r.value("f") - 16.7).abs() < 1e-6 * 16.7, "{}", r.value("f"));
    }
}
