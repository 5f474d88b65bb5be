//! P1-centre resonances, their exact-diagonalisation oracle and g-factor
//! extraction from fitted DEER spectrum peaks. Frequencies are in MHz.

use crate::error::{Error, Result};
use crate::physics::PhysicalConstants;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Isotope {
    /// I = 1.
    N14,
    /// I = ½.
    N15,
}

impl Isotope {
    /// Twice the nuclear spin.
    fn two_i(self) -> usize {
        match self {
            Isotope::N14 => 2,
            Isotope::N15 => 1,
        }
    }
}

/// Orientation class of the P1 axis relative to the field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Axis {
    On,
    Off,
}

/// On-axis hyperfine constants implied by the fitted ¹⁴N splittings
/// (227.1 MHz on-axis, 170.1 MHz off-axis): 2A∥ = 227.1 and 2A′∥ = 170.1.
pub const DERIVED_A_PAR_14N: f64 = 227.1 / 2.0;
pub const DERIVED_A_PERP_14N: f64 = (9.0 * 170.1 / 2.0 - 227.1 / 2.0) / 8.0;

/// Nuclear gyromagnetic ratios in MHz/G.
pub const GAMMA_N14: f64 = 3.077e-4;
pub const GAMMA_N15: f64 = -4.316e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct P1Params {
    pub isotope: Isotope,
    pub a_par: f64,
    pub a_perp: f64,
    /// Quadrupole constant; ignored for ¹⁵N.
    pub q: f64,
    pub omega_e: f64,
    pub omega_n: f64,
}

impl P1Params {
    pub fn new(isotope: Isotope, a_par: f64, a_perp: f64, q: f64, omega_e: f64, omega_n: f64) -> Result<Self> {
        for (name, v) in [("A_par", a_par), ("A_perp", a_perp), ("Q", q), ("omega_e", omega_e), ("omega_n", omega_n)] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be finite")));
            }
        }
        if omega_e <= 0.0 {
            return Err(Error::InvalidInput(format!("omega_e must be > 0, got {omega_e}")));
        }
        Ok(Self { isotope, a_par, a_perp, q, omega_e, omega_n })
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.isotope == Isotope::N15 && self.q != 0.0 {
            w.push("15N has no nuclear quadrupole moment; Q is ignored".into());
        }
        if self.omega_e <= self.a_perp.abs() {
            w.push(format!(
                "omega_e = {} MHz does not exceed |A_perp| = {} MHz; second-order lines are unreliable",
                self.omega_e,
                self.a_perp.abs()
            ));
        }
        w
    }

    /// The constants seen by the given orientation class.
    pub fn for_axis(&self, axis: Axis) -> Self {
        match axis {
            Axis::On => *self,
            Axis::Off => {
                let (a_par, a_perp) = off_axis_constants(self.a_par, self.a_perp);
                Self { a_par, a_perp, ..*self }
            }
        }
    }

    fn quadrupole(&self) -> f64 {
        match self.isotope {
            Isotope::N14 => self.q,
            Isotope::N15 => 0.0,
        }
    }
}

/// (A′∥, A′⊥) = ((A∥+8A⊥)/9, (4A∥+5A⊥)/9).
pub fn off_axis_constants(a_par: f64, a_perp: f64) -> (f64, f64) {
    ((a_par + 8.0 * a_perp) / 9.0, (4.0 * a_par + 5.0 * a_perp) / 9.0)
}

/// One electron-flip line with the nuclear projection it conserves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transition {
    /// Nuclear projection m_I.
    pub m_i: f64,
    pub frequency: f64,
}

/// Second-order lines, ordered from the highest m_I down.
pub fn p1_resonances(p: &P1Params, axis: Axis) -> Vec<Transition> {
    let p = p.for_axis(axis);
    let (we, ap, aq) = (p.omega_e, p.a_par, p.a_perp);
    match p.isotope {
        Isotope::N14 => vec![
            Transition { m_i: 1.0, frequency: we + ap + aq * aq / (2.0 * we) },
            Transition { m_i: 0.0, frequency: we + aq * aq / we },
            Transition { m_i: -1.0, frequency: we - ap + aq * aq / (2.0 * we) },
        ],
        Isotope::N15 => {
            let shift = aq * aq / (4.0 * (we - p.omega_n));
            vec![Transition { m_i: 0.5, frequency: we + ap / 2.0 + shift }, Transition { m_i: -0.5, frequency: we - ap / 2.0 + shift }]
        }
    }
}

/// H = ω_e S_z + ω_n I_z + A∥ S_z I_z + A⊥(S_x I_x + S_y I_y) + Q I_z² in the
/// product basis |m_S, m_I⟩ with m_S = +½ first and m_I descending.
fn hamiltonian(p: &P1Params) -> (DMatrix<f64>, Vec<(f64, f64)>) {
    let ni = p.isotope.two_i() + 1;
    let spin_i = p.isotope.two_i() as f64 / 2.0;
    let labels: Vec<(f64, f64)> = [0.5, -0.5].iter().flat_map(|&ms| (0..ni).map(move |k| (ms, spin_i - k as f64))).collect();
    let n = labels.len();
    let mut h = DMatrix::zeros(n, n);
    for (a, &(ms, mi)) in labels.iter().enumerate() {
        h[(a, a)] = p.omega_e * ms + p.omega_n * mi + p.a_par * ms * mi + p.quadrupole() * mi * mi;
        // (A⊥/2)(S₊I₋ + S₋I₊): ⟨ms+1, mi−1| S₊I₋ |ms, mi⟩
        for (b, &(ms2, mi2)) in labels.iter().enumerate() {
            if ms2 == ms + 1.0 && mi2 == mi - 1.0 {
                let s = ((0.5 - ms) * (0.5 + ms + 1.0)).sqrt();
                let i = ((spin_i + mi) * (spin_i - mi + 1.0)).sqrt();
                h[(b, a)] = 0.5 * p.a_perp * s * i;
                h[(a, b)] = h[(b, a)];
            }
        }
    }
    (h, labels)
}

/// Exact electron-flip, nuclear-conserving transition frequencies, each
/// eigenstate labelled by its dominant product state. Sorted by frequency.
pub fn p1_exact(p: &P1Params, axis: Axis) -> Result<Vec<Transition>> {
    let p = p.for_axis(axis);
    let (h, labels) = hamiltonian(&p);
    let n = labels.len();
    let eig = SymmetricEigen::try_new(h, 1e-14, 10_000).ok_or_else(|| Error::NonConvergence("P1 Hamiltonian eigensolve".into()))?;
    let mut energy = vec![f64::NAN; n];
    for k in 0..n {
        let v = eig.eigenvectors.column(k);
        let dominant = (0..n).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).expect("non-empty basis");
        if !energy[dominant].is_nan() {
            return Err(Error::Consistency("two eigenstates share a dominant product state".into()));
        }
        energy[dominant] = eig.eigenvalues[k];
    }
    let ni = n / 2;
    let mut out: Vec<Transition> = (0..ni).map(|k| Transition { m_i: labels[k].1, frequency: energy[k] - energy[k + ni] }).collect();
    out.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    Ok(out)
}

/// A fitted line centre with its 1σ uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub center: f64,
    pub stderr: f64,
}

impl Peak {
    pub fn new(center: f64, stderr: f64) -> Self {
        Self { center, stderr }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GFactorResult {
    pub omega_e_avg: f64,
    pub omega_e_avg_stderr: f64,
    /// G.
    pub b_eff: f64,
    pub b_eff_stderr: f64,
    pub g: f64,
    pub g_stderr: f64,
    /// Per-class ω_e estimates (on, off) for ¹⁴N, or both quadratic roots for ¹⁵N.
    pub omega_e_candidates: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Sanity band for the extracted g.
pub const G_BAND: (f64, f64) = (1.5, 2.5);
/// Largest relative disagreement allowed between per-class ω_e estimates.
pub const CLASS_TOLERANCE: f64 = 0.05;

/// B_eff = ω_e/γ_e and g = hω_fit/(μ_B B_eff).
fn g_from(omega_e: f64, dark: f64, c: &PhysicalConstants) -> (f64, f64) {
    let b = omega_e / c.gamma_electron_linear();
    (b, dark / (c.mu_bohr_over_h_mhz_per_gauss() * b))
}

/// First-order propagation with central differences of step σ/100 per input.
fn propagate<F: Fn(&[f64]) -> [f64; 3]>(f: F, x: &[f64], sd: &[f64]) -> [f64; 3] {
    let mut var = [0.0; 3];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        if sd[i] == 0.0 {
            continue;
        }
        let h = sd[i] / 100.0;
        xp[i] = x[i] + h;
        let up = f(&xp);
        xp[i] = x[i] - h;
        let dn = f(&xp);
        xp[i] = x[i];
        for k in 0..3 {
            var[k] += ((up[k] - dn[k]) / (2.0 * h) * sd[i]).powi(2);
        }
    }
    var.map(f64::sqrt)
}

fn finish(omega: f64, dark: f64, c: &PhysicalConstants, errs: [f64; 3], candidates: Vec<f64>, mut warnings: Vec<String>) -> GFactorResult {
    let (b, g) = g_from(omega, dark, c);
    if !(G_BAND.0..G_BAND.1).contains(&g) {
        warnings.push(format!("g = {g} lies outside the sanity band {:?}", G_BAND));
    }
    GFactorResult {
        omega_e_avg: omega,
        omega_e_avg_stderr: errs[0],
        b_eff: b,
        b_eff_stderr: errs[1],
        g,
        g_stderr: errs[2],
        omega_e_candidates: candidates,
        warnings,
    }
}

/// ¹⁴N pipeline: ω_e = ω_t1 + ω_t3 − ω_t2 per orientation class, averaged over
/// the on- and off-axis triplets. Each triplet is ordered (t1, t2, t3).
pub fn g_factor_14n(on: [Peak; 3], off: [Peak; 3], dark: Peak, c: &PhysicalConstants) -> Result<GFactorResult> {
    let mut x: Vec<f64> = on.iter().chain(off.iter()).map(|p| p.center).collect();
    x.push(dark.center);
    let sd: Vec<f64> = on.iter().chain(off.iter()).chain(std::iter::once(&dark)).map(|p| p.stderr).collect();
    if x.iter().chain(sd.iter()).any(|v| !v.is_finite()) || sd.iter().any(|s| *s < 0.0) {
        return Err(Error::InvalidInput("peak centres and errors must be finite with errors >= 0".into()));
    }
    let we_on = x[0] + x[2] - x[1];
    let we_off = x[3] + x[5] - x[4];
    if we_on <= 0.0 || we_off <= 0.0 || (we_on - we_off).abs() > CLASS_TOLERANCE * we_on.max(we_off) {
        return Err(Error::InvalidInput(format!("triplets give inconsistent omega_e ({we_on} vs {we_off} MHz); check the peak grouping")));
    }
    let eval = |v: &[f64]| {
        let w = 0.5 * ((v[0] + v[2] - v[1]) + (v[3] + v[5] - v[4]));
        let (b, g) = g_from(w, v[6], c);
        [w, b, g]
    };
    let errs = propagate(eval, &x, &sd);
    let omega = 0.5 * (we_on + we_off);
    Ok(finish(omega, dark.center, c, errs, vec![we_on, we_off], Vec::new()))
}

/// Which hyperfine constant enters the ¹⁵N quadratic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PerpConstant {
    /// A⊥.
    OnAxis,
    /// A′⊥.
    OffAxis,
}

/// Roots of ω_e² − (S/2 + ω_n)ω_e + (Sω_n/2 + A²/4) = 0 with S = ω_t1 + ω_t2,
/// from ω_t1 + ω_t2 = 2ω_e + A²/(2(ω_e − ω_n)). ω_n = 0 is the ω_e ≫ ω_n form.
pub fn quadratic_15n_roots(sum: f64, a_perp: f64, omega_n: f64) -> Result<(f64, f64)> {
    let b = sum / 2.0 + omega_n;
    let disc = b * b - 4.0 * (sum * omega_n / 2.0 + a_perp * a_perp / 4.0);
    if disc < 0.0 {
        return Err(Error::Domain(format!("no real omega_e: discriminant {disc}")));
    }
    let s = disc.sqrt();
    Ok(((b + s) / 2.0, (b - s) / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gfactor15nInput {
    pub t1: Peak,
    pub t2: Peak,
    pub a_perp: f64,
    pub a_perp_kind: PerpConstant,
    pub omega_n: f64,
    pub dark: Peak,
    /// Frequency range (MHz) in which the physical ω_e must fall.
    pub window: (f64, f64),
}

/// ¹⁵N pipeline: solve the quadratic, keep the root inside the window, then
/// B_eff and g as for ¹⁴N.
pub fn g_factor_15n(inp: &Gfactor15nInput, c: &PhysicalConstants) -> Result<GFactorResult> {
    let (t1, t2) = (inp.t1.center, inp.t2.center);
    if !(t1 + t2 > 2.0 * inp.a_perp.abs()) {
        return Err(Error::Domain("omega_t1 + omega_t2 must exceed 2 |A_perp|".into()));
    }
    let (hi, lo) = quadratic_15n_roots(t1 + t2, inp.a_perp, inp.omega_n)?;
    let inside = |w: f64| w >= inp.window.0 && w <= inp.window.1;
    let pick_hi = match (inside(hi), inside(lo)) {
        (true, false) => true,
        (false, true) => false,
        _ if hi == lo && inside(hi) => true,
        _ => return Err(Error::Ambiguous(format!("roots {hi} and {lo} MHz: exactly one must lie in the window {:?}", inp.window))),
    };
    let x = [t1, t2, inp.dark.center];
    let sd = [inp.t1.stderr, inp.t2.stderr, inp.dark.stderr];
    let eval = |v: &[f64]| {
        let (h, l) = quadratic_15n_roots(v[0] + v[1], inp.a_perp, inp.omega_n).unwrap_or((f64::NAN, f64::NAN));
        let w = if pick_hi { h } else { l };
        let (b, g) = g_from(w, v[2], c);
        [w, b, g]
    };
    let errs = propagate(eval, &x, &sd);
    let omega = if pick_hi { hi } else { lo };
    let kind = match inp.a_perp_kind {
        PerpConstant::OnAxis => "A_perp",
        PerpConstant::OffAxis => "A'_perp",
    };
    let note = format!("quadratic solved with {kind} = {} MHz", inp.a_perp);
    Ok(finish(omega, inp.dark.center, c, errs, vec![hi, lo], vec![note]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_fixed_point() {
        assert_eq!(off_axis_constants(7.0, 7.0), (7.0, 7.0));
    }

    #[test]
    fn n15_exact_matches_block_diagonalisation() {
        let p = P1Params::new(Isotope::N15, 159.7, 113.8, 0.0, 550.0, -0.08).unwrap();
        let lines = p1_exact(&p, Axis::On).unwrap();
        // |+½,+½⟩ and |−½,−½⟩ are uncoupled; the M = 0 block is 2×2
        let e_pp = 0.5 * p.omega_e + 0.5 * p.omega_n + p.a_par / 4.0;
        let e_mm = -0.5 * p.omega_e - 0.5 * p.omega_n + p.a_par / 4.0;
        let r = (((p.omega_e - p.omega_n) / 2.0).powi(2) + p.a_perp.powi(2) / 4.0).sqrt();
        let e_pm = -p.a_par / 4.0 + r;
        let e_mp = -p.a_par / 4.0 - r;
        let mut expect = [e_pp - e_mp, e_pm - e_mm];
        expect.sort_by(f64::total_cmp);
        for (l, e) in lines.iter().zip(expect) {
            assert!((l.frequency - e).abs() < 1e-10, "{} vs {e}", l.frequency);
        }
    }

    #[test]
    fn zero_coupling_collapses_to_larmor() {
        let p = P1Params::new(Isotope::N14, 0.0, 0.0, 0.0, 550.0, 0.2).unwrap();
        for l in p1_exact(&p, Axis::On).unwrap().into_iter().chain(p1_resonances(&p, Axis::On)) {
            assert!((l.frequency - 550.0).abs() < 1e-10);
        }
    }
}
