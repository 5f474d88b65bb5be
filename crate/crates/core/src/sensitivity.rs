//! EPR sensitivity of an NV to a target spin layer in the presence of a
//! background dark-spin bath, and the empirical SNR scaling used to estimate
//! measurement times.

use crate::bathavg::{fid, BathParams, Dimensionality, WKernel};
use crate::error::{Error, Result};
use crate::physics::units;
use rayon::prelude::*;
use serde::Serialize;

/// Target layer and background bath seen by the same NV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityScenario {
    pub target: BathParams,
    pub background: BathParams,
}

impl SensitivityScenario {
    pub fn new(target: BathParams, background: BathParams) -> Self {
        Self { target, background }
    }

    /// Plane target at d_nv + h above an NV at depth d_nv, with the background
    /// plane at the diamond surface (d_nv). `h = 0` is the bare surface.
    pub fn layered(d_nv: f64, h: f64, sigma_t: f64, gamma_t: f64, sigma_b: f64, gamma_b: f64) -> Result<Self> {
        if !(h.is_finite() && h >= 0.0) {
            return Err(Error::InvalidInput(format!("coating thickness must be >= 0, got {h}")));
        }
        Ok(Self { target: BathParams::plane(sigma_t, gamma_t, d_nv + h)?, background: BathParams::plane(sigma_b, gamma_b, d_nv)? })
    }

    fn with_target_density(&self, sigma_t: f64) -> Self {
        Self { target: BathParams { density: sigma_t, ..self.target }, ..*self }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Domain(format!("tau must be > 0, got {tau} us")));
    }
    Ok(())
}

/// ⟨S_z⟩ = exp(σ_T W_T)·exp(σ_B W_B) at interrogation time τ (µs).
pub fn expected_signal<K: WKernel + ?Sized>(w: &K, scn: &SensitivityScenario, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(fid(w, &scn.target, tau)? * fid(w, &scn.background, tau)?)
}

/// ∂σ_internal/∂σ for the target's density unit.
fn density_unit(dim: Dimensionality) -> f64 {
    match dim {
        Dimensionality::Plane => units::per_um2_to_per_nm2(1.0),
        Dimensionality::HalfSpace => units::per_um3_to_per_nm3(1.0),
    }
}

/// d⟨S_z⟩/dσ_T = α W_T ⟨S_z⟩, per µm⁻² (µm⁻³ for a half-space target).
pub fn signal_slope<K: WKernel + ?Sized>(w: &K, scn: &SensitivityScenario, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let t = &scn.target;
    let wt = w.w(t.gamma_mhz, t.depth_nm, tau, t.dim)?;
    Ok(t.flip_fraction * density_unit(t.dim) * wt * expected_signal(w, scn, tau)?)
}

/// Central difference of ⟨S_z⟩ in σ_T with step `rel_step`·σ_T.
pub fn signal_slope_fd<K: WKernel + ?Sized>(w: &K, scn: &SensitivityScenario, tau: f64, rel_step: f64) -> Result<f64> {
    let s = scn.target.density;
    let h = rel_step * s.max(1.0);
    let up = expected_signal(w, &scn.with_target_density(s + h), tau)?;
    let dn = expected_signal(w, &scn.with_target_density((s - h).max(0.0)), tau)?;
    Ok((up - dn) / (s + h - (s - h).max(0.0)))
}

/// Sensitivity at one τ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sensitivity {
    pub tau_us: f64,
    /// η in µm⁻²·s^½; `f64::MAX` when the signal does not respond to σ_T.
    pub eta: f64,
    pub signal: f64,
    pub insensitive: bool,
}

/// η = ΔS_z √τ / |d⟨S_z⟩/dσ_T| with ΔS_z = √(1 − ⟨S_z⟩²) and τ in seconds.
pub fn eta<K: WKernel + ?Sized>(w: &K, scn: &SensitivityScenario, tau: f64) -> Result<Sensitivity> {
    let signal = expected_signal(w, scn, tau)?;
    let slope = signal_slope(w, scn, tau)?;
    let spread = (1.0 - signal * signal).max(0.0).sqrt();
    let value = spread * (tau * 1e-6).sqrt() / slope.abs();
    if !(value.is_finite() && value > 0.0) {
        return Ok(Sensitivity { tau_us: tau, eta: f64::MAX, signal, insensitive: true });
    }
    Ok(Sensitivity { tau_us: tau, eta: value, signal, insensitive: false })
}

/// Optimal τ and the warnings raised finding it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalTau {
    pub best: Sensitivity,
    pub warnings: Vec<String>,
}

pub const TAU_GRID_NODES: usize = 64;
const GOLDEN_TOL: f64 = 1e-6;

/// Minimises η over τ in `bounds` (µs): a 64-node log grid, then golden
/// section in ln τ between the neighbours of the best node.
pub fn optimize_tau<K: WKernel + ?Sized>(w: &K, scn: &SensitivityScenario, bounds: (f64, f64)) -> Result<OptimalTau> {
    let (lo, hi) = bounds;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo) {
        return Err(Error::InvalidInput(format!("tau bounds must satisfy 0 < lo <= hi, got {bounds:?}")));
    }
    if lo == hi {
        return Ok(OptimalTau { best: eta(w, scn, lo)?, warnings: Vec::new() });
    }
    let (a, b) = (lo.ln(), hi.ln());
    let node = |k: usize| a + (b - a) * k as f64 / (TAU_GRID_NODES - 1) as f64;
    let grid: Vec<Sensitivity> = (0..TAU_GRID_NODES).map(|k| eta(w, scn, node(k).exp())).collect::<Result<_>>()?;
    let k = (0..grid.len()).min_by(|&i, &j| grid[i].eta.total_cmp(&grid[j].eta)).expect("non-empty grid");
    let mut best = grid[k];
    let mut warnings = Vec::new();
    if best.insensitive {
        warnings.push("signal does not respond to the target density anywhere in the tau range".into());
        return Ok(OptimalTau { best, warnings });
    }
    let (mut x0, mut x3) = (node(k.saturating_sub(1)), node((k + 1).min(TAU_GRID_NODES - 1)));
    let f = |x: f64| eta(w, scn, x.exp()).map(|s| s.eta);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = x3 - r * (x3 - x0);
    let mut x2 = x0 + r * (x3 - x0);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while x3 - x0 > GOLDEN_TOL {
        if f1 < f2 {
            x3 = x2;
            x2 = x1;
            f2 = f1;
            x1 = x3 - r * (x3 - x0);
            f1 = f(x1)?;
        } else {
            x0 = x1;
            x1 = x2;
            f1 = f2;
            x2 = x0 + r * (x3 - x0);
            f2 = f(x2)?;
        }
    }
    let cand = eta(w, scn, (0.5 * (x0 + x3)).exp())?;
    if cand.eta < best.eta {
        best = cand;
    }
    if k == 0 || k == TAU_GRID_NODES - 1 {
        warnings.push(format!("optimal tau {} us sits at the boundary of {bounds:?}", best.tau_us));
    }
    Ok(OptimalTau { best, warnings })
}

/// Bath parameters of the two surfaces compared in the ratio map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceBath {
    /// µm⁻².
    pub sigma_b: f64,
    pub gamma_b: f64,
    /// Coating thickness between the diamond and the target (nm).
    pub h: f64,
}

/// Bare surface of the reference sample.
pub const BARE: SurfaceBath = SurfaceBath { sigma_b: 1461.0, gamma_b: 0.0, h: 0.0 };
/// Surface after a ~4 nm coating.
pub const COATED: SurfaceBath = SurfaceBath { sigma_b: 278.5, gamma_b: 0.097, h: 4.0 };

/// One cell of the coated-versus-bare map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioCell {
    pub d_nv_nm: f64,
    pub sigma_t_um2: f64,
    pub eta_coated: f64,
    pub eta_bare: f64,
    /// η_coated*/η_bare*; below 1 the coating improves sensitivity.
    pub eta_ratio: f64,
    pub warnings: usize,
}

/// Orientation of [`RatioCell::eta_ratio`], echoed into outputs.
pub const RATIO_ORIENTATION: &str = "coated_over_bare";

/// Optimal-τ η for both surfaces on every (d_nv, σ_T) pair, with identical
/// τ search for each; γ_T = 0.
pub fn ratio_map<K: WKernel + ?Sized>(
    w: &K,
    d_nv: &[f64],
    sigma_t: &[f64],
    coated: SurfaceBath,
    bare: SurfaceBath,
    tau_bounds: (f64, f64),
) -> Result<Vec<RatioCell>> {
    let cells: Vec<(f64, f64)> = d_nv.iter().flat_map(|&d| sigma_t.iter().map(move |&s| (d, s))).collect();
    cells
        .par_iter()
        .map(|&(d, s)| {
            let c = SensitivityScenario::layered(d, coated.h, s, 0.0, coated.sigma_b, coated.gamma_b)?;
            let b = SensitivityScenario::layered(d, bare.h, s, 0.0, bare.sigma_b, bare.gamma_b)?;
            let oc = optimize_tau(w, &c, tau_bounds)?;
            let ob = optimize_tau(w, &b, tau_bounds)?;
            Ok(RatioCell {
                d_nv_nm: d,
                sigma_t_um2: s,
                eta_coated: oc.best.eta,
                eta_bare: ob.best.eta,
                eta_ratio: oc.best.eta / ob.best.eta,
                warnings: oc.warnings.len() + ob.warnings.len(),
            })
        })
        .collect()
}

/// Empirical SNR-versus-density line and the geometry of the projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnrModel {
    /// SNR per µm⁻².
    pub a: f64,
    pub b: f64,
    /// Integration time behind each point of the line (h).
    pub t_i_hours: f64,
    /// Background density noise (µm⁻²) at the reference time.
    pub delta_sigma_b: f64,
    pub h_nm: f64,
    pub d_nv_nm: f64,
}

impl SnrModel {
    /// Line fitted to the reference FID data.
    pub fn reference() -> Self {
        Self { a: 0.0093, b: -0.3477, t_i_hours: 5.0, delta_sigma_b: 107.5, h_nm: 4.0, d_nv_nm: 4.0 }
    }
}

/// Quoted times for the reference model at σ_T = 500 µm⁻², shown next to the
/// formula's own output.
pub const QUOTED_HOURS: f64 = 2.3;
pub const QUOTED_HOURS_DENSE_NV: f64 = 0.25;

/// SNR = aσ + b.
pub fn snr_line(m: &SnrModel, sigma: f64) -> f64 {
    m.a * sigma + m.b
}

/// Time (h) to reach SNR = 1 from
/// SNR = σ_T / √((t_I/t)(δσ_B² + (σ_T/(aσ_T+b))²((d+h)/d)⁴)),
/// divided by the NV-density factor.
pub fn time_to_snr(m: &SnrModel, sigma_t: f64, nv_density_factor: f64) -> Result<f64> {
    if !(m.a > 0.0) {
        return Err(Error::InvalidInput(format!("SNR slope must be > 0, got {}", m.a)));
    }
    for (name, v) in [("sigma_T", sigma_t), ("nv density factor", nv_density_factor), ("t_I", m.t_i_hours), ("d_nv", m.d_nv_nm)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidInput(format!("{name} must be > 0, got {v}")));
        }
    }
    if !(m.h_nm >= 0.0 && m.delta_sigma_b >= 0.0) {
        return Err(Error::InvalidInput("h and delta sigma_B must be >= 0".into()));
    }
    let line = snr_line(m, sigma_t);
    if line <= 0.0 {
        return Err(Error::Domain(format!("the SNR line is {line} at sigma_T = {sigma_t}; SNR = 1 is unattainable")));
    }
    let target_noise = sigma_t / line;
    let geom = ((m.d_nv_nm + m.h_nm) / m.d_nv_nm).powi(4);
    let t = m.t_i_hours * (m.delta_sigma_b.powi(2) + target_noise * target_noise * geom) / (sigma_t * sigma_t);
    Ok(t / nv_density_factor)
}

/// Relative change of the dipolar coupling when a layer at lateral spacing ρ
/// moves from height h to h + δh: δV/V ≈ −3hδh/ρ², valid for ρ ≫ h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Perturbation {
    pub ratio: f64,
    /// ρ ≤ 3h, outside the small-angle regime.
    pub regime_violated: bool,
}

pub fn dipolar_perturbation_ratio(h: f64, rho: f64, delta_h: f64) -> Result<Perturbation> {
    if !(rho.is_finite() && rho > 0.0 && h.is_finite() && h >= 0.0 && delta_h.is_finite()) {
        return Err(Error::InvalidInput("need rho > 0, h >= 0 and finite delta h".into()));
    }
    Ok(Perturbation { ratio: -3.0 * h * delta_h / (rho * rho), regime_violated: rho <= 3.0 * h })
}

/// Mean lateral spacing ρ = 1/√σ in nm for a density in µm⁻².
pub fn spacing_nm(sigma_um2: f64) -> f64 {
    1.0 / units::per_um2_to_per_nm2(sigma_um2).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_line_values() {
        let m = SnrModel::reference();
        assert_eq!(snr_line(&m, 0.0), -0.3477);
        assert!((snr_line(&m, 500.0) - 4.3023).abs() < 1e-12);
    }

    #[test]
    fn perturbation_example() {
        let p = dipolar_perturbation_ratio(4.0, 45.0, 4.0).unwrap();
        assert!((p.ratio + 48.0 / 2025.0).abs() < 1e-15);
        assert!(!p.regime_violated);
        assert!((spacing_nm(500.0) - 44.72).abs() < 0.01);
    }
}
