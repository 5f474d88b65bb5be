//! Configurational averaging over a Poisson bath of depolarizing dark spins.
//!
//! For independent, uniformly placed spins the averaged DEER/echo ratio is
//! F(t) = exp(α·σ·W), W = ∫ (f_DEER − f_Echo) dA over the bath plane (or dV
//! over a half-space). This module evaluates W by quadrature, forms F and its
//! double-log transform, and provides a positional Monte Carlo oracle.

use crate::curve::DecayCurve;
use crate::error::{Error, Result};
use crate::kernels::{self, KernelParams};
use crate::physics::{units, NvAxis, PhysicalConstants, TWO_PI};
use crate::quad::{integrate, QuadOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::RwLock;

/// Geometry of the bath.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimensionality {
    /// Spins on the plane a distance d from the NV; density in µm⁻².
    #[serde(alias = "2d")]
    Plane,
    /// Spins filling the half-space beyond d; density in µm⁻³.
    #[serde(alias = "3d")]
    HalfSpace,
}

/// Dark-spin bath seen by one NV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BathParams {
    /// µm⁻² for a plane, µm⁻³ for a half-space.
    pub density: f64,
    /// Depolarization rate 1/T₁ in MHz, i.e. per µs.
    pub gamma_mhz: f64,
    pub depth_nm: f64,
    pub dim: Dimensionality,
    /// Fraction of bath spins inverted by the DEER π pulse.
    pub flip_fraction: f64,
}

impl BathParams {
    pub fn new(density: f64, gamma_mhz: f64, depth_nm: f64, dim: Dimensionality, flip_fraction: f64) -> Result<Self> {
        if !(density.is_finite() && density >= 0.0) {
            return Err(Error::InvalidInput(format!("density must be >= 0, got {density}")));
        }
        if !(gamma_mhz.is_finite() && gamma_mhz >= 0.0) {
            return Err(Error::InvalidInput(format!("gamma must be >= 0, got {gamma_mhz}")));
        }
        if !(depth_nm.is_finite() && depth_nm > 0.0) {
            return Err(Error::InvalidInput(format!("depth must be > 0, got {depth_nm}")));
        }
        if !(0.0..=1.0).contains(&flip_fraction) {
            return Err(Error::InvalidInput(format!("flip fraction must lie in [0, 1], got {flip_fraction}")));
        }
        Ok(Self { density, gamma_mhz, depth_nm, dim, flip_fraction })
    }

    /// Plane bath with every spin flipped.
    pub fn plane(density_um2: f64, gamma_mhz: f64, depth_nm: f64) -> Result<Self> {
        Self::new(density_um2, gamma_mhz, depth_nm, Dimensionality::Plane, 1.0)
    }

    /// Density in nm⁻² or nm⁻³.
    pub fn density_internal(&self) -> f64 {
        match self.dim {
            Dimensionality::Plane => units::per_um2_to_per_nm2(self.density),
            Dimensionality::HalfSpace => units::per_um3_to_per_nm3(self.density),
        }
    }

    pub fn gamma_internal(&self) -> f64 {
        units::rate_mhz_to_internal(self.gamma_mhz)
    }
}

/// Quadrature settings of the W integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WConfig {
    pub axis: NvAxis,
    pub constants: PhysicalConstants,
    /// Target relative error of W.
    pub rel_tol: f64,
    /// Radii below r_min = d·r_min_fraction use linear rather than logarithmic nodes.
    pub r_min_fraction: f64,
    /// Fixed outer radius (nm); when absent it is chosen from the tail bound.
    pub r_max: Option<f64>,
    /// Allowed tail contribution beyond r_max relative to |W|.
    pub tail_tol: f64,
    /// Starting number of azimuthal nodes (power of two).
    pub azimuth_nodes: usize,
    /// Relative change below which azimuthal doubling stops.
    pub azimuth_tol: f64,
}

impl Default for WConfig {
    fn default() -> Self {
        Self {
            axis: NvAxis::default(),
            constants: PhysicalConstants::default(),
            rel_tol: 1e-6,
            r_min_fraction: 1.0 / 50.0,
            r_max: None,
            tail_tol: 1e-8,
            azimuth_nodes: 64,
            azimuth_tol: 1e-7,
        }
    }
}

const MAX_AZIMUTH_NODES: usize = 1 << 16;
const QUANTUM: f64 = 1e-9;

type Key = (i64, i64, i64, Dimensionality);

fn key(g: f64, d: f64, t: f64, dim: Dimensionality) -> Key {
    let q = |x: f64| (x / QUANTUM).round() as i64;
    (q(g), q(d), q(t), dim)
}

/// Memoised evaluator of W(γ, d, t) for one NV axis and quadrature setting.
#[derive(Debug)]
pub struct BathKernelIntegral {
    config: WConfig,
    memo: RwLock<HashMap<Key, f64>>,
}

impl Default for BathKernelIntegral {
    fn default() -> Self {
        Self::new(WConfig::default())
    }
}

impl BathKernelIntegral {
    pub fn new(config: WConfig) -> Self {
        Self { config, memo: RwLock::new(HashMap::new()) }
    }

    pub fn config(&self) -> &WConfig {
        &self.config
    }

    pub fn memo_len(&self) -> usize {
        self.memo.read().map(|m| m.len()).unwrap_or(0)
    }

    /// W in nm² (plane) or nm³ (half-space). γ in MHz, d in nm, t in µs.
    pub fn w(&self, gamma_mhz: f64, d: f64, t: f64, dim: Dimensionality) -> Result<f64> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::Domain(format!("depth must be positive, got {d}")));
        }
        if !(t.is_finite() && t >= 0.0 && gamma_mhz.is_finite() && gamma_mhz >= 0.0) {
            return Err(Error::Domain("t and gamma must be finite and >= 0".into()));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let g = units::rate_mhz_to_internal(gamma_mhz);
        let k = key(g, d, t, dim);
        if let Some(v) = self.memo.read().ok().and_then(|m| m.get(&k).copied()) {
            return Ok(v);
        }
        // evaluate at the quantised point so the memo is a pure function of its key
        let (gq, dq, tq) = (k.0 as f64 * QUANTUM, k.1 as f64 * QUANTUM, k.2 as f64 * QUANTUM);
        let v = match dim {
            Dimensionality::Plane => self.plane(gq, dq, tq)?,
            Dimensionality::HalfSpace => self.half_space(gq, dq, tq)?,
        };
        if let Ok(mut m) = self.memo.write() {
            m.insert(k, v);
        }
        Ok(v)
    }

    /// W at several times, evaluated in parallel.
    pub fn w_many(&self, gamma_mhz: f64, d: f64, ts: &[f64], dim: Dimensionality) -> Result<Vec<f64>> {
        ts.par_iter().map(|&t| self.w(gamma_mhz, d, t, dim)).collect()
    }

    fn prefactor(&self) -> f64 {
        self.config.constants.dipolar_prefactor()
    }

    /// In-plane and normal components of the axis after rotating it about the
    /// normal into the x–z plane (the azimuthal integral is invariant).
    fn axis_components(&self) -> (f64, f64) {
        let n = self.config.axis.components();
        ((n[0] * n[0] + n[1] * n[1]).sqrt(), n[2])
    }

    /// ∫₀^{2π} K dφ on the circle of radius ρ at height z. Periodic trapezoid
    /// using the mirror symmetry φ → −φ, doubled until the nested estimates
    /// agree to `azimuth_tol`.
    fn azimuthal(&self, rho: f64, z: f64, g: f64, t: f64) -> Result<f64> {
        let (nx, nz) = self.axis_components();
        let r2 = rho * rho + z * z;
        let r = r2.sqrt();
        let amp = self.prefactor() / (r2 * r);
        let (a, b) = (rho * nx / r, z * nz / r);
        let k = |phi: f64| {
            let ct = a * phi.cos() + b;
            kernels::pair_decay(amp * (1.0 - 3.0 * ct * ct), g, t)
        };
        let mut n = self.config.azimuth_nodes.max(4);
        // half-circle values at indices 0..=n/2 of the n-node rule
        let mut vals: Vec<f64> = (0..=n / 2).map(|j| k(TWO_PI * j as f64 / n as f64)).collect();
        let estimate = |vals: &[f64], n: usize, stride: usize| {
            let half = n / 2;
            let mut s = vals[0] + vals[half];
            let mut j = stride;
            while j < half {
                s += 2.0 * vals[j];
                j += stride;
            }
            s * TWO_PI / (n / stride) as f64
        };
        let mut fine = estimate(&vals, n, 1);
        let mut coarse = estimate(&vals, n, 2);
        loop {
            if (fine - coarse).abs() <= self.config.azimuth_tol * fine.abs() || fine == 0.0 {
                return Ok(fine);
            }
            if n >= MAX_AZIMUTH_NODES {
                return Err(Error::IntegrationAccuracy { estimate: fine, error: (fine - coarse).abs() });
            }
            n *= 2;
            let mut next = Vec::with_capacity(n / 2 + 1);
            for j in 0..=n / 2 {
                if j % 2 == 0 {
                    next.push(vals[j / 2]);
                } else {
                    next.push(k(TWO_PI * j as f64 / n as f64));
                }
            }
            vals = next;
            coarse = fine;
            fine = estimate(&vals, n, 1);
        }
    }

    /// ∫ K dA over the plane at height z, with error estimate.
    fn plane_at(&self, g: f64, z: f64, t: f64, rel: f64) -> Result<(f64, f64)> {
        let opts = QuadOptions { rel_tol: rel, abs_tol: 0.0, max_intervals: 4000 };
        let mut fail: Option<Error> = None;
        let mut ring = |rho: f64| match self.azimuthal(rho, z, g, t) {
            Ok(v) => v,
            Err(e) => {
                fail.get_or_insert(e);
                0.0
            }
        };
        let r_min = z * self.config.r_min_fraction;
        let core = integrate(|rho| rho * ring(rho), 0.0, r_min, opts)?;
        // oscillations stop beyond r_c = (P t)^{1/3}
        let r_c = (self.prefactor() * 2.0 * t).cbrt();
        let r0 = self.config.r_max.unwrap_or(20.0 * z.max(r_c));
        let body = integrate(
            |s| {
                let rho = s.exp();
                rho * rho * ring(rho)
            },
            r_min.ln(),
            r0.ln(),
            opts,
        )?;
        let mut value = core.value + body.value;
        let mut error = core.error + body.error;
        if self.config.r_max.is_none() {
            // |K| ≤ V²t²/8 ≤ P²t²/(2r⁶) ⇒ tail beyond R ≤ πP²t²/(4R⁴)
            let p = self.prefactor();
            let bound = |rr: f64| PI * p * p * t * t / (4.0 * rr.powi(4));
            let r_req = (PI * p * p * t * t / (4.0 * self.config.tail_tol * value.abs().max(1e-300))).powf(0.25);
            if bound(r0) > self.config.tail_tol * value.abs() && r_req > r0 {
                let tail = integrate(
                    |s| {
                        let rho = s.exp();
                        rho * rho * ring(rho)
                    },
                    r0.ln(),
                    r_req.ln(),
                    opts,
                )?;
                value += tail.value;
                error += tail.error;
            }
        }
        if let Some(e) = fail {
            return Err(e);
        }
        Ok((value, error))
    }

    fn plane(&self, g: f64, d: f64, t: f64) -> Result<f64> {
        let rel = 0.1 * self.config.rel_tol;
        let (value, error) = self.plane_at(g, d, t, rel)?;
        if error > self.config.rel_tol * value.abs() {
            return Err(Error::IntegrationAccuracy { estimate: value, error });
        }
        Ok(value)
    }

    fn half_space(&self, g: f64, d: f64, t: f64) -> Result<f64> {
        let rel = 0.1 * self.config.rel_tol;
        let opts = QuadOptions { rel_tol: rel, abs_tol: 0.0, max_intervals: 2000 };
        let mut fail: Option<Error> = None;
        let mut inner_err = 0.0f64;
        let mut layer = |s: f64| {
            let z = s.exp();
            match self.plane_at(g, z, t, 0.1 * rel) {
                Ok((v, e)) => {
                    inner_err = inner_err.max(e / v.abs().max(1e-300));
                    z * v
                }
                Err(e) => {
                    fail.get_or_insert(e);
                    0.0
                }
            }
        };
        let r_c = (self.prefactor() * 2.0 * t).cbrt();
        let z0 = 20.0 * d.max(r_c);
        let body = integrate(&mut layer, d.ln(), z0.ln(), opts)?;
        let mut value = body.value;
        let mut error = body.error;
        // |W_plane(z)| ≤ πP²t²/(4z⁴) ⇒ tail beyond Z ≤ πP²t²/(12Z³)
        let p = self.prefactor();
        let z_req = (PI * p * p * t * t / (12.0 * self.config.tail_tol * value.abs().max(1e-300))).cbrt();
        if z_req > z0 {
            let tail = integrate(&mut layer, z0.ln(), z_req.ln(), opts)?;
            value += tail.value;
            error += tail.error;
        }
        if let Some(e) = fail {
            return Err(e);
        }
        error += inner_err * value.abs();
        if error > self.config.rel_tol * value.abs() {
            return Err(Error::IntegrationAccuracy { estimate: value, error });
        }
        Ok(value)
    }
}

/// Anything that evaluates W(γ, d, t): the direct quadrature or a table.
pub trait WKernel: Sync {
    /// W in nm² (plane) or nm³ (half-space). γ in MHz, d in nm, t in µs.
    fn w(&self, gamma_mhz: f64, d: f64, t: f64, dim: Dimensionality) -> Result<f64>;

    fn w_many(&self, gamma_mhz: f64, d: f64, ts: &[f64], dim: Dimensionality) -> Result<Vec<f64>> {
        ts.par_iter().map(|&t| self.w(gamma_mhz, d, t, dim)).collect()
    }
}

impl WKernel for BathKernelIntegral {
    fn w(&self, gamma_mhz: f64, d: f64, t: f64, dim: Dimensionality) -> Result<f64> {
        BathKernelIntegral::w(self, gamma_mhz, d, t, dim)
    }
}

/// Range covered by a [`WTable`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WTableSpec {
    pub dim: Dimensionality,
    /// Reduced-time range τ = t/d³ (µs/nm³).
    pub tau: (f64, f64),
    /// Largest damping product γt (dimensionless).
    pub gamma_t_max: f64,
    /// Nodes per e-fold of τ. W(τ) carries a weak oscillation at the largest
    /// coupling, so 16 per e-fold are needed for ~1e-4 relative accuracy.
    pub tau_nodes_per_efold: usize,
    /// Nodes across [0, γt_max].
    pub gamma_t_nodes: usize,
}

impl WTableSpec {
    /// Covers every (γ, d, t) with t in `t_range`, d in `depth_range` and
    /// γ ≤ `gamma_max_mhz`.
    pub fn covering(dim: Dimensionality, t_range: (f64, f64), depth_range: (f64, f64), gamma_max_mhz: f64) -> Self {
        // 2% margin absorbs finite-difference steps taken at the bounds
        let tau = (0.98 * t_range.0 / depth_range.1.powi(3), 1.02 * t_range.1 / depth_range.0.powi(3));
        let gamma_t_max = 1.02 * units::rate_mhz_to_internal(gamma_max_mhz) * t_range.1;
        Self { dim, tau, gamma_t_max, tau_nodes_per_efold: 16, gamma_t_nodes: gamma_t_max.ceil().max(3.0) as usize + 1 }
    }
}

/// W tabulated through its depth self-similarity
/// W(γ, d, t) = d^k·W(γd³, 1, t/d³), k = 2 (plane) or 3 (half-space):
/// ln(−W) at d = 1 on a grid in (ln τ, γt), interpolated with 4×4 Lagrange
/// stencils. Queries outside the grid fall through to direct quadrature.
#[derive(Debug)]
pub struct WTable {
    direct: BathKernelIntegral,
    spec: WTableSpec,
    s0: f64,
    hs: f64,
    ns: usize,
    hc: f64,
    nc: usize,
    /// ln(−W) at d = 1, indexed [c][s].
    values: Vec<f64>,
}

impl WTable {
    pub fn build(direct: BathKernelIntegral, spec: WTableSpec) -> Result<Self> {
        let (t_lo, t_hi) = spec.tau;
        if !(t_lo > 0.0 && t_hi > t_lo && t_hi.is_finite()) {
            return Err(Error::InvalidInput(format!("tau range must satisfy 0 < lo < hi, got {:?}", spec.tau)));
        }
        if !(spec.gamma_t_max.is_finite() && spec.gamma_t_max >= 0.0) || spec.gamma_t_nodes < 4 || spec.tau_nodes_per_efold < 1 {
            return Err(Error::InvalidInput("table needs gamma*t >= 0, at least 4 damping nodes and 1 node per e-fold".into()));
        }
        // one node of margin on each side keeps the stencils centred at the edges
        let hs = 1.0 / spec.tau_nodes_per_efold as f64;
        let s0 = t_lo.ln() - hs;
        let ns = ((t_hi.ln() + hs - s0) / hs).ceil() as usize + 1;
        let ns = ns.max(4);
        let nc = spec.gamma_t_nodes;
        let hc = spec.gamma_t_max.max(1e-12) / (nc - 1) as f64;
        let nodes: Vec<(usize, usize)> = (0..nc).flat_map(|i| (0..ns).map(move |j| (i, j))).collect();
        let values = nodes
            .par_iter()
            .map(|&(ic, is)| {
                let tau = (s0 + is as f64 * hs).exp();
                let c = ic as f64 * hc;
                let gamma = c / tau;
                let v = direct.w(units::rate_mhz_to_internal(gamma), 1.0, tau, spec.dim)?;
                if !(v < 0.0) {
                    return Err(Error::Consistency(format!("W = {v} is not negative at tau = {tau}, gamma*t = {c}")));
                }
                Ok((-v).ln())
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self { direct, spec, s0, hs, ns, hc, nc, values })
    }

    pub fn spec(&self) -> &WTableSpec {
        &self.spec
    }

    pub fn direct(&self) -> &BathKernelIntegral {
        &self.direct
    }

    fn interpolate(&self, s: f64, c: f64) -> Option<f64> {
        let (is, ws) = stencil((s - self.s0) / self.hs, self.ns)?;
        let (ic, wc) = stencil(c / self.hc, self.nc)?;
        let mut acc = 0.0;
        for (a, wa) in wc.iter().enumerate() {
            let row = &self.values[(ic + a) * self.ns + is..][..4];
            acc += wa * row.iter().zip(&ws).map(|(v, w)| v * w).sum::<f64>();
        }
        Some(acc)
    }
}

/// First node and cubic Lagrange weights for position `x` in node units, or
/// None outside [0, n−1].
fn stencil(x: f64, n: usize) -> Option<(usize, [f64; 4])> {
    if !(x >= -1e-12 && x <= (n - 1) as f64 + 1e-12) {
        return None;
    }
    let i = (x.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let u = x - i as f64;
    let w = [
        -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0,
        u * (u - 2.0) * (u - 3.0) / 2.0,
        -u * (u - 1.0) * (u - 3.0) / 2.0,
        u * (u - 1.0) * (u - 2.0) / 6.0,
    ];
    Some((i, w))
}

impl WKernel for WTable {
    fn w(&self, gamma_mhz: f64, d: f64, t: f64, dim: Dimensionality) -> Result<f64> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::Domain(format!("depth must be positive, got {d}")));
        }
        if !(t.is_finite() && t >= 0.0 && gamma_mhz.is_finite() && gamma_mhz >= 0.0) {
            return Err(Error::Domain("t and gamma must be finite and >= 0".into()));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        if dim == self.spec.dim {
            let tau = t / (d * d * d);
            let c = units::rate_mhz_to_internal(gamma_mhz) * t;
            let inside = tau >= self.spec.tau.0 && tau <= self.spec.tau.1 && c <= self.spec.gamma_t_max;
            if inside {
                if let Some(l) = self.interpolate(tau.ln(), c) {
                    let k = match dim {
                        Dimensionality::Plane => 2,
                        Dimensionality::HalfSpace => 3,
                    };
                    return Ok(-d.powi(k) * l.exp());
                }
            }
        }
        self.direct.w(gamma_mhz, d, t, dim)
    }
}

/// Averaged ratio F = exp(α·σ·W).
pub fn fid<K: WKernel + ?Sized>(w: &K, bath: &BathParams, t: f64) -> Result<f64> {
    if bath.density == 0.0 || bath.flip_fraction == 0.0 {
        return Ok(1.0);
    }
    let wv = w.w(bath.gamma_mhz, bath.depth_nm, t, bath.dim)?;
    Ok((bath.flip_fraction * bath.density_internal() * wv).exp())
}

/// F on a time grid.
pub fn fid_curve<K: WKernel + ?Sized>(w: &K, bath: &BathParams, ts: &[f64]) -> Result<Vec<f64>> {
    ts.par_iter().map(|&t| fid(w, bath, t)).collect()
}

/// Output of [`double_log`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoubleLog {
    /// F_p = log(−log F) on the surviving points, errors propagated to first order.
    pub curve: DecayCurve,
    /// Index in the input of every surviving point.
    pub kept: Vec<usize>,
    pub dropped: usize,
}

/// Points with F outside (ε, 1 − ε) are dropped before the transform.
pub const DOUBLE_LOG_EPS: f64 = 1e-6;

/// F_p = log(−log F) for every point with ε < F < 1 − ε.
pub fn double_log(curve: &DecayCurve) -> Result<DoubleLog> {
    let mut t = Vec::new();
    let mut y = Vec::new();
    let mut e = Vec::new();
    let mut kept = Vec::new();
    for (i, (&ti, &fi)) in curve.t().iter().zip(curve.y()).enumerate() {
        if fi > DOUBLE_LOG_EPS && fi < 1.0 - DOUBLE_LOG_EPS {
            let l = fi.ln();
            t.push(ti);
            y.push((-l).ln());
            if let Some(errs) = curve.y_err() {
                e.push(errs[i] / (fi * l.abs()));
            }
            kept.push(i);
        }
    }
    let dropped = curve.len() - kept.len();
    if kept.len() < 4 {
        return Err(Error::InsufficientData(format!("only {} points inside (0, 1) after dropping {dropped}", kept.len())));
    }
    let errs = curve.y_err().map(|_| e);
    Ok(DoubleLog { curve: DecayCurve::new(t, y, errs)?, kept, dropped })
}

/// Monte Carlo estimate of the averaged ratio with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McCurve {
    pub t: Vec<f64>,
    pub f: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Radius (nm) of the simulated disk or cylinder.
    pub r_max: f64,
    pub n_configs: usize,
}

/// Settings for [`simulate_fid_mc`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub axis: NvAxis,
    pub constants: PhysicalConstants,
    /// Starting radius; defaults to a multiple of max(d, (P·t_max)^{1/3}).
    pub r_start: Option<f64>,
    pub max_doublings: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { axis: NvAxis::default(), constants: PhysicalConstants::default(), r_start: None, max_doublings: 6 }
    }
}

struct ConfigSample {
    deer: Vec<f64>,
    echo: Vec<f64>,
}

fn sample_config(bath: &BathParams, ts: &[f64], radius: f64, opts: &McOptions, seed: u64, index: u64) -> ConfigSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let sigma = bath.density_internal();
    let (volume, height) = match bath.dim {
        Dimensionality::Plane => (PI * radius * radius, 0.0),
        Dimensionality::HalfSpace => (PI * radius * radius * radius, radius),
    };
    let mean = sigma * volume;
    let count = if mean > 0.0 { Poisson::new(mean).map(|p| p.sample(&mut rng) as usize).unwrap_or(0) } else { 0 };
    let g = bath.gamma_internal();
    let mut deer = vec![1.0; ts.len()];
    let mut echo = vec![1.0; ts.len()];
    for _ in 0..count {
        let rho = radius * rng.random::<f64>().sqrt();
        let phi = TWO_PI * rng.random::<f64>();
        let z = bath.depth_nm + height * rng.random::<f64>();
        let flipped = rng.random::<f64>() < bath.flip_fraction;
        let r = [rho * phi.cos(), rho * phi.sin(), z];
        let v = crate::physics::dipolar_coupling(&opts.axis, r, &opts.constants).unwrap_or(0.0);
        for (j, &t) in ts.iter().enumerate() {
            let p = KernelParams { v_dd: v, gamma_e1: g, gamma_e2: 0.0, t };
            let fe = kernels::f_echo(&p);
            echo[j] *= fe;
            deer[j] *= if flipped { kernels::f_deer(&p) } else { fe };
        }
    }
    ConfigSample { deer, echo }
}

/// Ratio of configuration-averaged DEER and echo products, ⟨Π f_DEER⟩/⟨Π f_Echo⟩,
/// with delta-method standard errors. The simulated region grows until the
/// analytic bound on the truncation bias is below 0.1 standard errors.
pub fn simulate_fid_mc(bath: &BathParams, ts: &[f64], n_configs: usize, seed: u64, opts: &McOptions) -> Result<McCurve> {
    if n_configs < 100 {
        return Err(Error::InvalidInput(format!("need at least 100 configurations, got {n_configs}")));
    }
    if ts.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidInput("times must be finite and >= 0".into()));
    }
    let p = opts.constants.dipolar_prefactor();
    let t_max = ts.iter().cloned().fold(0.0, f64::max);
    let r_c = (2.0 * p * t_max).cbrt();
    let mut radius = opts.r_start.unwrap_or(4.0 * bath.depth_nm.max(r_c));
    let sigma = bath.density_internal() * bath.flip_fraction.max(1e-300);
    for _ in 0..=opts.max_doublings {
        let samples: Vec<ConfigSample> =
            (0..n_configs as u64).into_par_iter().map(|i| sample_config(bath, ts, radius, opts, seed, i)).collect();
        let n = n_configs as f64;
        let mut f = Vec::with_capacity(ts.len());
        let mut se = Vec::with_capacity(ts.len());
        let mut ok = true;
        for (j, &t) in ts.iter().enumerate() {
            let (mut md, mut me) = (0.0, 0.0);
            for s in &samples {
                md += s.deer[j];
                me += s.echo[j];
            }
            md /= n;
            me /= n;
            let (mut vd, mut ve, mut cv) = (0.0, 0.0, 0.0);
            for s in &samples {
                let (a, b) = (s.deer[j] - md, s.echo[j] - me);
                vd += a * a;
                ve += b * b;
                cv += a * b;
            }
            let denom = n - 1.0;
            let (vd, ve, cv) = (vd / denom, ve / denom, cv / denom);
            let ratio = md / me;
            let rel_var = vd / (md * md) + ve / (me * me) - 2.0 * cv / (md * me);
            let stderr = if md == 0.0 { (vd / n).sqrt() / me.abs() } else { ratio.abs() * (rel_var.max(0.0) / n).sqrt() };
            // each of ⟨Π f_DEER⟩ and ⟨Π f_Echo⟩ misses at most σ·∫_{r>R}V²t²/8
            let tail = match bath.dim {
                Dimensionality::Plane => PI * p * p * t * t / (4.0 * radius.powi(4)),
                Dimensionality::HalfSpace => PI * p * p * t * t / (3.0 * radius.powi(3)),
            };
            let bias = ratio.abs() * 2.0 * sigma * tail;
            if stderr > 0.0 && bias > 0.1 * stderr {
                ok = false;
            }
            f.push(ratio);
            se.push(stderr);
        }
        if ok {
            return Ok(McCurve { t: ts.to_vec(), f, stderr: se, r_max: radius, n_configs });
        }
        radius *= 2.0;
    }
    Err(Error::Truncation(format!("truncation bias still above 0.1 standard errors at radius {radius} nm")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_time_and_sign() {
        let w = BathKernelIntegral::default();
        assert_eq!(w.w(0.0, 5.0, 0.0, Dimensionality::Plane).unwrap(), 0.0);
        for &t in &[0.05, 1.0, 20.0] {
            for &g in &[0.0, 0.1, 3.0] {
                assert!(w.w(g, 5.0, t, Dimensionality::Plane).unwrap() < 0.0);
            }
        }
    }

    #[test]
    fn self_similarity_in_depth() {
        let w = BathKernelIntegral::default();
        for &t in &[0.02, 0.5, 3.0] {
            let a = w.w(0.0, 4.0, t, Dimensionality::Plane).unwrap();
            let b = w.w(0.0, 8.0, 8.0 * t, Dimensionality::Plane).unwrap();
            assert!((b / a - 4.0).abs() < 1e-4, "t={t}: {}", b / a);
        }
    }

    #[test]
    fn short_time_quadratic_limit() {
        // W → −(t²/8)∫V² dA with ∫V² dA = P²π∫(1−3c²)²… evaluated via axis along the normal:
        // ∫ (1−3z²/r²)² / r⁶ 2πρ dρ = (2π/d⁴)·(1/4 − 6/6 + 9/8) = (2π/d⁴)·(3/8)
        let cfg = WConfig { axis: NvAxis::normal(), ..WConfig::default() };
        let w = BathKernelIntegral::new(cfg);
        let p = cfg.constants.dipolar_prefactor();
        let d = 5.0f64;
        let t = 1e-4;
        let expect = -(t * t / 8.0) * p * p * 2.0 * PI * 0.375 / d.powi(4);
        let got = w.w(0.0, d, t, Dimensionality::Plane).unwrap();
        assert!((got / expect - 1.0).abs() < 1e-6, "{got} {expect}");
    }

    #[test]
    fn memo_reuses_values() {
        let w = BathKernelIntegral::default();
        let a = w.w(0.05, 4.0, 1.0, Dimensionality::Plane).unwrap();
        let n = w.memo_len();
        let b = w.w(0.05, 4.0 + 1e-12, 1.0, Dimensionality::Plane).unwrap();
        assert_eq!(a, b);
        assert_eq!(n, w.memo_len());
    }

    #[test]
    fn fid_trivial_cases() {
        let w = BathKernelIntegral::default();
        let b0 = BathParams::plane(0.0, 0.0, 5.0).unwrap();
        assert_eq!(fid(&w, &b0, 3.0).unwrap(), 1.0);
        let full = BathParams::plane(2000.0, 0.0, 5.0).unwrap();
        let half = BathParams { flip_fraction: 0.5, ..full };
        for &t in &[0.3, 2.0, 9.0] {
            let a = fid(&w, &full, t).unwrap().ln();
            let b = fid(&w, &half, t).unwrap().ln();
            assert!((b / a - 0.5).abs() < 1e-10);
        }
    }

    #[test]
    fn double_log_examples() {
        let c = DecayCurve::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![(-1.0f64).exp(), 0.5, 1.02, 0.3, 0.2], None).unwrap();
        let dl = double_log(&c).unwrap();
        assert_eq!(dl.dropped, 1);
        assert!(dl.curve.y()[0].abs() < 1e-15);
        let ts: Vec<f64> = (1..=8).map(|k| 0.1 * k as f64).collect();
        let ys: Vec<f64> = ts.iter().map(|t| (-t * t).exp()).collect();
        let dl = double_log(&DecayCurve::new(ts.clone(), ys, None).unwrap()).unwrap();
        for i in 1..ts.len() {
            let slope = (dl.curve.y()[i] - dl.curve.y()[i - 1]) / (ts[i].ln() - ts[i - 1].ln());
            assert!((slope - 2.0).abs() < 1e-9);
        }
        let few = DecayCurve::new(vec![1.0, 2.0, 3.0], vec![0.5, 0.4, 0.3], None).unwrap();
        assert!(matches!(double_log(&few), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn mc_trivial_and_deterministic() {
        let ts = [0.5, 1.0, 2.0];
        let b0 = BathParams::plane(0.0, 0.0, 5.0).unwrap();
        let mc = simulate_fid_mc(&b0, &ts, 100, 3, &McOptions::default()).unwrap();
        assert!(mc.f.iter().all(|&v| v == 1.0) && mc.stderr.iter().all(|&s| s == 0.0));
        let b = BathParams::plane(2000.0, 0.1, 5.0).unwrap();
        let a1 = simulate_fid_mc(&b, &ts, 200, 11, &McOptions::default()).unwrap();
        let a2 = simulate_fid_mc(&b, &ts, 200, 11, &McOptions::default()).unwrap();
        assert_eq!(a1, a2);
        assert!(simulate_fid_mc(&b, &ts, 50, 1, &McOptions::default()).is_err());
    }
}
