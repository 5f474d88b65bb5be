//! Fit of (σ, γ, d) to a measured averaged ratio F(t).
//!
//! σ is solved in closed form for each (γ, d); (γ, d) come from a log grid scan
//! refined by a simplex. Errors follow the squared-error propagation system, with
//! a Gauss–Newton covariance alongside.

use super::optim::{self, NmOptions};
use super::{Diagnostics, Estimate, FitResult};
use crate::bathavg::{double_log, Dimensionality, WKernel};
use crate::curve::DecayCurve;
use crate::error::{Error, Result};
use crate::physics::units;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// How σ̂ is obtained from the per-point ratios log F′ᵢ / Wᵢ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerSolve {
    /// Mean of F_p′ − log(−W) in log space: the exact stationary point of the cost.
    LogMean,
    /// Arithmetic mean of the ratios.
    ArithmeticMean,
}

/// Per-point weights of the F_p cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    Unweighted,
    /// 1/ΔF_p², requires per-point errors.
    InverseVariance,
}

/// Source of the per-point ΔF_p entering the squared-error propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaSource {
    /// Measured errors when the curve carries them, otherwise the residuals.
    Auto,
    /// Per-point residuals F_p′ − F_p of the fit.
    Residuals,
}

/// Settings of [`fit_fid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FidFitOptions {
    /// γ search range in MHz; a lower bound of 0 puts a node at γ = 0.
    pub gamma_bounds: (f64, f64),
    /// Depth search range in nm.
    pub depth_bounds: (f64, f64),
    /// Grid nodes along γ and d.
    pub grid: (usize, usize),
    pub dim: Dimensionality,
    pub flip_fraction: f64,
    pub inner: InnerSolve,
    pub weighting: Weighting,
    /// Simplex evaluation budget; 0 keeps the best grid node.
    pub max_simplex_evals: usize,
    pub delta_source: DeltaSource,
}

impl Default for FidFitOptions {
    fn default() -> Self {
        Self {
            gamma_bounds: (0.0, 1.0),
            depth_bounds: (1.0, 30.0),
            grid: (24, 24),
            dim: Dimensionality::Plane,
            flip_fraction: 1.0,
            inner: InnerSolve::LogMean,
            weighting: Weighting::Unweighted,
            max_simplex_evals: 300,
            delta_source: DeltaSource::Auto,
        }
    }
}

/// Fit result plus the transformed data it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidFit {
    pub result: FitResult,
    /// Times of the points that survived the double-log filter.
    pub t: Vec<f64>,
    pub observed_fp: Vec<f64>,
    pub fitted_fp: Vec<f64>,
    /// ΔF_p used in the error propagation.
    pub delta_fp: Vec<f64>,
}

/// σ̂ (effective, internal units) for fixed W values.
pub fn inner_sigma(fp: &[f64], w: &[f64], weights: &[f64], inner: InnerSolve) -> f64 {
    let sw: f64 = weights.iter().sum();
    match inner {
        InnerSolve::LogMean => {
            let m: f64 = fp.iter().zip(w).zip(weights).map(|((f, w), k)| k * (f - (-w).ln())).sum::<f64>() / sw;
            m.exp()
        }
        InnerSolve::ArithmeticMean => {
            // log F′ = −exp(F_p′)
            fp.iter().zip(w).zip(weights).map(|((f, w), k)| k * (-f.exp() / w)).sum::<f64>() / sw
        }
    }
}

/// Σ kᵢ (F_p′ᵢ − log σ − log(−Wᵢ))².
pub fn fid_cost(fp: &[f64], w: &[f64], weights: &[f64], sigma: f64) -> f64 {
    let ls = sigma.ln();
    fp.iter().zip(w).zip(weights).map(|((f, w), k)| k * (f - ls - (-w).ln()).powi(2)).sum()
}

struct Problem<'a, K: WKernel + ?Sized> {
    w: &'a K,
    t: Vec<f64>,
    fp: Vec<f64>,
    weights: Vec<f64>,
    opts: FidFitOptions,
}

impl<K: WKernel + ?Sized> Problem<'_, K> {
    fn w_values(&self, gamma: f64, d: f64) -> Result<Vec<f64>> {
        self.w.w_many(gamma, d, &self.t, self.opts.dim)
    }

    /// (cost, σ̂) at (γ, d); infinite cost where W is not strictly negative.
    fn profile(&self, gamma: f64, d: f64) -> Result<(f64, f64)> {
        let w = self.w_values(gamma, d)?;
        if w.iter().any(|v| !(*v < 0.0)) {
            return Ok((f64::INFINITY, f64::NAN));
        }
        let s = inner_sigma(&self.fp, &w, &self.weights, self.opts.inner);
        if !(s > 0.0 && s.is_finite()) {
            return Ok((f64::INFINITY, f64::NAN));
        }
        Ok((fid_cost(&self.fp, &w, &self.weights, s), s))
    }
}

fn log_nodes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![(lo * hi).sqrt()];
    }
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn gamma_nodes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if hi == lo {
        return vec![lo];
    }
    if lo > 0.0 {
        return log_nodes(lo, hi, n);
    }
    let mut v = vec![0.0];
    v.extend(log_nodes(hi * 1e-3, hi, n.saturating_sub(1).max(1)));
    v
}

/// ∂F_p/∂(σ, γ, d) at every time by central differences with steps 1e-4 of each
/// parameter scale; forward in γ when γ − δ would be negative.
pub fn fid_jacobian<K: WKernel + ?Sized>(
    w: &K,
    t: &[f64],
    sigma: f64,
    gamma: f64,
    d: f64,
    gamma_scale: f64,
    dim: Dimensionality,
) -> Result<DMatrix<f64>> {
    let fp = |s: f64, g: f64, dd: f64| -> Result<Vec<f64>> {
        let wv = w.w_many(g, dd, t, dim)?;
        Ok(wv.iter().map(|v| s.ln() + (-v).ln()).collect())
    };
    let mut jac = DMatrix::zeros(t.len(), 3);
    let ds = 1e-4 * sigma;
    let dg = 1e-4 * gamma.max(gamma_scale);
    let dd = 1e-4 * d;
    let cols = [
        (fp(sigma + ds, gamma, d)?, fp(sigma - ds, gamma, d)?, 2.0 * ds),
        if gamma - dg >= 0.0 {
            (fp(sigma, gamma + dg, d)?, fp(sigma, gamma - dg, d)?, 2.0 * dg)
        } else {
            (fp(sigma, gamma + dg, d)?, fp(sigma, gamma, d)?, dg)
        },
        (fp(sigma, gamma, d + dd)?, fp(sigma, gamma, d - dd)?, 2.0 * dd),
    ];
    for (k, (a, b, h)) in cols.iter().enumerate() {
        for i in 0..t.len() {
            jac[(i, k)] = (a[i] - b[i]) / h;
        }
    }
    Ok(jac)
}

fn density_out(sigma_nm: f64, dim: Dimensionality) -> f64 {
    match dim {
        Dimensionality::Plane => units::per_nm2_to_per_um2(sigma_nm),
        Dimensionality::HalfSpace => sigma_nm * 1e9,
    }
}

/// Fits (σ, γ, d) to the averaged ratio in `curve`. σ is reported in µm⁻²
/// (µm⁻³ for a half-space), γ in MHz and d in nm.
pub fn fit_fid<K: WKernel + ?Sized>(curve: &DecayCurve, w: &K, opts: &FidFitOptions) -> Result<FidFit> {
    let (g_lo, g_hi) = opts.gamma_bounds;
    let (d_lo, d_hi) = opts.depth_bounds;
    if !(g_lo.is_finite() && g_hi.is_finite() && g_lo >= 0.0 && g_hi >= g_lo && g_hi > 0.0) {
        return Err(Error::InvalidInput(format!("gamma bounds must satisfy 0 <= lo <= hi, hi > 0, got ({g_lo}, {g_hi})")));
    }
    if !(d_lo.is_finite() && d_hi.is_finite() && d_lo > 0.0 && d_hi > d_lo) {
        return Err(Error::InvalidInput(format!("depth bounds must satisfy 0 < lo < hi, got ({d_lo}, {d_hi})")));
    }
    if opts.grid.0 < 2 || opts.grid.1 < 2 {
        return Err(Error::InvalidInput("grid needs at least 2 nodes per axis".into()));
    }
    if !(opts.flip_fraction > 0.0 && opts.flip_fraction <= 1.0) {
        return Err(Error::InvalidInput("flip fraction must lie in (0, 1]".into()));
    }
    let dl = double_log(curve)?;
    let n = dl.kept.len();
    if n < 6 {
        return Err(Error::InsufficientData(format!("need 6 usable points after the double-log filter, got {n}")));
    }
    let delta_in: Option<Vec<f64>> = dl.curve.y_err().map(|e| e.to_vec());
    let weights = match opts.weighting {
        Weighting::Unweighted => vec![1.0; n],
        Weighting::InverseVariance => {
            let e = delta_in.as_ref().ok_or_else(|| Error::InvalidInput("inverse-variance weighting needs per-point errors".into()))?;
            e.iter().map(|v| 1.0 / (v * v)).collect()
        }
    };
    let prob = Problem { w, t: dl.curve.t().to_vec(), fp: dl.curve.y().to_vec(), weights, opts: *opts };
    let mut warnings = Vec::new();

    let gs = gamma_nodes(g_lo, g_hi, opts.grid.0);
    let ds = log_nodes(d_lo, d_hi, opts.grid.1);
    let nodes: Vec<(usize, usize)> = (0..gs.len()).flat_map(|i| (0..ds.len()).map(move |j| (i, j))).collect();
    let costs: Vec<f64> = nodes.par_iter().map(|&(i, j)| prob.profile(gs[i], ds[j]).map(|c| c.0)).collect::<Result<Vec<_>>>()?;
    let finite: Vec<f64> = costs.iter().copied().filter(|c| c.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::Domain("W is not negative anywhere on the search grid".into()));
    }
    let cmin = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let cmax = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if cmax - cmin < 1e-10 * cmin.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Unidentifiable("cost is flat across the (gamma, d) grid".into()));
    }
    let best = (0..costs.len()).filter(|&k| costs[k].is_finite()).min_by(|&a, &b| costs[a].total_cmp(&costs[b])).expect("finite");
    let (bi, bj) = nodes[best];

    // simplex in (u, ln d) with γ = γ_hi·u² so γ = 0 is an interior symmetric point
    let to_gamma = |u: f64| g_hi * u * u;
    let penalised = |x: &[f64]| -> f64 {
        let u = x[0].abs();
        let uc = u.clamp((g_lo / g_hi).sqrt(), 1.0);
        let lc = x[1].clamp(d_lo.ln(), d_hi.ln());
        let excess = (u - uc).powi(2) + (x[1] - lc).powi(2);
        match prob.profile(to_gamma(uc), lc.exp()) {
            Ok((c, _)) if c.is_finite() => c + 1e3 * (1.0 + c) * excess,
            _ => f64::MAX,
        }
    };
    let u0 = (gs[bi] / g_hi).sqrt();
    let u_nb = (gs[(bi + 1).min(gs.len() - 1)] / g_hi).sqrt();
    let step_u = (u_nb - u0).abs().max(0.05);
    let step_l = (d_hi / d_lo).ln() / (opts.grid.1 - 1) as f64;
    let x0 = [u0, ds[bj].ln()];
    let (x, nm_converged, iterations) = if opts.max_simplex_evals > 0 {
        let nm = optim::nelder_mead(
            penalised,
            &x0,
            &[step_u, step_l],
            NmOptions { max_evals: opts.max_simplex_evals, ftol_abs: 1e-14, ftol_rel: 1e-9, xtol: 1e-5 },
        );
        (nm.x, nm.converged, nm.evaluations)
    } else {
        (x0.to_vec(), false, 0)
    };
    let u_hat = x[0].abs().clamp((g_lo / g_hi).sqrt(), 1.0);
    let l_hat = x[1].clamp(d_lo.ln(), d_hi.ln());
    let gamma = to_gamma(u_hat);
    let d = l_hat.exp();
    let (cost, sigma) = prob.profile(gamma, d)?;
    if !cost.is_finite() {
        return Err(Error::NonConvergence("simplex ended at a point with non-negative W".into()));
    }

    // Newton-step check in the simplex coordinates, skipping components pinned at a bound.
    // A step counts as converged below 1e-3 or below 5% of the 1σ width implied by the
    // curvature with the cost scaled by its reduced value.
    let h = 1e-2;
    let c0 = penalised(&[u_hat, l_hat]);
    let s2 = c0 / (prob.t.len().saturating_sub(3).max(1)) as f64;
    let mut newton: f64 = 0.0;
    let mut step_ok = true;
    for k in 0..2 {
        let mut a = [u_hat, l_hat];
        let mut b = a;
        a[k] += h;
        b[k] -= h;
        let (ca, cb) = (penalised(&a), penalised(&b));
        let g = (ca - cb) / (2.0 * h);
        let curv = (ca - 2.0 * c0 + cb) / (h * h);
        let pinned =
            (k == 1 && ((l_hat >= d_hi.ln() && g < 0.0) || (l_hat <= d_lo.ln() && g > 0.0))) || (k == 0 && u_hat >= 1.0 && g < 0.0);
        if !pinned {
            let step = if curv > 0.0 { (g / curv).abs() } else { f64::INFINITY };
            let width = if curv > 0.0 { (2.0 * s2 / curv).sqrt() } else { 0.0 };
            newton = newton.max(step);
            step_ok &= step <= 1e-3 || step <= 0.05 * width;
        }
    }
    let gradient_norm = newton;
    let converged = (nm_converged || opts.max_simplex_evals == 0) && step_ok;

    let near = |v: f64, b: f64| (v - b).abs() <= 1e-3 * b.abs();
    if near(gamma, g_hi) {
        warnings.push(format!("boundary solution: gamma at upper bound {g_hi} MHz"));
    }
    if g_lo > 0.0 && near(gamma, g_lo) {
        warnings.push(format!("boundary solution: gamma at lower bound {g_lo} MHz"));
    }
    if near(d, d_lo) || near(d, d_hi) {
        warnings.push(format!("boundary solution: depth at bound ({d_lo}, {d_hi}) nm"));
    }

    let w_hat = prob.w_values(gamma, d)?;
    let fitted_fp: Vec<f64> = w_hat.iter().map(|v| sigma.ln() + (-v).ln()).collect();
    let residuals: Vec<f64> = prob.fp.iter().zip(&fitted_fp).map(|(a, b)| a - b).collect();
    let delta_fp = match (&delta_in, opts.delta_source) {
        (Some(e), DeltaSource::Auto) => e.clone(),
        (None, DeltaSource::Auto) => {
            warnings.push("no per-point errors: fit residuals used as delta F_p".into());
            residuals
        }
        (_, DeltaSource::Residuals) => residuals,
    };
    let jac = fid_jacobian(w, &prob.t, sigma, gamma, d, 0.1 * g_hi, opts.dim)?;
    let (prop, gn) = match optim::propagate_squared_errors(&jac, &delta_fp, &["sigma", "gamma", "depth"]) {
        Ok(p) => {
            for (name, c) in ["sigma", "gamma", "depth"].iter().zip(&p.clamped) {
                if *c {
                    warnings.push(format!("negative solved squared error for {name} clamped to 0"));
                }
            }
            let gw: Vec<f64> = delta_fp.iter().map(|e| 1.0 / (e * e)).collect();
            (p.stderr, optim::gauss_newton_stderr(&jac, &gw, 0.0, false))
        }
        Err(Error::Unidentifiable(msg)) => {
            warnings.push(msg);
            (vec![f64::INFINITY; 3], None)
        }
        Err(e) => return Err(e),
    };
    let alpha = opts.flip_fraction;
    let to_out = |s: f64| density_out(s, opts.dim) / alpha;
    let gn_at = |k: usize| gn.as_ref().map(|v| v[k]);
    let params = vec![
        ("sigma".to_string(), Estimate { value: to_out(sigma), stderr: to_out(prop[0]), gauss_newton_stderr: gn_at(0).map(to_out) }),
        ("gamma".to_string(), Estimate { value: gamma, stderr: prop[1], gauss_newton_stderr: gn_at(1) }),
        ("depth".to_string(), Estimate { value: d, stderr: prop[2], gauss_newton_stderr: gn_at(2) }),
    ];
    let model = match opts.dim {
        Dimensionality::Plane => "fid-2d",
        Dimensionality::HalfSpace => "fid-3d",
    };
    let result = FitResult {
        model: model.into(),
        params,
        residual: cost,
        diagnostics: Diagnostics { dropped_points: dl.dropped, converged, iterations, gradient_norm, warnings },
    };
    Ok(FidFit { result, t: prob.t, observed_fp: prob.fp, fitted_fp, delta_fp })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_mean_is_stationary_point() {
        let fp = [0.3, -0.2, 1.1, 0.7, 0.05];
        let w = [-2.0, -0.7, -5.0, -3.3, -1.2];
        let k = [1.0, 2.0, 0.5, 1.0, 3.0];
        let s = inner_sigma(&fp, &w, &k, InnerSolve::LogMean);
        let h = 1e-6 * s;
        let d = (fid_cost(&fp, &w, &k, s + h) - fid_cost(&fp, &w, &k, s - h)) / (2.0 * h);
        assert!(d.abs() < 1e-6, "{d}");
        // the arithmetic mean is not stationary for scattered ratios
        let sa = inner_sigma(&fp, &w, &k, InnerSolve::ArithmeticMean);
        let da = (fid_cost(&fp, &w, &k, sa + h) - fid_cost(&fp, &w, &k, sa - h)) / (2.0 * h);
        assert!(da.abs() > 1e-3);
    }

    #[test]
    fn inner_solves_agree_on_consistent_data() {
        let w = [-2.0, -0.7, -5.0, -3.3];
        let s = 0.37;
        let fp: Vec<f64> = w.iter().map(|w| (s * -w as f64).ln()).collect();
        for inner in [InnerSolve::LogMean, InnerSolve::ArithmeticMean] {
            let got = inner_sigma(&fp, &w, &[1.0; 4], inner);
            assert!((got - s).abs() < 1e-12 * s);
        }
    }

    #[test]
    fn gamma_grid_has_zero_node() {
        let g = gamma_nodes(0.0, 2.0, 5);
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 2e-3).abs() < 1e-15 && (g[4] - 2.0).abs() < 1e-12);
    }
}
