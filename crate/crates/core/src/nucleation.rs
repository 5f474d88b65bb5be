//! Island-nucleation model of the mean ALD film thickness: hemispherical
//! islands of radius r = g·x grow freely until they fill a disk-shaped unit
//! cell of radius R_cov = 1/√(πN_d), after which growth is constrained.
//! Lengths in nm, cycles dimensionless.

use crate::error::{Error, Result};
use crate::fitting::optim::{self, LmOptions};
use crate::fitting::{Diagnostics, Estimate, FitResult};
use serde::Serialize;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NucleationModel {
    /// Nucleation density (nm⁻²).
    n_d: f64,
    /// Radial growth per cycle (nm).
    g: f64,
}

impl NucleationModel {
    pub fn new(n_d: f64, g: f64) -> Result<Self> {
        if !(n_d.is_finite() && n_d > 0.0 && g.is_finite() && g > 0.0) {
            return Err(Error::InvalidInput(format!("N_d and g must be positive, got ({n_d}, {g})")));
        }
        Ok(Self { n_d, g })
    }

    pub fn n_d(&self) -> f64 {
        self.n_d
    }
    pub fn g(&self) -> f64 {
        self.g
    }

    /// R_cov = √(1/(πN_d)).
    pub fn r_cov(&self) -> f64 {
        (1.0 / (PI * self.n_d)).sqrt()
    }

    /// Cycle count at which islands reach R_cov.
    pub fn coalescence_cycles(&self) -> f64 {
        self.r_cov() / self.g
    }

    /// Mean thickness as a function of island radius.
    pub fn thickness_at_radius(&self, r: f64) -> f64 {
        let rc = self.r_cov();
        if r <= rc {
            return 2.0 / 3.0 * self.n_d * PI * r.powi(3);
        }
        let (s, h) = split(r, rc);
        self.n_d * (PI * rc * rc * s + PI / 6.0 * (3.0 * rc * rc + h * h) * h)
    }

    /// dμ/dr; the constrained branch reaches 2πN_d R_cov² at R_cov like the
    /// hemispherical one.
    pub fn thickness_slope_at_radius(&self, r: f64) -> f64 {
        let rc = self.r_cov();
        if r <= rc {
            return 2.0 * PI * self.n_d * r * r;
        }
        let (_, h) = split(r, rc);
        // π r²  − π r s = π r h
        self.n_d * (PI / 2.0 * (rc * rc + h * h) + PI * r * h)
    }

    /// Value and slope of each branch evaluated at r = R_cov.
    pub fn branch_limits(&self) -> BranchLimits {
        let rc = self.r_cov();
        let (s, h) = split(rc, rc);
        BranchLimits {
            hemisphere_value: 2.0 / 3.0 * self.n_d * PI * rc.powi(3),
            constrained_value: self.n_d * (PI * rc * rc * s + PI / 6.0 * (3.0 * rc * rc + h * h) * h),
            hemisphere_slope: 2.0 * PI * self.n_d * rc * rc,
            constrained_slope: self.n_d * (PI / 2.0 * (rc * rc + h * h) + PI * rc * h),
        }
    }

    /// μ(x) with r = g·x.
    pub fn film_thickness(&self, cycles: f64) -> Result<f64> {
        if !(cycles.is_finite() && cycles >= 0.0) {
            return Err(Error::Domain(format!("cycle count must be >= 0, got {cycles}")));
        }
        Ok(self.thickness_at_radius(self.g * cycles))
    }

    /// dμ/dx.
    pub fn growth_per_cycle(&self, cycles: f64) -> Result<f64> {
        if !(cycles.is_finite() && cycles >= 0.0) {
            return Err(Error::Domain(format!("cycle count must be >= 0, got {cycles}")));
        }
        Ok(self.g * self.thickness_slope_at_radius(self.g * cycles))
    }
}

/// Both branches of μ(r) and dμ/dr at the branch point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchLimits {
    pub hemisphere_value: f64,
    pub constrained_value: f64,
    pub hemisphere_slope: f64,
    pub constrained_slope: f64,
}

/// s = √(r² − R²) and h = r − s, the latter in cancellation-free form.
fn split(r: f64, rc: f64) -> (f64, f64) {
    let s = ((r - rc) * (r + rc)).sqrt();
    (s, rc * rc / (r + s))
}

/// Nucleation-site density in µm⁻².
pub fn sites_per_um2(n_d_nm2: f64) -> f64 {
    n_d_nm2 * 1e6
}

/// Cycles at which the first point rises to this fraction of the linear trend
/// marks the onset of coalescence in the initial guess (μ/r = ⅔ at R_cov).
const ONSET_FRACTION: f64 = 2.0 / 3.0;
/// Points beyond this multiple of R_cov carry almost no information on N_d.
const LINEAR_REGIME: f64 = 3.0;

/// Least-squares fit of (N_d, g) to thickness-vs-cycles data, unweighted.
/// Reports R² as the extra parameter `r_squared` with zero error.
pub fn fit_nucleation(cycles: &[f64], thickness: &[f64]) -> Result<FitResult> {
    let n = cycles.len();
    if thickness.len() != n {
        return Err(Error::InvalidInput("cycles and thickness lengths differ".into()));
    }
    if n < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 points, got {n}")));
    }
    if cycles.iter().chain(thickness).any(|v| !v.is_finite()) || cycles.iter().any(|x| *x < 0.0) {
        return Err(Error::InvalidInput("cycles must be >= 0 and all values finite".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cycles[a].total_cmp(&cycles[b]));
    let (x, y): (Vec<f64>, Vec<f64>) = order.iter().map(|&i| (cycles[i], thickness[i])).unzip();
    let (a, b) = (n - 2, n - 1);
    if x[b] <= x[a] {
        return Err(Error::InvalidInput("the two largest cycle counts must differ".into()));
    }
    let g0 = ((y[b] - y[a]) / (x[b] - x[a])).max(1e-6);
    let onset = x.iter().zip(&y).find(|(x, y)| **x > 0.0 && **y >= ONSET_FRACTION * g0 * **x).map(|(x, _)| *x);
    let r0 = onset.map(|x| g0 * x).unwrap_or(g0 * x[b] / 2.0).max(1e-3);
    let n0 = 1.0 / (PI * r0 * r0);

    let resid = |p: &[f64]| -> Result<Vec<f64>> {
        let m = NucleationModel::new(p[0].exp(), p[1].exp())?;
        x.iter().zip(&y).map(|(x, y)| Ok(m.film_thickness(*x)? - y)).collect()
    };
    let inf = f64::INFINITY;
    let out = optim::levenberg_marquardt(resid, &[n0.ln(), g0.ln()], &[-inf, -inf], &[inf, inf], &[1.0, 1.0], LmOptions::default())?;
    let model = NucleationModel::new(out.x[0].exp(), out.x[1].exp())?;
    let r_cov = model.r_cov();
    if x.iter().all(|c| model.g * c > LINEAR_REGIME * r_cov) {
        return Err(Error::Unidentifiable(format!(
            "every point lies beyond {LINEAR_REGIME} R_cov in the linear regime; N_d is not determined"
        )));
    }
    let mut warnings = Vec::new();
    let before = x.iter().filter(|c| model.g * *c <= r_cov).count();
    if n < 4 || before == 0 || before == n {
        warnings.push(format!("{n} points, {before} before coalescence: the data should span both growth regimes with at least 4 points"));
    }
    let unit = vec![1.0; n];
    let se_log = optim::gauss_newton_stderr(&out.jacobian, &unit, out.cost, true).unwrap_or_else(|| vec![inf; 2]);
    let mean = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - out.cost / ss_tot } else { f64::NAN };
    let grad = out.scaled_gradient(&[-inf, -inf], &[inf, inf], &[1.0, 1.0]);
    let est = |v: f64, s: f64| Estimate { value: v, stderr: v * s, gauss_newton_stderr: None };
    Ok(FitResult {
        model: "nucleation".into(),
        params: vec![
            ("n_d".into(), est(model.n_d, se_log[0])),
            ("g".into(), est(model.g, se_log[1])),
            // R_cov ∝ N_d^{-1/2}
            ("r_cov".into(), est(r_cov, 0.5 * se_log[0])),
            ("r_squared".into(), Estimate { value: r2, stderr: 0.0, gauss_newton_stderr: None }),
        ],
        residual: out.cost,
        diagnostics: Diagnostics { dropped_points: 0, converged: out.converged, iterations: out.iterations, gradient_norm: grad, warnings },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cell_radius() {
        assert!((NucleationModel::new(1.0 / PI, 0.1).unwrap().r_cov() - 1.0).abs() < 1e-15);
        let m = NucleationModel::new(0.047, 0.04667).unwrap();
        let q = NucleationModel::new(0.047 / 4.0, 0.04667).unwrap();
        assert!((q.r_cov() - 2.0 * m.r_cov()).abs() < 1e-12);
    }

    #[test]
    fn split_at_branch_point() {
        assert_eq!(split(2.0, 2.0), (0.0, 2.0));
    }
}
