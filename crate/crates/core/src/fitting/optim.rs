//! Least-squares and derivative-free minimisers shared by the fitters.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Settings for [`levenberg_marquardt`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop when the relative cost decrease of an accepted step is below this.
    pub ftol: f64,
    /// Stop when every relative parameter change is below this.
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iter: 500, ftol: 1e-15, xtol: 1e-13 }
    }
}

/// Outcome of a least-squares minimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Σ r².
    pub cost: f64,
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    /// A stopping tolerance was met before the iteration limit.
    pub converged: bool,
}

impl LmOutcome {
    /// Largest |∂cost/∂x_k|·scale_k over parameters that are not pinned
    /// against a bound by the gradient.
    pub fn scaled_gradient(&self, lower: &[f64], upper: &[f64], scale: &[f64]) -> f64 {
        let r = DVector::from_column_slice(&self.residuals);
        let g = 2.0 * self.jacobian.transpose() * r;
        let mut worst: f64 = 0.0;
        for k in 0..self.x.len() {
            let at_lo = self.x[k] <= lower[k] && g[k] > 0.0;
            let at_hi = self.x[k] >= upper[k] && g[k] < 0.0;
            if !(at_lo || at_hi) {
                worst = worst.max(g[k].abs() * scale[k]);
            }
        }
        worst
    }
}

/// Central-difference Jacobian of `f` at `x`, one-sided next to a bound.
pub fn numeric_jacobian<F>(f: &F, x: &[f64], r0: &[f64], lower: &[f64], upper: &[f64], scale: &[f64]) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = r0.len();
    let mut jac = DMatrix::zeros(n, x.len());
    let mut xp = x.to_vec();
    for k in 0..x.len() {
        let h = 1e-6 * x[k].abs().max(scale[k]);
        let (lo, hi) = (x[k] - h, x[k] + h);
        let col: Vec<f64> = if lo >= lower[k] && hi <= upper[k] {
            xp[k] = hi;
            let a = f(&xp)?;
            xp[k] = lo;
            let b = f(&xp)?;
            a.iter().zip(&b).map(|(a, b)| (a - b) / (2.0 * h)).collect()
        } else if hi <= upper[k] {
            xp[k] = hi;
            let a = f(&xp)?;
            a.iter().zip(r0).map(|(a, b)| (a - b) / h).collect()
        } else {
            xp[k] = lo;
            let b = f(&xp)?;
            r0.iter().zip(&b).map(|(a, b)| (a - b) / h).collect()
        };
        xp[k] = x[k];
        for i in 0..n {
            jac[(i, k)] = col[i];
        }
    }
    Ok(jac)
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Box-constrained Levenberg–Marquardt on the residual vector `f(x)`.
/// `scale` gives a typical magnitude per parameter for finite-difference steps.
pub fn levenberg_marquardt<F>(f: F, x0: &[f64], lower: &[f64], upper: &[f64], scale: &[f64], opts: LmOptions) -> Result<LmOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let p = x0.len();
    if lower.len() != p || upper.len() != p || scale.len() != p {
        return Err(Error::InvalidInput("bound and scale vectors must match the parameter count".into()));
    }
    let mut x: Vec<f64> = x0.iter().enumerate().map(|(k, v)| v.clamp(lower[k], upper[k])).collect();
    let mut r = f(&x)?;
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("model is not finite at the starting point".into()));
    }
    let mut cost = sum_sq(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = numeric_jacobian(&f, &x, &r, lower, upper, scale)?;
    while iterations < opts.max_iter {
        iterations += 1;
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        if g.amax() == 0.0 || cost == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for k in 0..p {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12 * (1.0 + jtj.diagonal().amax()));
            }
            let Some(step) = a.clone().cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = (0..p).map(|k| (x[k] + step[k]).clamp(lower[k], upper[k])).collect();
            let rt = match f(&trial) {
                Ok(v) if v.iter().all(|e| e.is_finite()) => v,
                _ => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let ct = sum_sq(&rt);
            if ct < cost {
                let dx_small = (0..p).all(|k| (trial[k] - x[k]).abs() <= opts.xtol * (x[k].abs() + opts.xtol * scale[k]).max(1e-300));
                let df_small = cost - ct <= opts.ftol * cost;
                x = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if dx_small || df_small {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !accepted {
            // no downhill step at any damping: a stationary point to working precision
            converged = true;
            break;
        }
        jac = numeric_jacobian(&f, &x, &r, lower, upper, scale)?;
        if converged {
            break;
        }
    }
    Ok(LmOutcome { x, residuals: r, cost, jacobian: jac, iterations, converged })
}

/// Settings for [`nelder_mead`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmOptions {
    pub max_evals: usize,
    /// Absolute spread of vertex costs at which to stop, added to `ftol_rel`·|f_best|.
    pub ftol_abs: f64,
    pub ftol_rel: f64,
    /// Largest vertex distance from the best vertex at which to stop.
    pub xtol: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self { max_evals: 400, ftol_abs: 1e-14, ftol_rel: 1e-10, xtol: 1e-6 }
    }
}

/// Result of [`nelder_mead`].
#[derive(Debug, Clone, PartialEq)]
pub struct NmOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Downhill simplex minimisation from `x0` with initial edge lengths `step`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], step: &[f64], opts: NmOptions) -> NmOutcome {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for k in 0..n {
        let mut v = x0.to_vec();
        v[k] += step[k];
        let fv = f(&v);
        simplex.push((v, fv));
    }
    let mut evals = n + 1;
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut converged = false;
    while evals < opts.max_evals {
        order(&mut simplex);
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = simplex[1..]
            .iter()
            .map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if worst - best <= opts.ftol_abs + opts.ftol_rel * best.abs() && spread <= opts.xtol {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|k| simplex[..n].iter().map(|(v, _)| v[k]).sum::<f64>() / n as f64).collect();
        let along = |c: f64, w: &[f64]| -> Vec<f64> { (0..n).map(|k| centroid[k] + c * (w[k] - centroid[k])).collect() };
        let xr = along(-1.0, &simplex[n].0);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-2.0, &simplex[n].0);
            let fe = f(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(-0.5, &simplex[n].0);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5, &simplex[n].0);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let shrunk: Vec<f64> = (0..n).map(|k| x_best[k] + 0.5 * (v.0[k] - x_best[k])).collect();
                    let fs = f(&shrunk);
                    *v = (shrunk, fs);
                }
                evals += n;
            }
        }
    }
    order(&mut simplex);
    let (x, value) = simplex.swap_remove(0);
    NmOutcome { x, value, evaluations: evals, converged }
}

/// Squared-error propagation: solves (AᵀA)⁻¹Aᵀb with A = J∘J (squared partials)
/// and b = ΔF² for the squared parameter errors.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedErrors {
    /// Solved squared errors before clamping.
    pub squares: Vec<f64>,
    /// Square roots of the clamped squares.
    pub stderr: Vec<f64>,
    /// Parameters whose solved square was negative and clamped to zero.
    pub clamped: Vec<bool>,
}

/// Relative singular value of the normal matrix below which the squared-partials
/// system is rank deficient; the test runs on column-normalised partials.
pub const RANK_TOL: f64 = 1e-12;

pub fn propagate_squared_errors(jac: &DMatrix<f64>, delta: &[f64], names: &[&str]) -> Result<PropagatedErrors> {
    let (n, p) = jac.shape();
    if delta.len() != n || names.len() != p {
        return Err(Error::InvalidInput("Jacobian, error vector and names disagree in size".into()));
    }
    if n <= p {
        return Err(Error::InsufficientData(format!("error propagation needs more than {p} points, got {n}")));
    }
    let a = jac.map(|v| v * v);
    let b = DVector::from_iterator(n, delta.iter().map(|v| v * v));
    // column scaling keeps the rank test independent of parameter units
    let norms: Vec<f64> = (0..p).map(|k| a.column(k).norm()).collect();
    if let Some(k) = norms.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Unidentifiable(format!("F_p does not depend on {}", names[k])));
    }
    let mut an = a.clone();
    for k in 0..p {
        an.column_mut(k).scale_mut(1.0 / norms[k]);
    }
    let svd = an.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let (kmin, smin) = svd.singular_values.argmin();
    if smin <= RANK_TOL.sqrt() * smax {
        let v_t = svd.v_t.as_ref().expect("requested V");
        let dir: Vec<String> = (0..p).map(|k| format!("{:+.3}·{}", v_t[(kmin, k)], names[k])).collect();
        return Err(Error::Unidentifiable(format!("squared-partials matrix is rank deficient along {}", dir.join(" "))));
    }
    let sol_n = svd.solve(&b, 0.0).map_err(|e| Error::Unidentifiable(e.to_string()))?;
    let sol = DVector::from_iterator(p, (0..p).map(|k| sol_n[k] / norms[k]));
    let squares: Vec<f64> = sol.iter().copied().collect();
    let clamped: Vec<bool> = squares.iter().map(|s| *s < 0.0).collect();
    let stderr = squares.iter().map(|s| s.max(0.0).sqrt()).collect();
    Ok(PropagatedErrors { squares, stderr, clamped })
}

/// Standard errors from (JᵀWJ)⁻¹, scaled by the reduced χ² when `scale_by_residual`.
pub fn gauss_newton_stderr(jac: &DMatrix<f64>, weights: &[f64], cost: f64, scale_by_residual: bool) -> Option<Vec<f64>> {
    let (n, p) = jac.shape();
    if n <= p {
        return None;
    }
    let mut jw = jac.clone();
    for i in 0..n {
        let s = weights[i].sqrt();
        for k in 0..p {
            jw[(i, k)] *= s;
        }
    }
    let cov = (jw.transpose() * &jw).try_inverse()?;
    let s2 = if scale_by_residual { cost / (n - p) as f64 } else { 1.0 };
    Some((0..p).map(|k| (cov[(k, k)] * s2).max(0.0).sqrt()).collect())
}

/// Pearson correlation matrix from the Gauss–Newton normal matrix.
pub fn correlation(jac: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let cov = (jac.transpose() * jac).try_inverse()?;
    let p = cov.nrows();
    Some(DMatrix::from_fn(p, p, |i, j| cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).abs().sqrt()))
}

/// Frequency (cycles per unit t) of the largest peak of the least-squares
/// periodogram of `y` after removing its mean, and the ratio of that peak to
/// the median power.
pub fn dominant_frequency(t: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = t.len();
    if n < 8 {
        return None;
    }
    let span = t[n - 1] - t[0];
    let mean = y.iter().sum::<f64>() / n as f64;
    let dt_min = t.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let f_hi = 0.5 / dt_min;
    let f_lo = 0.5 / span;
    let m = (8.0 * f_hi / f_lo).ceil().min(200_000.0) as usize;
    let mut best = (0.0, 0.0);
    let mut powers = Vec::with_capacity(m);
    for j in 0..m {
        let f = f_lo + (f_hi - f_lo) * j as f64 / (m - 1) as f64;
        let w = crate::physics::TWO_PI * f;
        let (mut sc, mut ss, mut cc, mut s2, mut cs) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let (s, c) = (w * t[i]).sin_cos();
            let v = y[i] - mean;
            sc += v * c;
            ss += v * s;
            cc += c * c;
            s2 += s * s;
            cs += c * s;
        }
        // projection onto span{cos, sin}
        let det = cc * s2 - cs * cs;
        let pw = if det.abs() > 1e-12 { (s2 * sc * sc - 2.0 * cs * sc * ss + cc * ss * ss) / det } else { 0.0 };
        powers.push(pw);
        if pw > best.1 {
            best = (f, pw);
        }
    }
    powers.sort_by(f64::total_cmp);
    let median = powers[powers.len() / 2].max(1e-300);
    Some((best.0, best.1 / median))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lm_recovers_exponential() {
        let t: Vec<f64> = (0..30).map(|i| i as f64 * 0.2).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.5 * (-t / 1.7).exp() + 0.3).collect();
        let f = |x: &[f64]| Ok(t.iter().zip(&y).map(|(t, y)| x[0] * (-t / x[1]).exp() + x[2] - y).collect());
        let out =
            levenberg_marquardt(f, &[1.0, 1.0, 0.0], &[0.0, 1e-3, -10.0], &[10.0, 100.0, 10.0], &[1.0, 1.0, 1.0], LmOptions::default())
                .unwrap();
        assert!(out.converged);
        for (a, b) in out.x.iter().zip([2.5, 1.7, 0.3]) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let out = nelder_mead(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[0.5, 0.5],
            NmOptions { max_evals: 5000, xtol: 1e-9, ftol_abs: 1e-20, ftol_rel: 0.0 },
        );
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn squared_error_system_matches_elimination() {
        // 4 points, 2 parameters, solved by hand through the 2×2 normal equations
        let j: DMatrix<f64> = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 0.5, 1.0, 2.0, 0.1, 1.5, 3.0]);
        let delta = [0.3, 0.2, 0.4, 0.5];
        let a: Vec<[f64; 2]> = (0..4).map(|i| [j[(i, 0)].powi(2), j[(i, 1)].powi(2)]).collect();
        let b: Vec<f64> = delta.iter().map(|d| d * d).collect();
        let (mut s00, mut s01, mut s11, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..4 {
            s00 += a[i][0] * a[i][0];
            s01 += a[i][0] * a[i][1];
            s11 += a[i][1] * a[i][1];
            r0 += a[i][0] * b[i];
            r1 += a[i][1] * b[i];
        }
        let det = s00 * s11 - s01 * s01;
        let x0 = (r0 * s11 - r1 * s01) / det;
        let x1 = (s00 * r1 - s01 * r0) / det;
        let out = propagate_squared_errors(&j, &delta, &["a", "b"]).unwrap();
        assert!((out.squares[0] - x0).abs() < 1e-12 && (out.squares[1] - x1).abs() < 1e-12);
        // scaling every squared error by 2 doubles every solved square
        let d2: Vec<f64> = delta.iter().map(|d| d * 2f64.sqrt()).collect();
        let out2 = propagate_squared_errors(&j, &d2, &["a", "b"]).unwrap();
        for k in 0..2 {
            assert!((out2.squares[k] - 2.0 * out.squares[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficiency_names_direction() {
        let j = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 0.5, 0.5]);
        match propagate_squared_errors(&j, &[0.1; 4], &["x", "y"]) {
            Err(Error::Unidentifiable(msg)) => assert!(msg.contains('x') && msg.contains('y')),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn periodogram_finds_tone() {
        let t: Vec<f64> = (0..200).map(|i| i as f64 * 0.05 + 0.001 * (i % 3) as f64).collect();
        let y: Vec<f64> = t.iter().map(|t| (crate::physics::TWO_PI * 1.3 * t + 0.4).cos()).collect();
        let (f, snr) = dominant_frequency(&t, &y).unwrap();
        assert!((f - 1.3).abs() < 0.02, "{f}");
        assert!(snr > 10.0);
    }
}
