//! nth-nearest-neighbour distances between an NV and implanted spins.
//!
//! Spins are uniform laterally and Gaussian in depth; the depth range is taken
//! as the full line. All lengths are in nm and densities in nm⁻² (nm⁻³ for
//! the uniform volume case).

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{PI, SQRT_2};

/// Gaussian implantation profile with an areal dose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImplantProfile {
    mean_depth: f64,
    depth_sigma: f64,
    dose: f64,
}

impl ImplantProfile {
    /// `dose` in nm⁻².
    pub fn new(mean_depth_nm: f64, depth_sigma_nm: f64, dose_nm2: f64) -> Result<Self> {
        if !(depth_sigma_nm.is_finite() && depth_sigma_nm > 0.0) {
            return Err(Error::InvalidInput(format!("depth sigma must be > 0, got {depth_sigma_nm}")));
        }
        if !(dose_nm2.is_finite() && dose_nm2 > 0.0) {
            return Err(Error::InvalidInput(format!("dose must be > 0, got {dose_nm2}")));
        }
        if !mean_depth_nm.is_finite() {
            return Err(Error::InvalidInput("mean depth must be finite".into()));
        }
        Ok(Self { mean_depth: mean_depth_nm, depth_sigma: depth_sigma_nm, dose: dose_nm2 })
    }

    pub fn from_per_um2(mean_depth_nm: f64, depth_sigma_nm: f64, dose_um2: f64) -> Result<Self> {
        Self::new(mean_depth_nm, depth_sigma_nm, crate::physics::units::per_um2_to_per_nm2(dose_um2))
    }

    pub fn from_per_cm2(mean_depth_nm: f64, depth_sigma_nm: f64, dose_cm2: f64) -> Result<Self> {
        Self::from_per_um2(mean_depth_nm, depth_sigma_nm, crate::physics::units::per_cm2_to_per_um2(dose_cm2))
    }

    pub fn mean_depth(&self) -> f64 {
        self.mean_depth
    }
    pub fn depth_sigma(&self) -> f64 {
        self.depth_sigma
    }
    /// nm⁻².
    pub fn dose(&self) -> f64 {
        self.dose
    }

    /// The full-line depth approximation needs μ > 2σ_z.
    pub fn full_line_valid(&self) -> bool {
        self.mean_depth > 2.0 * self.depth_sigma
    }

    pub fn warnings(&self) -> Vec<String> {
        if self.full_line_valid() {
            Vec::new()
        } else {
            vec![format!(
                "mean depth {} nm is not above 2 sigma_z = {} nm; the full-line depth approximation is poor",
                self.mean_depth,
                2.0 * self.depth_sigma
            )]
        }
    }
}

/// f(r|z′): the spin density integrated over the sphere of radius r around the
/// NV at depth z′, per unit areal dose.
pub fn shell_density(r: f64, z_nv: f64, p: &ImplantProfile) -> f64 {
    let delta = p.mean_depth - z_nv;
    let s = SQRT_2 * p.depth_sigma;
    PI * r * (libm::erf((r + delta) / s) + libm::erf((r - delta) / s))
}

/// Λ(r|z′) = ∫₀^r f(r′|z′) dr′ in closed form.
pub fn cumulative_shell(r: f64, z_nv: f64, p: &ImplantProfile) -> f64 {
    let delta = p.mean_depth - z_nv;
    let sg = p.depth_sigma;
    let s = SQRT_2 * sg;
    let (a, b) = (r + delta, r - delta);
    let g = (PI / 2.0).sqrt() * sg * ((-a * a / (2.0 * sg * sg)).exp() * b + (-b * b / (2.0 * sg * sg)).exp() * a);
    let e = libm::erf(a / s) + libm::erf(b / s);
    // subtract the r = 0 value, which is zero analytically, to cancel round-off
    g + PI / 2.0 * (r * r - delta * delta - sg * sg) * e
}

/// Spatial model of the spin field seen from the NV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SpinField {
    /// Gaussian depth profile, NV at depth z′.
    Gaussian { profile: ImplantProfile, z_nv: f64 },
    /// Uniform plane containing the NV, density in nm⁻².
    Uniform2d { density: f64 },
    /// Uniform volume, density in nm⁻³.
    Uniform3d { density: f64 },
}

impl SpinField {
    fn density(&self) -> f64 {
        match self {
            SpinField::Gaussian { profile, .. } => profile.dose,
            SpinField::Uniform2d { density } | SpinField::Uniform3d { density } => *density,
        }
    }

    /// f(r).
    pub fn shell(&self, r: f64) -> f64 {
        match self {
            SpinField::Gaussian { profile, z_nv } => shell_density(r, *z_nv, profile),
            SpinField::Uniform2d { .. } => 2.0 * PI * r,
            SpinField::Uniform3d { .. } => 4.0 * PI * r * r,
        }
    }

    /// Λ(r).
    pub fn cumulative(&self, r: f64) -> f64 {
        match self {
            SpinField::Gaussian { profile, z_nv } => cumulative_shell(r, *z_nv, profile),
            SpinField::Uniform2d { .. } => PI * r * r,
            SpinField::Uniform3d { .. } => 4.0 * PI * r * r * r / 3.0,
        }
    }

    /// Expected number of spins within r.
    pub fn expected_count(&self, r: f64) -> f64 {
        self.density() * self.cumulative(r)
    }

    fn validate(&self) -> Result<()> {
        let q = self.density();
        if !(q.is_finite() && q > 0.0) {
            return Err(Error::InvalidInput(format!("density must be > 0, got {q}")));
        }
        Ok(())
    }
}

/// W_n(r) = (qΛ)^{n−1}/(n−1)! · q e^{−qΛ} f, evaluated in log space.
pub fn nn_density(n: usize, r: f64, field: &SpinField) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("neighbour order starts at 1".into()));
    }
    field.validate()?;
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::Domain(format!("distance must be >= 0, got {r}")));
    }
    let f = field.shell(r);
    if f <= 0.0 {
        return Ok(0.0);
    }
    let q = field.density();
    let m = q * field.cumulative(r).max(0.0);
    if m == 0.0 {
        return Ok(if n == 1 { q * f } else { 0.0 });
    }
    let ln = (n - 1) as f64 * m.ln() - libm::lgamma(n as f64) + q.ln() - m + f.ln();
    Ok(ln.exp())
}

/// Radius beyond which the n-th neighbour lies with negligible probability:
/// the expected count there exceeds n + 60.
fn outer_radius(n: usize, field: &SpinField) -> f64 {
    let target = n as f64 + 60.0 + 10.0 * (n as f64).sqrt();
    let mut r = 1.0;
    while field.expected_count(r) < target {
        r *= 1.5;
    }
    r
}

/// ∫ r^k W_n dr for k = 0, 1, 2 over [0, ∞).
fn moments(n: usize, field: &SpinField) -> Result<[f64; 3]> {
    let r_max = outer_radius(n, field);
    // break at the bulk of the distribution so the adaptive rule sees the peak
    let mut cuts = vec![0.0];
    let mut r = 1e-3 * r_max;
    while r < r_max {
        cuts.push(r);
        r *= 2.0;
    }
    cuts.push(r_max);
    let mut out = [0.0; 3];
    for k in 0..3 {
        // per-piece floor relative to the moment's natural scale r_max^k
        let opts = QuadOptions { rel_tol: 1e-12, abs_tol: 1e-16 * r_max.powi(k as i32), max_intervals: 4000 };
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            let q = integrate(|x| nn_density(n, x, field).unwrap_or(f64::NAN) * x.powi(k as i32), w[0], w[1], opts)?;
            acc += q.value;
        }
        out[k] = acc;
    }
    Ok(out)
}

/// Mean, variance and normalisation of the n-th neighbour distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NnMoments {
    pub mean: f64,
    pub variance: f64,
    /// ∫ W_n dr.
    pub norm: f64,
}

impl NnMoments {
    pub fn std(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// l_n and V_n for one NV position by quadrature of r·W_n and r²·W_n.
pub fn nn_moments(n: usize, field: &SpinField) -> Result<NnMoments> {
    if n == 0 {
        return Err(Error::InvalidInput("neighbour order starts at 1".into()));
    }
    field.validate()?;
    let [m0, m1, m2] = moments(n, field)?;
    Ok(NnMoments { mean: m1, variance: m2 - m1 * m1, norm: m0 })
}

/// Nodes per σ_z of the NV-depth average; Gauss–Hermite-free Simpson on μ ± 6σ_z.
const AVERAGE_INTERVALS: usize = 240;

/// l_n and V_n averaged over NV depths drawn from the implant profile,
/// combined with the law of total variance.
pub fn nn_mean_var_averaged(n: usize, p: &ImplantProfile) -> Result<NnMoments> {
    if n == 0 {
        return Err(Error::InvalidInput("neighbour order starts at 1".into()));
    }
    let (mu, sg) = (p.mean_depth, p.depth_sigma);
    let lo = mu - 6.0 * sg;
    let h = 12.0 * sg / AVERAGE_INTERVALS as f64;
    let nodes: Vec<(f64, f64)> = (0..=AVERAGE_INTERVALS)
        .map(|i| {
            let w = if i == 0 || i == AVERAGE_INTERVALS {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (lo + i as f64 * h, w * h / 3.0)
        })
        .collect();
    let parts: Vec<(f64, f64, f64, f64)> = nodes
        .par_iter()
        .map(|&(z, w)| {
            let g = (-(z - mu).powi(2) / (2.0 * sg * sg)).exp() / ((2.0 * PI).sqrt() * sg);
            let m = nn_moments(n, &SpinField::Gaussian { profile: *p, z_nv: z })?;
            Ok((w * g, w * g * m.mean, w * g * m.mean * m.mean, w * g * m.variance))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut wsum, mut l, mut l2, mut v) = (0.0, 0.0, 0.0, 0.0);
    for (a, b, c, d) in parts {
        wsum += a;
        l += b;
        l2 += c;
        v += d;
    }
    // renormalise by the captured Gaussian mass (1 − 2e-9 over ±6σ)
    let (l, l2, v) = (l / wsum, l2 / wsum, v / wsum);
    Ok(NnMoments { mean: l, variance: v + l2 - l * l, norm: 1.0 })
}

/// l_n = Γ(n+½)/((n−1)!√π√q) for a uniform plane.
pub fn uniform_2d_mean(n: usize, q: f64) -> f64 {
    (libm::lgamma(n as f64 + 0.5) - libm::lgamma(n as f64)).exp() / (PI.sqrt() * q.sqrt())
}

/// ⟨r²⟩ − l_n² = n/(πq) − l_n² for a uniform plane.
pub fn uniform_2d_variance(n: usize, q: f64) -> f64 {
    n as f64 / (PI * q) - uniform_2d_mean(n, q).powi(2)
}

/// l_n = (3/4π)^{1/3} Γ(n+⅓)/((n−1)! q^{1/3}) for a uniform volume.
pub fn uniform_3d_mean(n: usize, q: f64) -> f64 {
    (3.0 / (4.0 * PI)).cbrt() * (libm::lgamma(n as f64 + 1.0 / 3.0) - libm::lgamma(n as f64)).exp() / q.cbrt()
}

/// Where the NV sits in a Monte Carlo trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum NvDepth {
    Fixed(f64),
    /// Drawn from the implant profile in every trial.
    Averaged,
}

/// Monte Carlo estimate of the n-th neighbour distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NnMonteCarlo {
    pub mean: f64,
    pub mean_stderr: f64,
    pub variance: f64,
    pub std: f64,
    /// Delta-method standard error of the standard deviation.
    pub std_stderr: f64,
    /// Lateral box edge (nm) of the final run.
    pub box_size: f64,
    pub trials: usize,
}

const MAX_BOX_DOUBLINGS: usize = 8;

/// Draws `trials` spin fields in a lateral box around the NV and records the
/// n-th smallest distance. The box starts at 10× the largest plausible l_n and
/// doubles whenever a trial's n-th neighbour could lie outside it.
pub fn sample_nn_mc(n: usize, p: &ImplantProfile, nv: NvDepth, trials: usize, seed: u64) -> Result<NnMonteCarlo> {
    if n == 0 {
        return Err(Error::InvalidInput("neighbour order starts at 1".into()));
    }
    if trials < 1000 {
        return Err(Error::InvalidInput(format!("need at least 1000 trials, got {trials}")));
    }
    let (mu, sg, q) = (p.mean_depth, p.depth_sigma, p.dose);
    // half-edge where the n-th neighbour is inside with probability > 1 − 1e-4
    // for an NV anywhere within ±6σ_z; the uniform-plane bound is the loosest
    let worst = SpinField::Gaussian { profile: *p, z_nv: mu + 6.0 * sg };
    let mut half = 1.0;
    while poisson_cdf(n - 1, worst.expected_count(half)) > 1e-4 {
        half *= 1.25;
    }
    half = half.max(5.0 * uniform_2d_mean(n, q));
    for _ in 0..=MAX_BOX_DOUBLINGS {
        let draws: Vec<Option<f64>> = (0..trials).into_par_iter().map(|i| trial(n, mu, sg, q, nv, half, seed, i as u64)).collect();
        if draws.iter().any(|d| d.is_none()) {
            half *= 2.0;
            continue;
        }
        let v: Vec<f64> = draws.into_iter().map(|d| d.expect("checked")).collect();
        let nf = v.len() as f64;
        let mean = v.iter().sum::<f64>() / nf;
        let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
        let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
        let variance = m2 * nf / (nf - 1.0);
        let std = variance.sqrt();
        // Var(s²) ≈ (μ₄ − σ⁴)/N, then s.e.(s) = s.e.(s²)/(2s)
        let std_stderr = ((m4 - m2 * m2) / nf).max(0.0).sqrt() / (2.0 * std.max(1e-300));
        return Ok(NnMonteCarlo { mean, mean_stderr: std / nf.sqrt(), variance, std, std_stderr, box_size: 2.0 * half, trials });
    }
    Err(Error::Truncation(format!("n-th neighbour escaped the box after {MAX_BOX_DOUBLINGS} doublings")))
}

/// P(Poisson(m) ≤ k).
fn poisson_cdf(k: usize, m: f64) -> f64 {
    let mut term = (-m).exp();
    let mut acc = term;
    for j in 1..=k {
        term *= m / j as f64;
        acc += term;
    }
    acc
}

/// One trial: the n-th smallest distance, or None when it may lie outside the box.
#[allow(clippy::too_many_arguments)]
fn trial(n: usize, mu: f64, sg: f64, q: f64, nv: NvDepth, half: f64, seed: u64, index: u64) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let depth = Normal::new(mu, sg).expect("sigma > 0");
    let z_nv = match nv {
        NvDepth::Fixed(z) => z,
        NvDepth::Averaged => depth.sample(&mut rng),
    };
    let mean = q * 4.0 * half * half;
    let count = Poisson::new(mean).map(|d| d.sample(&mut rng) as usize).unwrap_or(0);
    if count < n {
        return None;
    }
    let mut best: Vec<f64> = Vec::with_capacity(n + 1);
    for _ in 0..count {
        let x = half * (2.0 * rng.random::<f64>() - 1.0);
        let y = half * (2.0 * rng.random::<f64>() - 1.0);
        let z = depth.sample(&mut rng) - z_nv;
        let d2 = x * x + y * y + z * z;
        if best.len() < n || d2 < best[n - 1] {
            let pos = best.partition_point(|v| *v < d2);
            best.insert(pos, d2);
            best.truncate(n);
        }
    }
    let r = best[n - 1].sqrt();
    // every spin within r lies inside the box laterally only if r ≤ half
    (r <= half).then_some(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample1() -> ImplantProfile {
        ImplantProfile::from_per_um2(6.76, 2.77, 2000.0).unwrap()
    }

    #[test]
    fn shell_limits() {
        let p = sample1();
        assert_eq!(shell_density(0.0, 6.76, &p), 0.0);
        assert_eq!(cumulative_shell(0.0, 6.76, &p).abs(), 0.0);
        let thin = ImplantProfile::new(5.0, 1e-9, 1e-3).unwrap();
        assert!((shell_density(3.0, 5.0, &thin) - 2.0 * PI * 3.0).abs() < 1e-12);
        // far field: slope 2πr
        let r = 500.0;
        let h = 1e-3;
        let slope = (cumulative_shell(r + h, 4.0, &p) - cumulative_shell(r - h, 4.0, &p)) / (2.0 * h);
        assert!((slope / (2.0 * PI * r) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn cumulative_matches_quadrature() {
        let p = sample1();
        for &(r, z) in &[(0.5, 6.76), (3.0, 2.0), (10.0, 16.76), (25.0, 0.0), (7.3, 9.9)] {
            let q = integrate(|x| shell_density(x, z, &p), 0.0, r, QuadOptions { rel_tol: 1e-13, ..Default::default() }).unwrap();
            let c = cumulative_shell(r, z, &p);
            assert!((c - q.value).abs() <= 1e-8 * q.value.abs().max(1e-300), "r={r} z={z}: {c} vs {}", q.value);
        }
    }

    #[test]
    fn uniform_limits_match_closed_forms() {
        let q = 3e-5;
        let f = SpinField::Uniform2d { density: q };
        for r in [10.0, 91.0, 200.0] {
            let expect = 2.0 * PI * q * r * (-PI * q * r * r).exp();
            assert!((nn_density(1, r, &f).unwrap() - expect).abs() < 1e-14 * expect.max(1e-300) + 1e-300);
        }
        assert!((uniform_2d_mean(1, 30e-6) - 91.29).abs() < 0.01);
    }

    #[test]
    fn mc_is_deterministic() {
        let p = sample1();
        let a = sample_nn_mc(2, &p, NvDepth::Averaged, 2000, 7).unwrap();
        let b = sample_nn_mc(2, &p, NvDepth::Averaged, 2000, 7).unwrap();
        assert_eq!(a, b);
    }
}
