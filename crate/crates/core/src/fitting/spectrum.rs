//! Sums of Lorentzian lines on a constant baseline.

use super::decay::{run_lm, Spec};
use super::{Estimate, FitResult};
use crate::curve::DecayCurve;
use crate::error::{Error, Result};
use serde::Serialize;

/// Ties three peaks (indices in ascending-centre order) so that the middle
/// one sits exactly halfway between the outer two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LinkedSpacing {
    pub low: usize,
    pub middle: usize,
    pub high: usize,
}

/// Settings of [`fit_lorentzians`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LorentzianOptions {
    pub n_peaks: usize,
    /// Starting centres; found by an extremum scan when absent.
    pub initial_centers: Option<Vec<f64>>,
    pub linked: Vec<LinkedSpacing>,
}

impl LorentzianOptions {
    pub fn new(n_peaks: usize) -> Self {
        Self { n_peaks, initial_centers: None, linked: Vec::new() }
    }
}

/// baseline + Σ aₖ (wₖ/2)² / ((x − cₖ)² + (wₖ/2)²) with wₖ the full width at half maximum.
/// `peaks` holds (centre, width, amplitude).
pub fn lorentzian_sum(baseline: f64, peaks: &[(f64, f64, f64)], x: f64) -> f64 {
    baseline
        + peaks
            .iter()
            .map(|&(c, w, a)| {
                let h = 0.25 * w * w;
                a * h / ((x - c).powi(2) + h)
            })
            .sum::<f64>()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Index of local extrema of `dev` in decreasing height, at least `gap` samples apart.
fn extrema(dev: &[f64], count: usize, gap: usize) -> Vec<usize> {
    let n = dev.len();
    let mut cand: Vec<usize> =
        (0..n).filter(|&i| (i == 0 || dev[i] >= dev[i - 1]) && (i + 1 == n || dev[i] >= dev[i + 1]) && dev[i] > 0.0).collect();
    cand.sort_by(|&a, &b| dev[b].total_cmp(&dev[a]));
    let mut picked: Vec<usize> = Vec::new();
    for i in cand {
        if picked.iter().all(|&p| p.abs_diff(i) >= gap) {
            picked.push(i);
            if picked.len() == count {
                break;
            }
        }
    }
    picked
}

/// Full width at half height around sample `i` of the positive deviation `dev`.
fn half_width(x: &[f64], dev: &[f64], i: usize) -> f64 {
    let half = 0.5 * dev[i];
    let mut lo = i;
    while lo > 0 && dev[lo] > half {
        lo -= 1;
    }
    let mut hi = i;
    while hi + 1 < dev.len() && dev[hi] > half {
        hi += 1;
    }
    (x[hi] - x[lo]).max(x[1] - x[0])
}

/// Least-squares sum of `n_peaks` Lorentzians. Parameters are reported as
/// `baseline`, then `center_k`, `width_k`, `amplitude_k` for k = 1.. in ascending centre.
pub fn fit_lorentzians(spectrum: &DecayCurve, opts: &LorentzianOptions) -> Result<FitResult> {
    let m = opts.n_peaks;
    if m == 0 {
        return Err(Error::InvalidInput("need at least one peak".into()));
    }
    let (x, y) = (spectrum.t(), spectrum.y());
    if x.len() < 3 * m + 2 {
        return Err(Error::InsufficientData(format!("{} samples for {m} peaks", x.len())));
    }
    let base0 = median(y);
    let dev: Vec<f64> = y.iter().map(|v| v - base0).collect();
    let hi = dev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = dev.iter().cloned().fold(f64::INFINITY, f64::min);
    let sign = if hi >= -lo { 1.0 } else { -1.0 };
    let sdev: Vec<f64> = dev.iter().map(|v| sign * v).collect();
    let step = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    let mut peaks: Vec<(f64, f64, f64)> = match &opts.initial_centers {
        Some(c) => {
            if c.len() != m {
                return Err(Error::InvalidInput(format!("{} starting centres for {m} peaks", c.len())));
            }
            c.iter()
                .map(|&c0| {
                    let i = x.partition_point(|v| *v < c0).min(x.len() - 1);
                    (c0, half_width(x, &sdev, i), dev[i])
                })
                .collect()
        }
        None => {
            let idx = extrema(&sdev, m, 3);
            if idx.len() < m {
                return Err(Error::InsufficientData(format!("found {} extrema for {m} peaks", idx.len())));
            }
            idx.iter().map(|&i| (x[i], half_width(x, &sdev, i), dev[i])).collect()
        }
    };
    peaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    for l in &opts.linked {
        if l.low >= m || l.middle >= m || l.high >= m || !(l.low < l.middle && l.middle < l.high) {
            return Err(Error::InvalidInput("linked spacing needs indices low < middle < high below n_peaks".into()));
        }
    }
    let dependent: Vec<Option<LinkedSpacing>> = (0..m).map(|k| opts.linked.iter().copied().find(|l| l.high == k)).collect();
    if opts.linked.iter().any(|l| dependent[l.low].is_some() || dependent[l.middle].is_some()) {
        return Err(Error::InvalidInput("linked spacings may not chain through a dependent peak".into()));
    }

    let xspan = x[x.len() - 1] - x[0];
    let amp = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let mut names: Vec<String> = vec!["baseline".into()];
    let mut x0 = vec![base0];
    let mut lower = vec![f64::NEG_INFINITY];
    let mut upper = vec![f64::INFINITY];
    let mut scale = vec![amp];
    // map from peak to parameter slot of its centre, None when derived
    let mut center_slot = vec![None; m];
    for (k, &(c, w, a)) in peaks.iter().enumerate() {
        if dependent[k].is_none() {
            center_slot[k] = Some(x0.len());
            names.push(format!("center_{}", k + 1));
            x0.push(c);
            lower.push(x[0] - xspan);
            upper.push(x[x.len() - 1] + xspan);
            scale.push(xspan);
        }
        names.push(format!("width_{}", k + 1));
        x0.push(w.max(step));
        lower.push(1e-3 * step);
        upper.push(4.0 * xspan);
        scale.push(xspan);
        names.push(format!("amplitude_{}", k + 1));
        x0.push(a);
        lower.push(f64::NEG_INFINITY);
        upper.push(f64::INFINITY);
        scale.push(amp);
    }
    let layout = |p: &[f64]| -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(m);
        let mut slot = 1;
        let mut centres = vec![0.0; m];
        let mut rest = Vec::with_capacity(m);
        for k in 0..m {
            if center_slot[k].is_some() {
                centres[k] = p[slot];
                slot += 1;
            }
            rest.push((p[slot], p[slot + 1]));
            slot += 2;
        }
        for k in 0..m {
            if let Some(l) = dependent[k] {
                centres[k] = 2.0 * centres[l.middle] - centres[l.low];
            }
        }
        for k in 0..m {
            out.push((centres[k], rest[k].0, rest[k].1));
        }
        out
    };
    let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let spec = Spec { model: "lorentzians", names: name_refs, x0, lower, upper, scale };
    let (mut r, out) = run_lm(spectrum, spec, |p: &[f64], xv: f64| lorentzian_sum(p[0], &layout(p), xv))?;

    // derived centres carry the error of 2·c_mid − c_low
    let cov = (out.jacobian.transpose() * &out.jacobian).try_inverse();
    let n = x.len();
    let s2 = if spectrum.y_err().is_none() { out.cost / (n - out.x.len()).max(1) as f64 } else { 1.0 };
    let fitted = layout(&out.x);
    for k in 0..m {
        if let Some(l) = dependent[k] {
            let (i, j) = (center_slot[l.middle].expect("independent"), center_slot[l.low].expect("independent"));
            let se = cov.as_ref().map(|c| (s2 * (4.0 * c[(i, i)] + c[(j, j)] - 4.0 * c[(i, j)])).max(0.0).sqrt()).unwrap_or(f64::INFINITY);
            let pos = r.params.iter().position(|(nm, _)| *nm == format!("width_{}", k + 1)).expect("width present");
            r.params.insert(pos, (format!("center_{}", k + 1), Estimate { value: fitted[k].0, stderr: se, gauss_newton_stderr: None }));
        }
    }
    for i in 0..m {
        for j in 0..i {
            let (a, b) = (fitted[i], fitted[j]);
            if (a.0 - b.0).abs() < 0.5 * a.1.abs().max(b.1.abs()) {
                r.diagnostics.warnings.push(format!("peaks {} and {} overlap and are not spectrally resolved", j + 1, i + 1));
            }
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line_exact() {
        let x: Vec<f64> = (0..200).map(|i| 500.0 + i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|&v| lorentzian_sum(1.0, &[(551.9, 4.0, -0.05)], v)).collect();
        let r = fit_lorentzians(&DecayCurve::new(x, y, None).unwrap(), &LorentzianOptions::new(1)).unwrap();
        assert!((r.value("center_1") - 551.9).abs() < 1e-6);
        assert!((r.value("width_1") - 4.0).abs() < 1e-6);
        assert!((r.value("amplitude_1") + 0.05).abs() < 1e-9);
        assert!((r.value("baseline") - 1.0).abs() < 1e-9);
    }
}
