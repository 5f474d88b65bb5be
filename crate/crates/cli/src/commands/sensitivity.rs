//! sensitivity: coated-over-bare η map and the time-to-SNR summary.

use super::positive;
use crate::args::{KernelChoice, SensitivityArgs};
use crate::error::{CliError, CliResult};
use crate::io::num;
use crate::{to_value, Context, CsvOutput, Outcome, Status};
use darkspin::bathavg::{BathKernelIntegral, Dimensionality, WTable, WTableSpec};
use darkspin::sensitivity::{ratio_map, time_to_snr, RatioCell, QUOTED_HOURS, QUOTED_HOURS_DENSE_NV, RATIO_ORIENTATION};
use serde::Serialize;

/// σ_T where ln(ratio) first changes sign along increasing σ_T, interpolated in ln σ_T.
pub fn crossover(cells: &[(f64, f64)]) -> Option<f64> {
    cells.windows(2).find_map(|w| {
        let ((s0, r0), (s1, r1)) = (w[0], w[1]);
        let (l0, l1) = (r0.ln(), r1.ln());
        if l0 == 0.0 {
            return Some(s0);
        }
        if l0.signum() != l1.signum() && l1 != 0.0 {
            let f = l0 / (l0 - l1);
            return Some((s0.ln() + f * (s1.ln() - s0.ln())).exp());
        }
        (l1 == 0.0).then_some(s1)
    })
}

#[derive(Serialize)]
struct Crossover {
    d_nv_nm: f64,
    /// None when the ratio stays on one side of 1 over the scanned σ_T.
    sigma_t_um2: Option<f64>,
}

#[derive(Serialize)]
struct TimeToSnr {
    sigma_t_um2: f64,
    formula_hours: f64,
    quoted_hours: f64,
    dense_nv_factor: f64,
    formula_hours_dense_nv: f64,
    quoted_hours_dense_nv: f64,
    /// formula / quoted.
    formula_over_quoted: f64,
    note: &'static str,
}

#[derive(Serialize)]
struct SensitivityResult {
    orientation: &'static str,
    tau_bounds_us: (f64, f64),
    kernel: KernelChoice,
    #[serde(skip_serializing_if = "Option::is_none")]
    table: Option<WTableSpec>,
    cells: usize,
    coated_advantage_cells: usize,
    min_ratio: f64,
    max_ratio: f64,
    crossovers: Vec<Crossover>,
    boundary_warnings: usize,
    time_to_snr: TimeToSnr,
}

fn list(name: &str, v: &[f64]) -> CliResult<Vec<f64>> {
    if v.is_empty() {
        return Err(CliError::Input(format!("{name} list is empty")));
    }
    let mut out = v.iter().map(|x| positive(name, *x)).collect::<CliResult<Vec<f64>>>()?;
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}

pub fn run(a: &SensitivityArgs, ctx: &Context) -> CliResult<Outcome> {
    let sd = &ctx.defaults.sensitivity;
    let d_nv = list("d-nv", a.d_nv.as_deref().unwrap_or(&sd.d_nv_nm))?;
    let sigma_t = list("sigma-t", a.sigma_t.as_deref().unwrap_or(&sd.sigma_t_um2))?;
    let tau = (positive("tau-min", a.tau_min.unwrap_or(sd.tau_min_us))?, positive("tau-max", a.tau_max.unwrap_or(sd.tau_max_us))?);
    if !(tau.1 > tau.0) {
        return Err(CliError::Input(format!("need tau-min < tau-max, got {tau:?}")));
    }
    let (coated, bare) = (sd.coated.bath(), sd.bare.bath());
    let direct = BathKernelIntegral::new(ctx.defaults.w_config(ctx.w_rel_tol)?);
    let (cells, table): (Vec<RatioCell>, _) = match a.kernel {
        KernelChoice::Direct => (ratio_map(&direct, &d_nv, &sigma_t, coated, bare, tau)?, None),
        KernelChoice::Table => {
            // targets sit h above the background layer, which sits at d_nv
            let depth = (d_nv[0], d_nv[d_nv.len() - 1] + coated.h.max(bare.h));
            let depth = (depth.0, depth.1.max(depth.0 * 1.01));
            let spec = WTableSpec::covering(Dimensionality::Plane, tau, depth, coated.gamma_b.max(bare.gamma_b));
            let w = WTable::build(direct, spec)?;
            (ratio_map(&w, &d_nv, &sigma_t, coated, bare, tau)?, Some(spec))
        }
    };
    let crossovers = d_nv
        .iter()
        .map(|&d| {
            let row: Vec<(f64, f64)> = cells.iter().filter(|c| c.d_nv_nm == d).map(|c| (c.sigma_t_um2, c.eta_ratio)).collect();
            Crossover { d_nv_nm: d, sigma_t_um2: crossover(&row) }
        })
        .collect();
    let m = sd.snr.model();
    let s = sd.snr_sigma_t_um2;
    let formula = time_to_snr(&m, s, 1.0)?;
    let dense = time_to_snr(&m, s, sd.dense_nv_factor)?;
    let snr = TimeToSnr {
        sigma_t_um2: s,
        formula_hours: formula,
        quoted_hours: QUOTED_HOURS,
        dense_nv_factor: sd.dense_nv_factor,
        formula_hours_dense_nv: dense,
        quoted_hours_dense_nv: QUOTED_HOURS_DENSE_NV,
        formula_over_quoted: formula / QUOTED_HOURS,
        note: "the printed SNR formula does not reproduce the quoted times; both are reported",
    };
    let ratios = cells.iter().map(|c| c.eta_ratio);
    let result = SensitivityResult {
        orientation: RATIO_ORIENTATION,
        tau_bounds_us: tau,
        kernel: a.kernel,
        table,
        cells: cells.len(),
        coated_advantage_cells: cells.iter().filter(|c| c.eta_ratio < 1.0).count(),
        min_ratio: ratios.clone().fold(f64::INFINITY, f64::min),
        max_ratio: ratios.fold(f64::NEG_INFINITY, f64::max),
        crossovers,
        boundary_warnings: cells.iter().map(|c| c.warnings).sum(),
        time_to_snr: snr,
    };
    let mut warnings = Vec::new();
    if result.boundary_warnings > 0 {
        warnings.push(format!("{} optimal-tau searches ended on a bound", result.boundary_warnings));
    }
    let rows =
        cells.iter().map(|c| vec![num(c.d_nv_nm), num(c.sigma_t_um2), num(c.eta_ratio), num(c.eta_coated), num(c.eta_bare)]).collect();
    let summary = format!(
        "{} cells, ratio {RATIO_ORIENTATION} in [{:.3}, {:.3}]; time to SNR 1: {formula:.2} h (quoted {QUOTED_HOURS} h)",
        result.cells, result.min_ratio, result.max_ratio
    );
    Ok(Outcome {
        config: to_value(a)?,
        result: to_value(&result)?,
        warnings,
        csv: vec![CsvOutput { name: "ratio_map.csv", header: vec!["d_nv_nm", "sigma_T_um2", "eta_ratio", "eta_coated", "eta_bare"], rows }],
        status: Status::Ok,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossover_interpolates_in_log_space() {
        let c = crossover(&[(100.0, 0.5), (1000.0, 2.0)]).unwrap();
        assert!((c - 316.227_766_016_837_9).abs() < 1e-9);
        assert_eq!(crossover(&[(1.0, 0.5), (2.0, 0.6)]), None);
        assert_eq!(crossover(&[(1.0, 0.5), (2.0, 1.0)]), Some(2.0));
    }
}
