//! p1 and gfactor.

use super::describe;
use crate::args::{GfactorArgs, IsotopeArg, P1Args};
use crate::error::{CliError, CliResult};
use crate::io::{self, num};
use crate::{to_value, Context, CsvOutput, Outcome, Status};
use darkspin::fitting::{fit_lorentzians, lorentzian_sum, FitResult, LorentzianOptions};
use darkspin::spectra::{
    g_factor_14n, g_factor_15n, p1_exact, p1_resonances, Axis, GFactorResult, Gfactor15nInput, Isotope, P1Params, Peak, PerpConstant,
    GAMMA_N14, GAMMA_N15,
};
use darkspin::DecayCurve;
use serde::{Deserialize, Serialize};

#[derive(Serialize)]
struct Line {
    axis: Axis,
    m_i: f64,
    perturbative_mhz: f64,
    exact_mhz: f64,
}

#[derive(Serialize)]
struct P1Result {
    params: P1Params,
    lines: Vec<Line>,
    max_abs_difference_mhz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectrum_fit: Option<FitResult>,
}

fn lorentzian_model(fit: &FitResult, k: usize, x: f64) -> f64 {
    let peaks: Vec<(f64, f64, f64)> = (1..=k)
        .map(|i| (fit.value(&format!("center_{i}")), fit.value(&format!("width_{i}")), fit.value(&format!("amplitude_{i}"))))
        .collect();
    lorentzian_sum(fit.value("baseline"), &peaks, x)
}

pub fn p1(a: &P1Args, ctx: &Context) -> CliResult<Outcome> {
    let s = &ctx.defaults.spectra;
    let c = ctx.defaults.physical_constants()?;
    let (isotope, a_par, a_perp, q, gamma_n) = match a.isotope {
        IsotopeArg::N14 => {
            (Isotope::N14, a.a_par.unwrap_or(s.a_par_14n_mhz), a.a_perp.unwrap_or(s.a_perp_14n_mhz), a.q.unwrap_or(s.q_14n_mhz), GAMMA_N14)
        }
        IsotopeArg::N15 => {
            let (Some(ap), Some(ak)) = (a.a_par, a.a_perp) else {
                return Err(CliError::Input("15N needs --a-par and --a-perp".into()));
            };
            (Isotope::N15, ap, ak, a.q.unwrap_or(0.0), GAMMA_N15)
        }
    };
    let omega_n = a.omega_n.unwrap_or(gamma_n.abs() * a.omega_e / c.gamma_electron_linear());
    let params = P1Params::new(isotope, a_par, a_perp, q, a.omega_e, omega_n)?;
    let mut warnings = params.warnings();
    let mut lines = Vec::new();
    for axis in [Axis::On, Axis::Off] {
        let exact = p1_exact(&params, axis)?;
        for l in p1_resonances(&params, axis) {
            let e = exact.iter().find(|e| (e.m_i - l.m_i).abs() < 1e-9).map_or(f64::NAN, |e| e.frequency);
            lines.push(Line { axis, m_i: l.m_i, perturbative_mhz: l.frequency, exact_mhz: e });
        }
    }
    let max_diff = lines.iter().map(|l| (l.perturbative_mhz - l.exact_mhz).abs()).fold(0.0, f64::max);
    let mut csv = vec![CsvOutput {
        name: "lines.csv",
        header: vec!["axis", "m_i", "perturbative_mhz", "exact_mhz"],
        rows: lines
            .iter()
            .map(|l| {
                let ax = if l.axis == Axis::On { "on" } else { "off" };
                vec![ax.to_string(), num(l.m_i), num(l.perturbative_mhz), num(l.exact_mhz)]
            })
            .collect(),
    }];
    let mut status = Status::Ok;
    let mut summary = format!("{} lines, largest perturbative error {max_diff:.3e} MHz", lines.len());
    let spectrum_fit = match (&a.spectrum, a.peaks) {
        (Some(path), Some(k)) => {
            let (x, y) = io::read_xy(path, "freq_MHz", "contrast")?;
            let curve = DecayCurve::new(x, y, None)?;
            let fit = fit_lorentzians(&curve, &LorentzianOptions::new(k))?;
            let rows = curve.t().iter().zip(curve.y()).map(|(f, v)| vec![num(*f), num(*v), num(lorentzian_model(&fit, k, *f))]).collect();
            csv.push(CsvOutput { name: "spectrum_fit.csv", header: vec!["freq_MHz", "contrast", "model"], rows });
            status = Status::from_converged(fit.diagnostics.converged);
            warnings.extend(fit.diagnostics.warnings.iter().cloned());
            let centres: Vec<String> = (1..=k).map(|i| format!("center_{i}")).collect();
            let names: Vec<&str> = centres.iter().map(String::as_str).collect();
            summary = format!("{summary}; {}", describe(&fit, &names));
            Some(fit)
        }
        _ => None,
    };
    let result = P1Result { params, lines, max_abs_difference_mhz: max_diff, spectrum_fit };
    Ok(Outcome { config: to_value(a)?, result: to_value(&result)?, warnings, csv, status, summary })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PeakIn {
    center: f64,
    stderr: f64,
}

impl From<PeakIn> for Peak {
    fn from(p: PeakIn) -> Self {
        Peak::new(p.center, p.stderr)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum PerpKind {
    OnAxis,
    OffAxis,
}

/// Grouped-peak input. ¹⁴N triplets are ordered (t1, t2, t3).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "isotope", rename_all = "lowercase", deny_unknown_fields)]
enum PeakGroups {
    N14 {
        on: [PeakIn; 3],
        off: [PeakIn; 3],
        dark: PeakIn,
    },
    N15 {
        t1: PeakIn,
        t2: PeakIn,
        a_perp: f64,
        a_perp_kind: PerpKind,
        #[serde(default)]
        omega_n: f64,
        dark: PeakIn,
        window: (f64, f64),
    },
}

#[derive(Serialize)]
struct GfactorResult<'a> {
    input: &'a PeakGroups,
    g_factor: GFactorResult,
}

pub fn gfactor(a: &GfactorArgs, ctx: &Context) -> CliResult<Outcome> {
    let text = std::fs::read_to_string(&a.input).map_err(|e| CliError::Input(format!("{}: {e}", a.input.display())))?;
    let groups: PeakGroups = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", a.input.display())))?;
    let c = ctx.defaults.physical_constants()?;
    let r = match &groups {
        PeakGroups::N14 { on, off, dark } => g_factor_14n(on.map(Peak::from), off.map(Peak::from), (*dark).into(), &c)?,
        PeakGroups::N15 { t1, t2, a_perp, a_perp_kind, omega_n, dark, window } => {
            let inp = Gfactor15nInput {
                t1: (*t1).into(),
                t2: (*t2).into(),
                a_perp: *a_perp,
                a_perp_kind: match a_perp_kind {
                    PerpKind::OnAxis => PerpConstant::OnAxis,
                    PerpKind::OffAxis => PerpConstant::OffAxis,
                },
                omega_n: *omega_n,
                dark: (*dark).into(),
                window: *window,
            };
            g_factor_15n(&inp, &c)?
        }
    };
    let summary = format!(
        "omega_e = {:.4} ± {:.4} MHz, B_eff = {:.3} ± {:.3} G, g = {:.5} ± {:.5}",
        r.omega_e_avg, r.omega_e_avg_stderr, r.b_eff, r.b_eff_stderr, r.g, r.g_stderr
    );
    let warnings = r.warnings.clone();
    Ok(Outcome {
        config: to_value(a)?,
        result: to_value(&GfactorResult { input: &groups, g_factor: r })?,
        warnings,
        csv: Vec::new(),
        status: Status::Ok,
        summary,
    })
}
