//! nucleation: island-growth fit of thickness against deposition cycles.

use super::describe;
use crate::args::NucleationArgs;
use crate::error::{CliError, CliResult};
use crate::io::{self, num};
use crate::{to_value, Context, CsvOutput, Outcome, Status};
use darkspin::fitting::FitResult;
use darkspin::nucleation::{fit_nucleation, sites_per_um2, NucleationModel};
use serde::Serialize;

#[derive(Serialize)]
struct Derived {
    r_cov_nm: f64,
    coalescence_cycles: f64,
    sites_per_um2: f64,
}

#[derive(Serialize)]
struct NucleationResult {
    fit: FitResult,
    derived: Derived,
}

pub fn run(a: &NucleationArgs, _ctx: &Context) -> CliResult<Outcome> {
    let (x, y) = io::read_xy(&a.input, "cycles", "thickness_nm")?;
    if a.curve_points < 2 {
        return Err(CliError::Input("--curve-points must be at least 2".into()));
    }
    let fit = fit_nucleation(&x, &y)?;
    let model = NucleationModel::new(fit.value("n_d"), fit.value("g"))?;
    let x_hi = 1.2 * x[x.len() - 1].max(model.coalescence_cycles());
    let n = a.curve_points;
    let rows = (0..n)
        .map(|i| {
            let c = x_hi * i as f64 / (n - 1) as f64;
            Ok(vec![num(c), num(model.film_thickness(c)?)])
        })
        .collect::<CliResult<Vec<_>>>()?;
    let derived =
        Derived { r_cov_nm: model.r_cov(), coalescence_cycles: model.coalescence_cycles(), sites_per_um2: sites_per_um2(model.n_d()) };
    let summary = format!("{}, R_cov = {:.4} nm", describe(&fit, &["n_d", "g"]), derived.r_cov_nm);
    Ok(Outcome {
        config: to_value(a)?,
        status: Status::from_converged(fit.diagnostics.converged),
        warnings: fit.diagnostics.warnings.clone(),
        result: to_value(&NucleationResult { fit, derived })?,
        csv: vec![CsvOutput { name: "curve.csv", header: vec!["cycles", "thickness_nm"], rows }],
        summary,
    })
}
