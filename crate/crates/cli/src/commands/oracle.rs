//! oracle: closed-form kernels against master-equation propagation.

use crate::args::OracleArgs;
use crate::error::{CliError, CliResult};
use crate::io::num;
use crate::{to_value, Context, CsvOutput, Outcome, Status};
use darkspin::lindblad::residual_sweep;
use serde::Serialize;

#[derive(Serialize)]
struct OracleResult {
    points: usize,
    tolerance: f64,
    max_residual: f64,
    max_deer_residual: f64,
    max_echo_residual: f64,
    overdamped_points: usize,
    within_tolerance: bool,
}

pub fn run(a: &OracleArgs, ctx: &Context) -> CliResult<Outcome> {
    let n = a.points.unwrap_or(ctx.defaults.oracle.points);
    let tol = a.tol.unwrap_or(ctx.defaults.oracle.max_residual);
    if n == 0 {
        return Err(CliError::Input("need at least one point".into()));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(CliError::Input(format!("tolerance must be positive, got {tol}")));
    }
    let rows = residual_sweep(n, ctx.seed)?;
    let max = rows.iter().map(|r| r.max_residual()).fold(0.0, f64::max);
    let max_deer = rows.iter().map(|r| (r.deer_closed - r.deer_oracle).abs()).fold(0.0, f64::max);
    let max_echo = rows.iter().map(|r| (r.echo_closed - r.echo_oracle).abs()).fold(0.0, f64::max);
    let overdamped = rows.iter().filter(|r| r.gamma_e1 > 2.0 * std::f64::consts::PI * r.v_mhz).count();
    let csv_rows = rows
        .iter()
        .map(|r| {
            [r.v_mhz, r.gamma_e1, r.gamma_e2, r.t, r.deer_closed, r.deer_oracle, r.echo_closed, r.echo_oracle, r.max_residual()]
                .iter()
                .map(|v| num(*v))
                .collect()
        })
        .collect();
    let ok = max < tol;
    let result = OracleResult {
        points: n,
        tolerance: tol,
        max_residual: max,
        max_deer_residual: max_deer,
        max_echo_residual: max_echo,
        overdamped_points: overdamped,
        within_tolerance: ok,
    };
    let header = vec![
        "v_mhz",
        "gamma_e1_per_us",
        "gamma_e2_per_us",
        "t_us",
        "deer_closed",
        "deer_oracle",
        "echo_closed",
        "echo_oracle",
        "max_residual",
    ];
    Ok(Outcome {
        config: to_value(a)?,
        result: to_value(&result)?,
        warnings: Vec::new(),
        csv: vec![CsvOutput { name: "oracle.csv", header, rows: csv_rows }],
        status: if ok { Status::Ok } else { Status::ToleranceExceeded },
        summary: format!("{n} points, max residual {max:.3e} (tolerance {tol:e}, {overdamped} overdamped)"),
    })
}
