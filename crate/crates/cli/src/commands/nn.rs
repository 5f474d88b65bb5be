//! nn: nearest-neighbour distances in an implanted layer.

use crate::args::{DensityUnit, NnArgs};
use crate::error::{CliError, CliResult};
use crate::io::num;
use crate::{to_value, Context, CsvOutput, Outcome, Status};
use darkspin::nn::{nn_mean_var_averaged, nn_moments, sample_nn_mc, ImplantProfile, NnMoments, NnMonteCarlo, NvDepth, SpinField};
use serde::Serialize;

#[derive(Serialize)]
struct Order {
    n: usize,
    analytic: NnMoments,
    analytic_std: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<NnMonteCarlo>,
}

#[derive(Serialize)]
struct NnResult {
    profile: ImplantProfile,
    nv_depth: NvDepth,
    trials: usize,
    orders: Vec<Order>,
}

pub fn run(a: &NnArgs, ctx: &Context) -> CliResult<Outcome> {
    let p = match a.dose_unit {
        DensityUnit::Cm2 => ImplantProfile::from_per_cm2(a.mean_depth, a.depth_sigma, a.dose)?,
        DensityUnit::Um2 => ImplantProfile::from_per_um2(a.mean_depth, a.depth_sigma, a.dose)?,
        DensityUnit::Um3 => return Err(CliError::Input("unit mismatch: an implant dose is an areal density".into())),
    };
    let orders = a.orders.unwrap_or(ctx.defaults.nn.orders);
    if orders == 0 {
        return Err(CliError::Input("--orders must be at least 1".into()));
    }
    let trials = a.trials.unwrap_or(ctx.defaults.nn.mc_trials);
    let nv = match a.nv_depth {
        Some(z) => NvDepth::Fixed(super::positive("nv-depth", z)?),
        None => NvDepth::Averaged,
    };
    let mut out = Vec::with_capacity(orders);
    let mut rows = Vec::new();
    for n in 1..=orders {
        let analytic = match nv {
            NvDepth::Fixed(z) => nn_moments(n, &SpinField::Gaussian { profile: p, z_nv: z })?,
            NvDepth::Averaged => nn_mean_var_averaged(n, &p)?,
        };
        rows.push(vec![n.to_string(), num(analytic.mean), num(analytic.std()), "analytic".into()]);
        let mc = if trials > 0 { Some(sample_nn_mc(n, &p, nv, trials, ctx.seed)?) } else { None };
        if let Some(m) = &mc {
            rows.push(vec![n.to_string(), num(m.mean), num(m.std), "mc".into()]);
        }
        out.push(Order { n, analytic_std: analytic.std(), analytic, monte_carlo: mc });
    }
    let first = &out[0];
    let summary = format!("l_1 = {:.4} ± {:.4} nm (analytic)", first.analytic.mean, first.analytic_std);
    let result = NnResult { profile: p, nv_depth: nv, trials, orders: out };
    Ok(Outcome {
        config: to_value(a)?,
        result: to_value(&result)?,
        warnings: p.warnings(),
        csv: vec![CsvOutput { name: "nn.csv", header: vec!["n", "l_n_nm", "std_nm", "method"], rows }],
        status: Status::Ok,
        summary,
    })
}
