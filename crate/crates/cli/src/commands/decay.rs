//! fit-decay: stretched T1, echo modulation and Rabi fits.

use super::describe;
use crate::args::{DecayModel, FitDecayArgs};
use crate::error::CliResult;
use crate::io::{self, num};
use crate::{to_value, Context, CsvOutput, Outcome, Status};
use darkspin::fitting::{
    echo_modulation_model, fit_echo_modulation, fit_rabi, fit_stretched_t1, rabi_model, stretched_t1_model, EchoFitOptions,
    EchoModulationModel, FitResult, RabiModel, StretchedDecayModel,
};

fn model_value(r: &FitResult, model: DecayModel, t: f64) -> f64 {
    let v = |n: &str| r.value(n);
    match model {
        DecayModel::T1 => {
            let (t1_e, n_e) = if r.get("T1_e").is_some() { (v("T1_e"), v("n_e")) } else { (f64::INFINITY, 1.0) };
            let m = StretchedDecayModel { a: v("A"), c: v("c"), t1_nv: v("T1_nv"), n_nv: v("n_nv"), t1_e, n_e };
            stretched_t1_model(&m, t)
        }
        DecayModel::Echo => {
            let m = EchoModulationModel { a: v("A"), t2: v("T2"), n: v("n"), alpha: v("alpha"), omega_n: v("omega_n"), phi1: v("phi1") };
            echo_modulation_model(&m, t)
        }
        DecayModel::Rabi => {
            let m = RabiModel { a: v("A"), t_rabi: v("T_rabi"), n: v("n"), f: v("f"), phi: v("phi"), c: v("C") };
            rabi_model(&m, t)
        }
    }
}

pub fn run(a: &FitDecayArgs, _ctx: &Context) -> CliResult<Outcome> {
    let (curve, _) = io::read_curve(&a.input, a.time_unit)?;
    let (fit, shown): (FitResult, &[&str]) = match a.model {
        DecayModel::T1 => {
            let fixed = a.t1_nv.zip(a.n_nv);
            let r = fit_stretched_t1(&curve, fixed)?;
            (r, if fixed.is_some() { &["T1_e", "n_e"] } else { &["T1_nv", "n_nv"] })
        }
        DecayModel::Echo => {
            let opts = EchoFitOptions { omega_n: a.omega_n, fix_omega: a.fix_omega };
            (fit_echo_modulation(&curve, &opts)?, &["T2", "n", "omega_n"])
        }
        DecayModel::Rabi => (fit_rabi(&curve)?, &["T_rabi", "n", "f"]),
    };
    let rows = curve.t().iter().zip(curve.y()).map(|(t, y)| vec![num(*t), num(*y), num(model_value(&fit, a.model, *t))]).collect();
    Ok(Outcome {
        config: to_value(a)?,
        summary: describe(&fit, shown),
        status: Status::from_converged(fit.diagnostics.converged),
        warnings: fit.diagnostics.warnings.clone(),
        result: to_value(&fit)?,
        csv: vec![CsvOutput { name: "fit.csv", header: vec!["t_us", "signal", "model"], rows }],
    })
}
