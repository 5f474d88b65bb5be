//! simulate-fid and fit-fid.

use super::{describe, positive};
use crate::args::{DensityUnit, Dim, FitFidArgs, InnerArg, KernelChoice, Method, SimulateFidArgs, Spacing, WeightingArg};
use crate::error::{CliError, CliResult};
use crate::io::{self, num};
use crate::{to_value, Context, CsvOutput, Outcome, Status};
use darkspin::bathavg::{fid_curve, simulate_fid_mc, BathKernelIntegral, BathParams, Dimensionality, McOptions, WTable, WTableSpec};
use darkspin::fitting::{fit_fid, DeltaSource, FidFitOptions, InnerSolve, Weighting};
use darkspin::physics::units;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

/// Stream index of the measurement-noise generator, kept clear of the
/// per-configuration Monte Carlo streams.
const NOISE_STREAM: u64 = u64::MAX;

fn density_in(dim: Dim, unit: DensityUnit, v: f64) -> CliResult<f64> {
    match (dim, unit) {
        (Dim::Plane, DensityUnit::Um2) | (Dim::HalfSpace, DensityUnit::Um3) => Ok(v),
        (Dim::Plane, DensityUnit::Cm2) => Ok(units::per_cm2_to_per_um2(v)),
        (d, u) => Err(CliError::Input(format!("unit mismatch: density unit {u:?} does not describe a {d:?} bath"))),
    }
}

fn time_grid(t0: f64, t1: f64, n: usize, spacing: Spacing) -> CliResult<Vec<f64>> {
    positive("t-min", t0)?;
    positive("t-max", t1)?;
    if !(t1 > t0) || n < 2 {
        return Err(CliError::Input(format!("need t-min < t-max and at least 2 points, got {t0}, {t1}, {n}")));
    }
    let f = |i: usize| i as f64 / (n - 1) as f64;
    let mut ts: Vec<f64> = match spacing {
        Spacing::Log => (0..n).map(|i| (t0.ln() + f(i) * (t1 / t0).ln()).exp()).collect(),
        Spacing::Linear => (0..n).map(|i| t0 + f(i) * (t1 - t0)).collect(),
    };
    ts[0] = t0;
    ts[n - 1] = t1;
    Ok(ts)
}

#[derive(Serialize)]
struct McInfo {
    configs: usize,
    r_max_nm: f64,
}

#[derive(Serialize)]
struct SimulateResult {
    bath: BathParams,
    method: Method,
    points: usize,
    t_range_us: (f64, f64),
    noise: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<McInfo>,
    f_min: f64,
    f_max: f64,
}

pub fn simulate(a: &SimulateFidArgs, ctx: &Context) -> CliResult<Outcome> {
    let d = &ctx.defaults.simulate_fid;
    let density = density_in(a.dim, a.density_unit, a.density)?;
    let bath = BathParams::new(density, a.gamma, a.depth, a.dim.into(), a.flip_fraction)?;
    let ts = time_grid(a.t_min.unwrap_or(d.t_min_us), a.t_max.unwrap_or(d.t_max_us), a.points.unwrap_or(d.points), a.spacing)?;
    if !(a.noise.is_finite() && (0.0..1.0).contains(&a.noise)) {
        return Err(CliError::Input(format!("noise must lie in [0, 1), got {}", a.noise)));
    }
    if a.method == Method::Analytic && a.configs.is_some() {
        return Err(CliError::Input("--configs applies to --method mc only".into()));
    }
    let (mut f, se, mc) = match a.method {
        Method::Analytic => {
            let w = BathKernelIntegral::new(ctx.defaults.w_config(ctx.w_rel_tol)?);
            (fid_curve(&w, &bath, &ts)?, None, None)
        }
        Method::Mc => {
            let configs = a.configs.unwrap_or(d.mc_configs);
            let opts = McOptions { axis: ctx.defaults.axis()?, constants: ctx.defaults.physical_constants()?, ..McOptions::default() };
            let m = simulate_fid_mc(&bath, &ts, configs, ctx.seed, &opts)?;
            let info = McInfo { configs: m.n_configs, r_max_nm: m.r_max };
            (m.f, Some(m.stderr), Some(info))
        }
    };
    let mut err = se;
    if a.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        rng.set_stream(NOISE_STREAM);
        let base = err.take();
        let mut sig = Vec::with_capacity(f.len());
        for (i, fi) in f.iter_mut().enumerate() {
            let s_noise = a.noise * fi.abs();
            let s_mc = base.as_ref().map_or(0.0, |b| b[i]);
            let xi: f64 = StandardNormal.sample(&mut rng);
            *fi *= 1.0 + a.noise * xi;
            sig.push(s_noise.hypot(s_mc));
        }
        err = Some(sig);
    }
    let f_min = f.iter().copied().fold(f64::INFINITY, f64::min);
    let f_max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rows = ts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut r = vec![num(*t), num(f[i])];
            if let Some(e) = &err {
                r.push(num(e[i]));
            }
            r
        })
        .collect();
    let header = if err.is_some() { vec!["t_us", "F", "stderr"] } else { vec!["t_us", "F"] };
    let result = SimulateResult {
        bath,
        method: a.method,
        points: ts.len(),
        t_range_us: (ts[0], ts[ts.len() - 1]),
        noise: a.noise,
        monte_carlo: mc,
        f_min,
        f_max,
    };
    Ok(Outcome {
        config: to_value(a)?,
        result: to_value(&result)?,
        warnings: Vec::new(),
        csv: vec![CsvOutput { name: "curve.csv", header, rows }],
        status: Status::Ok,
        summary: format!("{} points, F in [{f_min:.6}, {f_max:.6}]", ts.len()),
    })
}

#[derive(Serialize)]
struct InputInfo {
    points: usize,
    time_unit: io::TimeUnit,
    has_errors: bool,
}

#[derive(Serialize)]
struct FitFidResult {
    input: InputInfo,
    options: FidFitOptions,
    kernel: KernelChoice,
    #[serde(skip_serializing_if = "Option::is_none")]
    table: Option<WTableSpec>,
    fit: darkspin::fitting::FitResult,
}

pub fn fit(a: &FitFidArgs, ctx: &Context) -> CliResult<Outcome> {
    let (curve, unit) = io::read_curve(&a.input, a.time_unit)?;
    let fd = &ctx.defaults.fit_fid;
    let dim: Dimensionality = a.dim.into();
    let grid = a.grid.unwrap_or(fd.grid);
    let opts = FidFitOptions {
        gamma_bounds: (0.0, a.gamma_max.unwrap_or(fd.gamma_max_mhz)),
        depth_bounds: (a.depth_min.unwrap_or(fd.depth_min_nm), a.depth_max.unwrap_or(fd.depth_max_nm)),
        grid: (grid, grid),
        dim,
        flip_fraction: a.flip_fraction,
        inner: match a.inner {
            InnerArg::LogMean => InnerSolve::LogMean,
            InnerArg::ArithmeticMean => InnerSolve::ArithmeticMean,
        },
        weighting: match a.weighting {
            WeightingArg::Unweighted => Weighting::Unweighted,
            WeightingArg::InverseVariance => Weighting::InverseVariance,
        },
        max_simplex_evals: fd.max_simplex_evals,
        delta_source: DeltaSource::Auto,
    };
    let direct = BathKernelIntegral::new(ctx.defaults.w_config(ctx.w_rel_tol)?);
    let (fit, table) = match a.kernel {
        KernelChoice::Direct => (fit_fid(&curve, &direct, &opts)?, None),
        KernelChoice::Table => {
            let t_lo = curve.t().iter().copied().find(|t| *t > 0.0).ok_or_else(|| CliError::Input("curve has no positive times".into()))?;
            let t_hi = curve.t()[curve.len() - 1];
            let (d_lo, d_hi) = opts.depth_bounds;
            if !(d_lo > 0.0 && d_hi > d_lo) {
                return Err(CliError::Input(format!("depth bounds must satisfy 0 < lo < hi, got ({d_lo}, {d_hi})")));
            }
            let spec = WTableSpec::covering(dim, (t_lo, t_hi.max(t_lo * 1.01)), opts.depth_bounds, opts.gamma_bounds.1);
            let table = WTable::build(direct, spec)?;
            (fit_fid(&curve, &table, &opts)?, Some(spec))
        }
    };
    let rows =
        (0..fit.t.len()).map(|i| vec![num(fit.t[i]), num(fit.observed_fp[i]), num(fit.fitted_fp[i]), num(fit.delta_fp[i])]).collect();
    let r = fit.result;
    let summary = describe(&r, &["sigma", "gamma", "depth"]);
    let status = Status::from_converged(r.diagnostics.converged);
    let warnings = r.diagnostics.warnings.clone();
    let result = FitFidResult {
        input: InputInfo { points: curve.len(), time_unit: unit, has_errors: curve.y_err().is_some() },
        options: opts,
        kernel: a.kernel,
        table,
        fit: r,
    };
    Ok(Outcome {
        config: to_value(a)?,
        result: to_value(&result)?,
        warnings,
        csv: vec![CsvOutput { name: "fit.csv", header: vec!["t_us", "observed_fp", "fitted_fp", "delta_fp"], rows }],
        status,
        summary,
    })
}
