//! Command-line surface.

use crate::io::TimeUnit;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "darkspin", version, about = "Simulate, fit and plan DEER experiments on near-surface NV centers")]
pub struct Cli {
    /// Directory receiving result.json and any CSV outputs.
    #[arg(long, global = true, env = "DARKSPIN_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
    /// Seed of every Monte Carlo or noise stream; defaults to the value in the defaults file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Alternative defaults file (JSON, same layout as the bundled one).
    #[arg(long, global = true)]
    pub defaults: Option<PathBuf>,
    /// Override of the W-integral relative tolerance.
    #[arg(long, global = true)]
    pub w_rel_tol: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit (σ, γ, d) to a measured DEER/echo ratio curve.
    FitFid(FitFidArgs),
    /// Configuration-averaged FID curve, analytic or Monte Carlo.
    SimulateFid(SimulateFidArgs),
    /// Closed-form kernels against master-equation propagation.
    Oracle(OracleArgs),
    /// Stretched T1, echo-modulation or Rabi fit.
    FitDecay(FitDecayArgs),
    /// n-th nearest-neighbour distance statistics of an implanted layer.
    Nn(NnArgs),
    /// P1 resonance lines, optionally with a Lorentzian fit of a spectrum.
    P1(P1Args),
    /// g-factor from grouped spectrum peaks.
    Gfactor(GfactorArgs),
    /// Coated-over-bare sensitivity map and time-to-SNR summary.
    Sensitivity(SensitivityArgs),
    /// Island-growth nucleation fit of film thickness against cycles.
    Nucleation(NucleationArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::FitFid(_) => "fit-fid",
            Command::SimulateFid(_) => "simulate-fid",
            Command::Oracle(_) => "oracle",
            Command::FitDecay(_) => "fit-decay",
            Command::Nn(_) => "nn",
            Command::P1(_) => "p1",
            Command::Gfactor(_) => "gfactor",
            Command::Sensitivity(_) => "sensitivity",
            Command::Nucleation(_) => "nucleation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Dim {
    Plane,
    HalfSpace,
}

impl From<Dim> for darkspin::bathavg::Dimensionality {
    fn from(d: Dim) -> Self {
        match d {
            Dim::Plane => Self::Plane,
            Dim::HalfSpace => Self::HalfSpace,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DensityUnit {
    Um2,
    Cm2,
    Um3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum KernelChoice {
    /// Interpolated W table built for the requested range.
    Table,
    /// Direct quadrature at every point.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum WeightingArg {
    Unweighted,
    InverseVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InnerArg {
    LogMean,
    ArithmeticMean,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct FitFidArgs {
    /// CSV with header t_us,signal[,sigma] (or t_ns).
    #[arg(long)]
    pub input: PathBuf,
    /// Declared time unit; must agree with the header.
    #[arg(long)]
    pub time_unit: Option<TimeUnit>,
    /// Bath geometry: a plane at the NV depth or the half-space beyond it.
    #[arg(long, value_enum, default_value = "plane")]
    pub dim: Dim,
    /// Fraction of bath spins inverted by the DEER π pulse.
    #[arg(long, default_value_t = 1.0)]
    pub flip_fraction: f64,
    /// Upper γ bound (MHz).
    #[arg(long)]
    pub gamma_max: Option<f64>,
    /// Lower depth bound (nm).
    #[arg(long)]
    pub depth_min: Option<f64>,
    /// Upper depth bound (nm).
    #[arg(long)]
    pub depth_max: Option<f64>,
    /// Grid nodes along γ and along d.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Per-point weights of the double-log cost; inverse-variance needs a sigma column.
    #[arg(long, value_enum, default_value = "unweighted")]
    pub weighting: WeightingArg,
    /// Closed-form σ solve inside the (γ, d) search.
    #[arg(long, value_enum, default_value = "log-mean")]
    pub inner: InnerArg,
    /// How W is evaluated.
    #[arg(long, value_enum, default_value = "table")]
    pub kernel: KernelChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Analytic,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Log,
    Linear,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct SimulateFidArgs {
    /// Bath density, in --density-unit.
    #[arg(long)]
    pub density: f64,
    /// um3 for a half-space bath, um2 or cm2 for a plane.
    #[arg(long, value_enum, default_value = "um2")]
    pub density_unit: DensityUnit,
    /// Depolarization rate (MHz).
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    /// NV depth (nm).
    #[arg(long)]
    pub depth: f64,
    /// Bath geometry: a plane at the NV depth or the half-space beyond it.
    #[arg(long, value_enum, default_value = "plane")]
    pub dim: Dim,
    /// Fraction of bath spins inverted by the DEER π pulse.
    #[arg(long, default_value_t = 1.0)]
    pub flip_fraction: f64,
    /// First time of the grid (µs).
    #[arg(long)]
    pub t_min: Option<f64>,
    /// Last time of the grid (µs).
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Number of time points.
    #[arg(long)]
    pub points: Option<usize>,
    /// Spacing of the time grid.
    #[arg(long, value_enum, default_value = "log")]
    pub spacing: Spacing,
    /// Analytic configuration average or Monte Carlo over spin placements.
    #[arg(long, value_enum, default_value = "analytic")]
    pub method: Method,
    /// Monte Carlo configurations.
    #[arg(long)]
    pub configs: Option<usize>,
    /// Relative Gaussian noise added to every point; the sigma column records it.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct OracleArgs {
    /// Number of random (V, γ₁, γ₂, t) cases.
    #[arg(long)]
    pub points: Option<usize>,
    /// Largest tolerated |closed form − oracle|.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DecayModel {
    T1,
    Echo,
    Rabi,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct FitDecayArgs {
    /// Model to fit.
    #[arg(long, value_enum)]
    pub model: DecayModel,
    /// CSV with header t_us,signal[,sigma] (or t_ns).
    #[arg(long)]
    pub input: PathBuf,
    /// Declared time unit; must agree with the header.
    #[arg(long)]
    pub time_unit: Option<TimeUnit>,
    /// Fixed NV decay time (µs) for the T1 product fit; needs --n-nv.
    #[arg(long, requires = "n_nv")]
    pub t1_nv: Option<f64>,
    /// Fixed NV stretch exponent for the T1 product fit; needs --t1-nv.
    #[arg(long, requires = "t1_nv")]
    pub n_nv: Option<f64>,
    /// Nuclear Larmor frequency (MHz) for the echo fit.
    #[arg(long)]
    pub omega_n: Option<f64>,
    /// Hold --omega-n fixed.
    #[arg(long, requires = "omega_n")]
    pub fix_omega: bool,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct NnArgs {
    /// Mean implantation depth (nm).
    #[arg(long)]
    pub mean_depth: f64,
    /// Straggle of the implantation depth (nm).
    #[arg(long)]
    pub depth_sigma: f64,
    /// Implanted areal dose, in --dose-unit.
    #[arg(long)]
    pub dose: f64,
    /// cm2 or um2; um3 is rejected.
    #[arg(long, value_enum, default_value = "cm2")]
    pub dose_unit: DensityUnit,
    /// Highest neighbour order.
    #[arg(long)]
    pub orders: Option<usize>,
    /// Fixed NV depth (nm); by default the NV depth is averaged over the profile.
    #[arg(long)]
    pub nv_depth: Option<f64>,
    /// Monte Carlo trials per order; 0 skips the Monte Carlo column.
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum IsotopeArg {
    N14,
    N15,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct P1Args {
    /// Nitrogen isotope of the P1 center.
    #[arg(long, value_enum, default_value = "n14")]
    pub isotope: IsotopeArg,
    /// Electron Zeeman frequency (MHz).
    #[arg(long)]
    pub omega_e: f64,
    /// Parallel hyperfine constant (MHz); required for 15N.
    #[arg(long)]
    pub a_par: Option<f64>,
    /// Perpendicular hyperfine constant (MHz); required for 15N.
    #[arg(long)]
    pub a_perp: Option<f64>,
    /// Quadrupole constant (MHz).
    #[arg(long)]
    pub q: Option<f64>,
    /// Nuclear Zeeman frequency (MHz); by default from the field implied by omega_e.
    #[arg(long)]
    pub omega_n: Option<f64>,
    /// Spectrum CSV with header freq_MHz,contrast to fit with Lorentzians.
    #[arg(long, requires = "peaks")]
    pub spectrum: Option<PathBuf>,
    /// Number of Lorentzian lines in the spectrum fit.
    #[arg(long)]
    pub peaks: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct GfactorArgs {
    /// Grouped-peak JSON.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct SensitivityArgs {
    /// NV depths (nm), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub d_nv: Option<Vec<f64>>,
    /// Target densities (µm⁻²), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sigma_t: Option<Vec<f64>>,
    /// Lower bound of the interrogation-time search (µs).
    #[arg(long)]
    pub tau_min: Option<f64>,
    /// Upper bound of the interrogation-time search (µs).
    #[arg(long)]
    pub tau_max: Option<f64>,
    /// How W is evaluated.
    #[arg(long, value_enum, default_value = "table")]
    pub kernel: KernelChoice,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct NucleationArgs {
    /// CSV with header cycles,thickness_nm.
    #[arg(long)]
    pub input: PathBuf,
    /// Samples of the model curve.
    #[arg(long, default_value_t = 200)]
    pub curve_points: usize,
}
