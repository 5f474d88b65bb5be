//! Parameter estimation: the FID (σ, γ, d) fit and generic decay and spectrum fitters.

mod decay;
mod fid;
pub mod optim;
mod spectrum;

pub use decay::{
    echo_modulation_model, fit_echo_modulation, fit_rabi, fit_stretched_t1, rabi_model, stretched_t1_model, EchoFitOptions,
    EchoModulationModel, RabiModel, StretchedDecayModel,
};
pub use fid::{fid_cost, fid_jacobian, fit_fid, inner_sigma, DeltaSource, FidFit, FidFitOptions, InnerSolve, Weighting};
pub use spectrum::{fit_lorentzians, lorentzian_sum, LinkedSpacing, LorentzianOptions};

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

/// One fitted parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    /// 1σ uncertainty reported as the primary error.
    pub stderr: f64,
    /// Conventional Gauss–Newton standard error, when it differs in kind from `stderr`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gauss_newton_stderr: Option<f64>,
}

/// Convergence and data-handling record of a fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub dropped_points: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Convergence measure: scaled gradient norm, or the largest Newton step for the FID fit.
    pub gradient_norm: f64,
    pub warnings: Vec<String>,
}

/// Named estimates, final cost and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: String,
    pub params: Vec<(String, Estimate)>,
    /// Final value of the minimised cost.
    pub residual: f64,
    pub diagnostics: Diagnostics,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&Estimate> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }

    pub fn value(&self, name: &str) -> f64 {
        self.get(name).map(|e| e.value).unwrap_or(f64::NAN)
    }

    pub fn stderr(&self, name: &str) -> f64 {
        self.get(name).map(|e| e.stderr).unwrap_or(f64::NAN)
    }
}

struct ParamMap<'a>(&'a [(String, Estimate)]);

impl Serialize for ParamMap<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

impl Serialize for FitResult {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(4))?;
        m.serialize_entry("model", &self.model)?;
        m.serialize_entry("params", &ParamMap(&self.params))?;
        m.serialize_entry("residual", &self.residual)?;
        m.serialize_entry("diagnostics", &self.diagnostics)?;
        m.end()
    }
}
