//! One module per subcommand family.

pub mod decay;
pub mod fid;
pub mod nn;
pub mod nucleation;
pub mod oracle;
pub mod sensitivity;
pub mod spectra;

use crate::error::{CliError, CliResult};
use darkspin::fitting::FitResult;

pub(crate) fn positive(name: &str, v: f64) -> CliResult<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Input(format!("{name} must be positive and finite, got {v}")))
    }
}

/// "name = value ± stderr" for each listed parameter.
pub(crate) fn describe(fit: &FitResult, names: &[&str]) -> String {
    names.iter().map(|n| format!("{n} = {:.6} ± {:.2e}", fit.value(n), fit.stderr(n))).collect::<Vec<_>>().join(", ")
}
