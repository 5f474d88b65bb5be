//! The versioned defaults file. Every result echoes the copy it ran with.

use crate::error::CliError;
use darkspin::bathavg::WConfig;
use darkspin::physics::{NvAxis, PhysicalConstants, TWO_PI};
use darkspin::sensitivity::{SnrModel, SurfaceBath};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const BUILTIN: &str = include_str!("../defaults.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    pub version: String,
    pub seed: u64,
    pub constants: Constants,
    pub nv_axis: AxisDefaults,
    pub w_integral: WIntegral,
    pub oracle: OracleDefaults,
    pub simulate_fid: SimulateDefaults,
    pub fit_fid: FitFidDefaults,
    pub nn: NnDefaults,
    pub spectra: SpectraDefaults,
    pub sensitivity: SensitivityDefaults,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    pub mu0_over_4pi_t_m_per_a: f64,
    pub hbar_j_s: f64,
    pub gamma_electron_hz_per_t: f64,
    pub gamma_electron_mhz_per_g: f64,
    pub mu_bohr_j_per_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisDefaults {
    pub tilt_rad: f64,
    pub azimuth_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WIntegral {
    pub rel_tol: f64,
    pub r_min_fraction: f64,
    pub tail_tol: f64,
    pub azimuth_nodes: usize,
    pub azimuth_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleDefaults {
    pub points: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateDefaults {
    pub t_min_us: f64,
    pub t_max_us: f64,
    pub points: usize,
    pub mc_configs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitFidDefaults {
    pub gamma_max_mhz: f64,
    pub depth_min_nm: f64,
    pub depth_max_nm: f64,
    pub grid: usize,
    pub max_simplex_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NnDefaults {
    pub orders: usize,
    pub mc_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraDefaults {
    pub a_par_14n_mhz: f64,
    pub a_perp_14n_mhz: f64,
    pub q_14n_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Surface {
    pub sigma_b_um2: f64,
    pub gamma_b_mhz: f64,
    pub h_nm: f64,
}

impl Surface {
    pub fn bath(&self) -> SurfaceBath {
        SurfaceBath { sigma_b: self.sigma_b_um2, gamma_b: self.gamma_b_mhz, h: self.h_nm }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snr {
    pub a_per_um2: f64,
    pub b: f64,
    pub t_i_hours: f64,
    pub delta_sigma_b_um2: f64,
    pub h_nm: f64,
    pub d_nv_nm: f64,
}

impl Snr {
    pub fn model(&self) -> SnrModel {
        SnrModel {
            a: self.a_per_um2,
            b: self.b,
            t_i_hours: self.t_i_hours,
            delta_sigma_b: self.delta_sigma_b_um2,
            h_nm: self.h_nm,
            d_nv_nm: self.d_nv_nm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityDefaults {
    pub tau_min_us: f64,
    pub tau_max_us: f64,
    pub d_nv_nm: Vec<f64>,
    pub sigma_t_um2: Vec<f64>,
    pub bare: Surface,
    pub coated: Surface,
    pub snr: Snr,
    pub snr_sigma_t_um2: f64,
    pub dense_nv_factor: f64,
}

impl Defaults {
    pub fn builtin() -> Self {
        serde_json::from_str(BUILTIN).expect("bundled defaults parse")
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::builtin()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn physical_constants(&self) -> Result<PhysicalConstants, CliError> {
        let c = &self.constants;
        Ok(PhysicalConstants::new(
            c.mu0_over_4pi_t_m_per_a,
            c.hbar_j_s,
            TWO_PI * c.gamma_electron_hz_per_t,
            c.gamma_electron_mhz_per_g,
            c.mu_bohr_j_per_t,
        )?)
    }

    pub fn axis(&self) -> Result<NvAxis, CliError> {
        let (b, p) = (self.nv_axis.tilt_rad, self.nv_axis.azimuth_rad);
        if p == 0.0 {
            return Ok(NvAxis::tilted(b));
        }
        Ok(NvAxis::new([b.sin() * p.cos(), b.sin() * p.sin(), b.cos()])?)
    }

    pub fn w_config(&self, rel_tol: Option<f64>) -> Result<WConfig, CliError> {
        let w = &self.w_integral;
        Ok(WConfig {
            axis: self.axis()?,
            constants: self.physical_constants()?,
            rel_tol: rel_tol.unwrap_or(w.rel_tol),
            r_min_fraction: w.r_min_fraction,
            r_max: None,
            tail_tol: w.tail_tol,
            azimuth_nodes: w.azimuth_nodes,
            azimuth_tol: w.azimuth_tol,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use darkspin::spectra::{DERIVED_A_PAR_14N, DERIVED_A_PERP_14N};

    #[test]
    fn builtin_matches_library_defaults() {
        let d = Defaults::builtin();
        assert_eq!(d.physical_constants().unwrap(), PhysicalConstants::default());
        assert_eq!(d.axis().unwrap(), NvAxis::default());
        assert_eq!(d.w_config(None).unwrap(), WConfig::default());
        assert_eq!(d.spectra.a_par_14n_mhz, DERIVED_A_PAR_14N);
        assert!((d.spectra.a_perp_14n_mhz - DERIVED_A_PERP_14N).abs() < 1e-12);
        assert_eq!(d.sensitivity.bare.bath(), darkspin::sensitivity::BARE);
        assert_eq!(d.sensitivity.coated.bath(), darkspin::sensitivity::COATED);
        assert_eq!(d.sensitivity.snr.model(), SnrModel::reference());
    }
}
