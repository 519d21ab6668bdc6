//! JSON run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{DephasingParams, FitOptions, Params3};
use crate::model::{DeviceParams, EnvironmentSpectrum, TankParams};
use crate::sweep::{SweepGrid, SweepOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub device: DeviceParams,
    #[serde(default)]
    pub tank: TankParams,
    pub environment: EnvironmentSpectrum,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub fit: FitSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub ng_min: f64,
    pub ng_max: f64,
    pub ng_steps: usize,
    pub amp_min: f64,
    pub amp_max: f64,
    pub amp_steps: usize,
    #[serde(default)]
    pub m_max: Option<u32>,
    #[serde(default)]
    pub diagnostics: bool,
}

impl SweepSection {
    pub fn grid(&self) -> SweepGrid {
        SweepGrid {
            ng_min: self.ng_min,
            ng_max: self.ng_max,
            ng_steps: self.ng_steps,
            amp_min: self.amp_min,
            amp_max: self.amp_max,
            amp_steps: self.amp_steps,
        }
    }

    pub fn options(&self) -> SweepOptions {
        SweepOptions {
            m_max: self.m_max,
            diagnostics: self.diagnostics,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub init: Params3,
    pub init_dephasing: DephasingParams,
    pub max_evals: usize,
    pub restarts: usize,
    /// Slice indices to fit; all slices when absent.
    pub slices: Option<Vec<usize>>,
}

impl Default for FitSection {
    fn default() -> Self {
        let o = FitOptions::default();
        Self {
            init: Params3 {
                s_phi0: 1e6,
                s_rel: 1e6,
                s_ohmic: 1e6,
            },
            init_dephasing: DephasingParams {
                s_x0: 1e5,
                s_x_mu: 1e5,
            },
            max_evals: o.max_evals,
            restarts: o.restarts,
            slices: None,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.device.tank = cfg.tank;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.device.validate().map_err(wrap)?;
        self.environment.validate().map_err(wrap)?;
        if let Some(s) = &self.sweep {
            s.grid().validate().map_err(wrap)?;
        }
        if self.fit.max_evals == 0 {
            return Err(Error::Config("fit.max_evals must be > 0".into()));
        }
        Ok(())
    }

    pub fn sweep(&self) -> Result<&SweepSection> {
        self.sweep.as_ref().ok_or_else(|| Error::Config("config has no \"sweep\" section".into()))
    }
}
