//! Run configuration: one TOML file drives tuning runs, wedge builds, and
//! analyses. Unknown keys are rejected so typos fail loudly; every omitted
//! key falls back to the calibrated default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::ProcessWindow;
use crate::bo::BoConfig;
use crate::controller::ControllerConfig;
use crate::cost::CostConfig;
use crate::error::{Error, Result};
use crate::gp::GpConfig;
use crate::plant::PlantConfig;
use crate::scanpath::WedgeGeometry;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantSection {
    pub plate: PlantConfig,
    pub powder: PlantConfig,
}

impl Default for PlantSection {
    fn default() -> Self {
        PlantSection {
            plate: PlantConfig::plate(),
            powder: PlantConfig::powder(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    pub u_min_w: f64,
    pub u_max_w: f64,
    pub sample_dt_s: f64,
    /// Setpoint for plate tuning exposures.
    pub offline_reference_mv: f64,
    /// Setpoint for powder-wall tuning exposures.
    pub online_reference_mv: f64,
    /// Setpoint for wedge evaluation builds.
    pub wedge_reference_mv: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        ControllerSection {
            u_min_w: 0.0,
            u_max_w: 300.0,
            sample_dt_s: 1e-5,
            offline_reference_mv: 30.0,
            online_reference_mv: 60.0,
            wedge_reference_mv: 80.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub plant: PlantSection,
    pub controller: ControllerSection,
    pub cost: CostConfig,
    pub gp: GpConfig,
    pub bo: BoConfig,
    pub geometry: WedgeGeometry,
    pub process_window: ProcessWindow,
    /// Layer whose per-sample band map is exported (1-based).
    pub evaluation_layer: usize,
    /// Recoat duration applied after each printed layer.
    pub recoat_s: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("runs"),
            plant: PlantSection::default(),
            controller: ControllerSection::default(),
            cost: CostConfig::default(),
            gp: GpConfig::default(),
            bo: BoConfig::default(),
            geometry: WedgeGeometry::default(),
            process_window: ProcessWindow::default(),
            evaluation_layer: 90,
            recoat_s: crate::closedloop::RECOAT_S,
        }
    }
}

impl RunConfig {
    /// Reads and validates a config file. A missing or malformed file is a
    /// configuration error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::config(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.plate.validate()?;
        self.plant.powder.validate()?;
        self.cost.validate()?;
        self.gp.validate()?;
        self.bo.validate()?;
        self.geometry.validate()?;
        self.process_window.validate()?;
        for reference in [
            self.controller.offline_reference_mv,
            self.controller.online_reference_mv,
            self.controller.wedge_reference_mv,
        ] {
            self.controller_config(reference).validate()?;
        }
        if self.evaluation_layer == 0 {
            return Err(Error::config("evaluation_layer is 1-based and must be >= 1"));
        }
        if self.recoat_s < 0.0 || self.recoat_s.is_nan() {
            return Err(Error::config("recoat_s must be nonnegative"));
        }
        Ok(())
    }

    pub fn controller_config(&self, reference_mv: f64) -> ControllerConfig {
        ControllerConfig {
            reference_mv,
            u_min_w: self.controller.u_min_w,
            u_max_w: self.controller.u_max_w,
            sample_dt_s: self.controller.sample_dt_s,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn default_roundtrips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.seed, cfg.seed);
        assert_eq!(back.controller.wedge_reference_mv, 80.0);
        assert_eq!(back.bo.n_iterations, 200);
        assert_eq!(back.cost.c_mse, 500.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "seed = 1\nnot_a_key = 5\n";
        assert!(toml::from_str::<RunConfig>(text).is_err());
        let nested = "[cost]\nc_mse = 500.0\nmystery = 1\n";
        assert!(toml::from_str::<RunConfig>(nested).is_err());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let text = "seed = 9\n[bo]\nn_iterations = 5\n";
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.bo.n_iterations, 5);
        assert_eq!(cfg.bo.beta, 2.0);
        assert_eq!(cfg.plant.plate.gain_mv_per_w, 0.15);
        assert_eq!(cfg.plant.powder.gain_mv_per_w, 0.30);
    }

    #[test]
    fn shipped_template_matches_defaults() {
        let text = include_str!("../config/default.toml");
        let cfg: RunConfig = toml::from_str(text).unwrap();
        cfg.validate().unwrap();
        let defaults = RunConfig::default();
        assert_eq!(
            toml::to_string(&cfg).unwrap(),
            toml::to_string(&defaults).unwrap(),
            "config/default.toml drifted from the built-in defaults"
        );
    }

    #[test]
    fn missing_file_is_config_error() {
        let err = RunConfig::load(Path::new("/nonexistent/melttune.toml")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert_eq!(err.exit_code(), 2);
    }
}
