//! Discrete-time PI laser-power controller.
//!
//! Backward-Euler realization of the PI law at the 10 µs sample period, with
//! output clamping to the laser's power limits and conditional-integration
//! anti-windup: the integral only accumulates while the raw output is inside
//! the clamp range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The decision vector of the tuning problem: proportional gain in W/mV and
/// integral gain in W/(mV·s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub kp: f64,
    pub ki: f64,
}

impl ControllerGains {
    pub fn new(kp: f64, ki: f64) -> Self {
        ControllerGains { kp, ki }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.kp.is_finite() || !self.ki.is_finite() || self.kp < 0.0 || self.ki < 0.0 {
            return Err(Error::config(format!(
                "controller gains must be finite and nonnegative, got kp={} ki={}",
                self.kp, self.ki
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// Emission setpoint in mV.
    pub reference_mv: f64,
    /// Lower laser power limit (laser off).
    pub u_min_w: f64,
    /// Upper laser power limit; 300 W keeps any gain setting inside the
    /// stable process range.
    pub u_max_w: f64,
    pub sample_dt_s: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            reference_mv: 80.0,
            u_min_w: 0.0,
            u_max_w: 300.0,
            sample_dt_s: 1e-5,
        }
    }
}

impl ControllerConfig {
    pub fn with_reference(reference_mv: f64) -> Self {
        ControllerConfig {
            reference_mv,
            ..ControllerConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reference_mv <= 0.0 || !self.reference_mv.is_finite() {
            return Err(Error::config(format!(
                "reference_mv must be positive, got {}",
                self.reference_mv
            )));
        }
        if self.u_min_w < 0.0 || self.u_max_w <= self.u_min_w || !self.u_min_w.is_finite() || !self.u_max_w.is_finite() {
            return Err(Error::config(format!(
                "power limits must satisfy 0 <= u_min < u_max, got [{}, {}]",
                self.u_min_w, self.u_max_w
            )));
        }
        if self.sample_dt_s <= 0.0 || !self.sample_dt_s.is_finite() {
            return Err(Error::config(format!(
                "sample_dt_s must be positive, got {}",
                self.sample_dt_s
            )));
        }
        Ok(())
    }
}

/// PI controller instance; state is the error integral in mV·s.
#[derive(Debug, Clone)]
pub struct PiController {
    gains: ControllerGains,
    config: ControllerConfig,
    integral_mvs: f64,
}

impl PiController {
    pub fn new(gains: ControllerGains, config: ControllerConfig) -> Result<Self> {
        gains.validate()?;
        config.validate()?;
        Ok(PiController {
            gains,
            config,
            integral_mvs: 0.0,
        })
    }

    pub fn gains(&self) -> ControllerGains {
        self.gains
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn integral_mvs(&self) -> f64 {
        self.integral_mvs
    }

    /// Clears the integral. Idempotent.
    pub fn reset(&mut self) {
        self.integral_mvs = 0.0;
    }

    /// One control step: returns the clamped power command for the given
    /// emission measurement. The integral is frozen while the raw command is
    /// outside the clamp range.
    pub fn step(&mut self, measurement_mv: f64) -> Result<f64> {
        if !measurement_mv.is_finite() {
            return Err(Error::numerical(format!(
                "controller fed non-finite measurement: {measurement_mv}"
            )));
        }
        let error = self.config.reference_mv - measurement_mv;
        let candidate = self.integral_mvs + error * self.config.sample_dt_s;
        let u_raw = self.gains.kp * error + self.gains.ki * candidate;
        if u_raw >= self.config.u_min_w && u_raw <= self.config.u_max_w {
            self.integral_mvs = candidate;
            Ok(u_raw)
        } else {
            Ok(u_raw.clamp(self.config.u_min_w, self.config.u_max_w))
        }
    }
}
