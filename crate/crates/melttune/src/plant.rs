//! Simulated melt-pool emission plant.
//!
//! Discrete-time stand-in for the physical process: the pyrometer emission
//! (mV) follows the commanded laser power (W) through a first-order lag,
//! while a slow preheat accumulator models in-layer heat build-up. Preheat
//! raises the emission floor additively and amplifies the power-to-emission
//! gain multiplicatively, so an uncontrolled exposure on a heat-accumulating
//! geometry drifts visibly above its nominal emission while a controlled one
//! sheds laser power to hold the reference.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the laser is firing at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubstrateKind {
    /// Bare metal plate (offline tuning target).
    Plate,
    /// Powder layer (online tuning and part printing).
    Powder,
}

/// Plant parameters. Defaults are calibrated so that roughly 200 W of steady
/// laser power reads 30 mV on plate and 60 mV on powder.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    pub substrate: SubstrateKind,
    /// Steady-state emission per Watt of laser power, before preheat boost.
    pub gain_mv_per_w: f64,
    /// First-order emission (melt-pool formation) time constant.
    pub tau_rise_s: f64,
    /// Preheat decay time constant (laser off or between vectors).
    pub tau_cool_s: f64,
    /// Preheat deposited per mV·s of emission above ambient.
    pub preheat_coupling_per_s: f64,
    /// Preheat level (mV) that doubles the effective power-to-emission gain.
    pub preheat_gain_scale_mv: f64,
    /// Exponent of the (ref_len / vector_len) deposition concentration
    /// factor; short hatch vectors are revisited sooner and concentrate heat.
    pub heat_concentration_exp: f64,
    /// Vector length at which the concentration factor is exactly 1.
    pub heat_concentration_ref_mm: f64,
    /// Upper bound on the concentration factor; heat conduction saturates
    /// the revisit effect for the shortest strikes.
    pub heat_concentration_cap: f64,
    /// Preheat carrying capacity: deposition scales by (1 - preheat/capacity)
    /// so stored heat saturates instead of running away.
    pub preheat_capacity_mv: f64,
    /// Per-sample gaussian process noise on the emission state.
    pub noise_std_mv: f64,
    /// Emission with the laser off and no preheat.
    pub ambient_mv: f64,
    /// Sample period; 1e-5 s (100 kHz) matches the sensor and controller.
    pub sample_dt_s: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self::powder()
    }
}

impl PlantConfig {
    pub fn plate() -> Self {
        PlantConfig {
            substrate: SubstrateKind::Plate,
            gain_mv_per_w: 0.15,
            ..PlantConfig::base()
        }
    }

    pub fn powder() -> Self {
        PlantConfig {
            substrate: SubstrateKind::Powder,
            gain_mv_per_w: 0.30,
            ..PlantConfig::base()
        }
    }

    fn base() -> Self {
        PlantConfig {
            substrate: SubstrateKind::Powder,
            gain_mv_per_w: 0.30,
            tau_rise_s: 5e-4,
            tau_cool_s: 2.0,
            preheat_coupling_per_s: 0.10,
            preheat_gain_scale_mv: 20.0,
            heat_concentration_exp: 4.0,
            heat_concentration_ref_mm: 10.0,
            heat_concentration_cap: 1000.0,
            preheat_capacity_mv: 105.0,
            noise_std_mv: 1.0,
            ambient_mv: 0.0,
            sample_dt_s: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gain_mv_per_w", self.gain_mv_per_w),
            ("tau_rise_s", self.tau_rise_s),
            ("tau_cool_s", self.tau_cool_s),
            ("preheat_gain_scale_mv", self.preheat_gain_scale_mv),
            ("heat_concentration_ref_mm", self.heat_concentration_ref_mm),
            ("heat_concentration_cap", self.heat_concentration_cap),
            ("preheat_capacity_mv", self.preheat_capacity_mv),
            ("sample_dt_s", self.sample_dt_s),
        ];
        for (name, v) in positive {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::config(format!("plant {name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("preheat_coupling_per_s", self.preheat_coupling_per_s),
            ("heat_concentration_exp", self.heat_concentration_exp),
            ("noise_std_mv", self.noise_std_mv),
            ("ambient_mv", self.ambient_mv),
        ];
        for (name, v) in nonneg {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::config(format!("plant {name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }

    /// Noise-free steady-state emission under constant power with a frozen
    /// preheat level.
    pub fn steady_state_mv(&self, power_w: f64, preheat_mv: f64) -> f64 {
        let boost = 1.0 + preheat_mv / self.preheat_gain_scale_mv;
        self.gain_mv_per_w * power_w * boost + preheat_mv + self.ambient_mv
    }
}

/// Mutable plant state: emission, preheat, and the seeded noise stream.
#[derive(Debug, Clone)]
pub struct Plant {
    config: PlantConfig,
    emission_mv: f64,
    preheat_mv: f64,
    concentration: f64,
    // Precomputed per-step constants.
    alpha_rise: f64,
    cool_per_step: f64,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl Plant {
    /// Resets the plant to ambient with a freshly seeded noise stream.
    pub fn new(config: PlantConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let noise = if config.noise_std_mv > 0.0 {
            Some(Normal::new(0.0, config.noise_std_mv).expect("validated std"))
        } else {
            None
        };
        Ok(Plant {
            emission_mv: config.ambient_mv,
            preheat_mv: 0.0,
            concentration: 1.0,
            alpha_rise: config.sample_dt_s / config.tau_rise_s,
            cool_per_step: (-config.sample_dt_s / config.tau_cool_s).exp(),
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
            config,
        })
    }

    pub fn config(&self) -> &PlantConfig {
        &self.config
    }

    pub fn emission_mv(&self) -> f64 {
        self.emission_mv
    }

    pub fn preheat_mv(&self) -> f64 {
        self.preheat_mv
    }

    pub fn sample_dt_s(&self) -> f64 {
        self.config.sample_dt_s
    }

    /// Restarts the noise stream without touching the thermal state. Tuning
    /// procedures reseed per iteration so each evaluation's noise depends
    /// only on the master seed and the iteration index.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Sets the heat-concentration factor for the vector about to be
    /// exposed: (ref_len / len)^exp, clamped to [1, cap].
    pub fn begin_vector(&mut self, length_mm: f64) {
        let ratio = (self.config.heat_concentration_ref_mm / length_mm).max(1.0);
        self.concentration = ratio
            .powf(self.config.heat_concentration_exp)
            .min(self.config.heat_concentration_cap);
    }

    /// Advances one sample under `power_w` and returns the new emission.
    ///
    /// The emission relaxes toward
    /// `gain·power·(1 + preheat/scale) + preheat + ambient` with time
    /// constant `tau_rise_s`, plus gaussian noise, clamped at zero. Preheat
    /// then decays by one sample of `tau_cool_s` and integrates the
    /// above-ambient emission scaled by the coupling, the concentration
    /// factor, and the remaining capacity headroom.
    pub fn step(&mut self, power_w: f64) -> f64 {
        let cfg = &self.config;
        let boost = 1.0 + self.preheat_mv / cfg.preheat_gain_scale_mv;
        let target = cfg.gain_mv_per_w * power_w * boost + self.preheat_mv + cfg.ambient_mv;
        let noise = match &self.noise {
            Some(dist) => dist.sample(&mut self.rng),
            None => 0.0,
        };
        self.emission_mv += self.alpha_rise * (target - self.emission_mv) + noise;
        if self.emission_mv < 0.0 {
            self.emission_mv = 0.0;
        }
        let headroom = (1.0 - self.preheat_mv / cfg.preheat_capacity_mv).max(0.0);
        let deposit = cfg.preheat_coupling_per_s
            * self.concentration
            * headroom
            * (self.emission_mv - cfg.ambient_mv).max(0.0)
            * cfg.sample_dt_s;
        self.preheat_mv = self.preheat_mv * self.cool_per_step + deposit;
        self.emission_mv
    }

    /// Long laser-off interval (recoating, the gap between tuning
    /// iterations): preheat decays by `exp(-seconds/tau_cool)` and the
    /// emission returns to ambient.
    pub fn recoat(&mut self, seconds: f64) {
        let seconds = seconds.max(0.0);
        self.preheat_mv *= (-seconds / self.config.tau_cool_s).exp();
        self.emission_mv = self.config.ambient_mv;
    }

    /// Short laser-off interval (scanner turnaround between hatch vectors):
    /// the closed form of stepping the plant at zero power with the noise
    /// off. Preheat decays on `tau_cool`; the emission relaxes toward the
    /// preheated surface glow (ambient + preheat) on `tau_rise`, so the next
    /// vector starts warm on a heat-soaked part.
    pub fn travel(&mut self, seconds: f64) {
        let seconds = seconds.max(0.0);
        let p0 = self.preheat_mv;
        self.preheat_mv *= (-seconds / self.config.tau_cool_s).exp();
        let floor = self.config.ambient_mv + self.preheat_mv;
        let excess = self.emission_mv - self.config.ambient_mv - p0;
        self.emission_mv = floor + excess * (-seconds / self.config.tau_rise_s).exp();
        if self.emission_mv < 0.0 {
            self.emission_mv = 0.0;
        }
    }
}
