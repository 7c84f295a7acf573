//! Bayesian-optimization tuning loop.
//!
//! Proposes controller gains, evaluates them through a closed-loop exposure
//! and the composite cost, feeds the observation to the GP surrogate, and
//! repeats for a fixed iteration budget. Acquisition is a lower confidence
//! bound for minimization, maximized over a dense grid in normalized gain
//! space followed by local refinement passes with halved spacing.

use serde::{Deserialize, Serialize};

use crate::closedloop::TuningRig;
use crate::config::RunConfig;
use crate::controller::ControllerGains;
use crate::cost::{composite_cost, CostBreakdown, CostConfig};
use crate::error::{Error, Result};
use crate::gp::{GpConfig, GpModel};

/// Coordinate convention for the GP inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputScaling {
    /// Gains mapped to the unit square on a log10 scale; costs divided by
    /// the first observed cost. Gains act multiplicatively across decades,
    /// so this is the scale on which the cost surface is smooth.
    LogNormalized,
    /// Gains affinely mapped to the unit square; costs divided by the first
    /// observed cost.
    Normalized,
    /// Raw gain units and costs divided by `raw_output_scale`.
    Raw,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoConfig {
    pub kp_bounds: (f64, f64),
    pub ki_bounds: (f64, f64),
    /// LCB exploration weight on the posterior standard deviation.
    pub beta: f64,
    pub n_iterations: usize,
    pub init: ControllerGains,
    /// Candidate grid resolution per dimension.
    pub candidate_grid: usize,
    /// Number of refinement passes, each halving the grid spacing around
    /// the incumbent.
    pub refine_steps: usize,
    pub input_scaling: InputScaling,
    pub raw_output_scale: f64,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            kp_bounds: (1.0, 100.0),
            ki_bounds: (100.0, 1.6e6),
            beta: 2.0,
            n_iterations: 200,
            init: ControllerGains::new(1.0, 100.0),
            candidate_grid: 101,
            refine_steps: 1,
            input_scaling: InputScaling::LogNormalized,
            raw_output_scale: 200.0,
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("kp", self.kp_bounds), ("ki", self.ki_bounds)] {
            if lo >= hi || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::config(format!(
                    "{name} bounds must be finite with lo < hi, got ({lo}, {hi})"
                )));
            }
            if self.input_scaling == InputScaling::LogNormalized && lo <= 0.0 {
                return Err(Error::config(format!(
                    "{name} lower bound must be positive for log-scaled inputs, got {lo}"
                )));
            }
        }
        if self.beta <= 0.0 || !self.beta.is_finite() {
            return Err(Error::config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.n_iterations == 0 {
            return Err(Error::config("n_iterations must be at least 1"));
        }
        if self.candidate_grid < 2 {
            return Err(Error::config("candidate_grid must be at least 2"));
        }
        if self.raw_output_scale <= 0.0 || !self.raw_output_scale.is_finite() {
            return Err(Error::config("raw_output_scale must be positive"));
        }
        let n = self.normalize(self.init);
        if n.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::config(format!(
                "init gains ({}, {}) outside bounds",
                self.init.kp, self.init.ki
            )));
        }
        Ok(())
    }

    /// Maps gains into the unit candidate square (the acquisition search
    /// space), on the configured scale.
    pub fn normalize(&self, gains: ControllerGains) -> [f64; 2] {
        let axis = |v: f64, (lo, hi): (f64, f64)| match self.input_scaling {
            InputScaling::LogNormalized => (v.ln() - lo.ln()) / (hi.ln() - lo.ln()),
            InputScaling::Normalized | InputScaling::Raw => (v - lo) / (hi - lo),
        };
        [
            axis(gains.kp, self.kp_bounds),
            axis(gains.ki, self.ki_bounds),
        ]
    }

    /// Inverse of [`BoConfig::normalize`]; endpoints map exactly onto the
    /// bounds and interior points are clamped so the log-scale round trip
    /// cannot overshoot by a rounding ulp.
    pub fn denormalize(&self, p: [f64; 2]) -> ControllerGains {
        let axis = |t: f64, (lo, hi): (f64, f64)| {
            if t <= 0.0 {
                return lo;
            }
            if t >= 1.0 {
                return hi;
            }
            let v = match self.input_scaling {
                InputScaling::LogNormalized => (lo.ln() + t * (hi.ln() - lo.ln())).exp(),
                InputScaling::Normalized | InputScaling::Raw => lo + t * (hi - lo),
            };
            v.clamp(lo, hi)
        };
        ControllerGains::new(axis(p[0], self.kp_bounds), axis(p[1], self.ki_bounds))
    }

    /// GP input coordinates for a unit-square candidate.
    fn model_coords(&self, p: [f64; 2]) -> [f64; 2] {
        match self.input_scaling {
            InputScaling::LogNormalized | InputScaling::Normalized => p,
            InputScaling::Raw => {
                let g = self.denormalize(p);
                [g.kp, g.ki]
            }
        }
    }
}

/// One tuning evaluation as recorded in the history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub gains: ControllerGains,
    pub cost: CostBreakdown,
    /// GP posterior at the chosen point before this observation was added.
    pub predicted_mean: f64,
    pub predicted_var: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BoHistory {
    pub records: Vec<IterationRecord>,
    /// Running minimum of the observed total cost; nonincreasing.
    pub best_so_far: Vec<f64>,
}

impl BoHistory {
    fn push(&mut self, record: IterationRecord) {
        let best = match self.best_so_far.last() {
            Some(&b) => b.min(record.cost.total),
            None => record.cost.total,
        };
        self.records.push(record);
        self.best_so_far.push(best);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Serialized GP observation for the resume file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpObservation {
    pub kp: f64,
    pub ki: f64,
    pub standardized_cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_gains: ControllerGains,
    pub best_cost: CostBreakdown,
    pub best_iteration: usize,
    pub history: BoHistory,
    /// Everything needed to rebuild the surrogate: observations in gain
    /// units plus the cost standardization scale.
    pub gp_observations: Vec<GpObservation>,
    pub cost_scale: f64,
}

/// A tuning run that aborted partway; the history up to the failure is
/// preserved so it can still be flushed to disk.
#[derive(Debug)]
pub struct TuneFailure {
    pub error: Error,
    pub partial: BoHistory,
}

impl From<Error> for TuneFailure {
    fn from(error: Error) -> Self {
        TuneFailure {
            error,
            partial: BoHistory::default(),
        }
    }
}

/// Maximizes the LCB acquisition `-mean + beta * sd` over the candidate
/// grid, then refines around the incumbent with halved spacing. Ties break
/// toward the lexicographically lowest normalized coordinates, so an empty
/// model proposes the lower corner of the gain box.
pub fn acquire(model: &GpModel, cfg: &BoConfig) -> [f64; 2] {
    let n = cfg.candidate_grid;
    let step = 1.0 / (n - 1) as f64;
    let acq = |p: [f64; 2]| {
        let (mean, var) = model.posterior(cfg.model_coords(p));
        -mean + cfg.beta * var.sqrt()
    };
    let mut best_p = [0.0, 0.0];
    let mut best_a = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            let p = [i as f64 * step, j as f64 * step];
            let a = acq(p);
            if a > best_a {
                best_a = a;
                best_p = p;
            }
        }
    }
    let mut spacing = step;
    for _ in 0..cfg.refine_steps {
        spacing /= 2.0;
        let center = best_p;
        for di in -2i32..=2 {
            for dj in -2i32..=2 {
                let p = [
                    (center[0] + di as f64 * spacing).clamp(0.0, 1.0),
                    (center[1] + dj as f64 * spacing).clamp(0.0, 1.0),
                ];
                let a = acq(p);
                if a > best_a {
                    best_a = a;
                    best_p = p;
                }
            }
        }
    }
    best_p
}

/// Runs the tuning loop: the initial gains are evaluated first, then every
/// further point comes from the acquisition step. Returns the gains with
/// the minimum observed total cost along with the full history.
pub fn tune<F>(
    mut objective: F,
    bo_cfg: &BoConfig,
    gp_cfg: &GpConfig,
) -> std::result::Result<TuneResult, TuneFailure>
where
    F: FnMut(ControllerGains) -> Result<CostBreakdown>,
{
    bo_cfg.validate()?;
    gp_cfg.validate()?;
    let mut model = GpModel::new(gp_cfg)?;
    let mut history = BoHistory::default();
    let mut observations = Vec::with_capacity(bo_cfg.n_iterations);
    let mut cost_scale: Option<f64> = None;
    let mut best: Option<(usize, ControllerGains, CostBreakdown)> = None;

    for iteration in 0..bo_cfg.n_iterations {
        let p = if iteration == 0 {
            bo_cfg.normalize(bo_cfg.init)
        } else {
            acquire(&model, bo_cfg)
        };
        let gains = bo_cfg.denormalize(p);
        let coords = bo_cfg.model_coords(p);
        let (predicted_mean, predicted_var) = model.posterior(coords);

        let cost = match objective(gains) {
            Ok(c) => c,
            Err(error) => {
                return Err(TuneFailure {
                    error,
                    partial: history,
                })
            }
        };

        let standardized = match bo_cfg.input_scaling {
            InputScaling::LogNormalized | InputScaling::Normalized => {
                let scale = *cost_scale
                    .get_or_insert(if cost.total.abs() > 0.0 { cost.total } else { 1.0 });
                cost.total / scale
            }
            InputScaling::Raw => {
                cost_scale.get_or_insert(bo_cfg.raw_output_scale);
                cost.total / bo_cfg.raw_output_scale
            }
        };
        if let Err(error) = model.add(coords, standardized) {
            return Err(TuneFailure {
                error,
                partial: history,
            });
        }
        observations.push(GpObservation {
            kp: gains.kp,
            ki: gains.ki,
            standardized_cost: standardized,
        });
        history.push(IterationRecord {
            iteration,
            gains,
            cost,
            predicted_mean,
            predicted_var,
        });
        let better = match &best {
            Some((_, _, b)) => cost.total < b.total,
            None => true,
        };
        if better {
            best = Some((iteration, gains, cost));
        }
    }

    let (best_iteration, best_gains, best_cost) = best.expect("n_iterations >= 1");
    Ok(TuneResult {
        best_gains,
        best_cost,
        best_iteration,
        history,
        gp_observations: observations,
        cost_scale: cost_scale.unwrap_or(1.0),
    })
}

/// Offline tuning: bare plate, 30 mV reference, ~3 s iteration gap.
pub fn run_offline_tuning(rc: &RunConfig) -> std::result::Result<TuneResult, TuneFailure> {
    let rig = TuningRig::offline(
        rc.plant.plate.clone(),
        rc.controller_config(rc.controller.offline_reference_mv),
        rc.seed,
    )?;
    tune_with_rig(rig, &rc.cost, &rc.bo, &rc.gp)
}

/// Online tuning: powder wall, 60 mV reference, 13 s recoat per iteration.
pub fn run_online_tuning(rc: &RunConfig) -> std::result::Result<TuneResult, TuneFailure> {
    let rig = TuningRig::online(
        rc.plant.powder.clone(),
        rc.controller_config(rc.controller.online_reference_mv),
        rc.seed,
    )?;
    tune_with_rig(rig, &rc.cost, &rc.bo, &rc.gp)
}

fn tune_with_rig(
    mut rig: TuningRig,
    cost_cfg: &CostConfig,
    bo_cfg: &BoConfig,
    gp_cfg: &GpConfig,
) -> std::result::Result<TuneResult, TuneFailure> {
    let cost_cfg = cost_cfg.clone();
    tune(
        move |gains| {
            let trace = rig.run_iteration(gains)?;
            composite_cost(&trace, &cost_cfg)
        },
        bo_cfg,
        gp_cfg,
    )
}
