//! In-layer control loop execution.
//!
//! Runs the per-sample plant/controller interaction with exactly one sample
//! of loop delay (the command computed from sample k is applied at sample
//! k+1), composes vectors into tuning iterations, and prints whole wedge
//! builds.

use crate::controller::{ControllerConfig, ControllerGains, PiController};
use crate::error::{Error, Result};
use crate::plant::{Plant, PlantConfig};
use crate::scanpath::{tuning_vector, ScanVector, WedgeGeometry, NOMINAL_POWER_W};

/// Pause between offline tuning iterations (parameter update overhead).
pub const OFFLINE_ITERATION_GAP_S: f64 = 3.0;
/// Powder recoating time after an online iteration or a finished layer.
pub const RECOAT_S: f64 = 13.0;

/// Recorded time series of one exposed vector: commanded power and measured
/// emission, same length, one row per 10 µs sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub dt_s: f64,
    pub reference_mv: f64,
    pub u_w: Vec<f64>,
    pub y_mv: Vec<f64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.y_mv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_mv.is_empty()
    }
}

/// All traces of a printed geometry, layer by layer, vector order preserved.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BuildRecord {
    pub layers: Vec<Vec<(ScanVector, Trace)>>,
}

/// How the laser power is chosen during an exposure.
#[derive(Debug, Clone, Copy)]
pub enum ExposureMode {
    /// Closed-loop PI control toward the configured reference.
    Controlled(ControllerGains),
    /// Open-loop constant power (the uncontrolled baseline).
    FixedPower(f64),
}

fn check_dt(plant: &Plant, ctrl_cfg: &ControllerConfig) -> Result<()> {
    let dp = plant.sample_dt_s();
    let dc = ctrl_cfg.sample_dt_s;
    if (dp - dc).abs() > 1e-12 * dp.max(dc) {
        return Err(Error::config(format!(
            "plant sample period {dp} does not match controller sample period {dc}"
        )));
    }
    Ok(())
}

/// Exposes one vector under PI control and records the trace.
///
/// The applied power at sample k is the command from sample k-1; the first
/// sample is exposed at `u_min`. The controller integral persists across the
/// vector; callers reset it between vectors.
pub fn expose_vector(plant: &mut Plant, pi: &mut PiController, vector: &ScanVector) -> Result<Trace> {
    check_dt(plant, pi.config())?;
    let n = vector.sample_count(plant.sample_dt_s());
    plant.begin_vector(vector.length_mm);
    let mut u_w = Vec::with_capacity(n);
    let mut y_mv = Vec::with_capacity(n);
    let mut applied = pi.config().u_min_w;
    for _ in 0..n {
        let y = plant.step(applied);
        if !y.is_finite() {
            return Err(Error::numerical("non-finite emission in control loop"));
        }
        let u = pi.step(y)?;
        y_mv.push(y);
        u_w.push(u);
        applied = u;
    }
    Ok(Trace {
        dt_s: plant.sample_dt_s(),
        reference_mv: pi.config().reference_mv,
        u_w,
        y_mv,
    })
}

/// Exposes one vector at constant power (controller bypassed).
pub fn expose_vector_constant(
    plant: &mut Plant,
    vector: &ScanVector,
    power_w: f64,
    ctrl_cfg: &ControllerConfig,
) -> Result<Trace> {
    if !power_w.is_finite() || power_w < ctrl_cfg.u_min_w || power_w > ctrl_cfg.u_max_w {
        return Err(Error::config(format!(
            "fixed power {power_w} outside [{}, {}] W",
            ctrl_cfg.u_min_w, ctrl_cfg.u_max_w
        )));
    }
    let n = vector.sample_count(plant.sample_dt_s());
    plant.begin_vector(vector.length_mm);
    let mut u_w = Vec::with_capacity(n);
    let mut y_mv = Vec::with_capacity(n);
    for _ in 0..n {
        let y = plant.step(power_w);
        if !y.is_finite() {
            return Err(Error::numerical("non-finite emission in open-loop exposure"));
        }
        y_mv.push(y);
        u_w.push(power_w);
    }
    Ok(Trace {
        dt_s: plant.sample_dt_s(),
        reference_mv: ctrl_cfg.reference_mv,
        u_w,
        y_mv,
    })
}

/// Deterministic per-iteration seed derivation (splitmix64 over the master
/// seed, a stream id, and an index).
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A tuning setup: one persistent plant exposed with a fresh controller per
/// iteration, with the laser-off gap applied after each exposure. Preheat
/// carries over between iterations; the noise stream is reseeded per
/// iteration from the master seed.
pub struct TuningRig {
    plant: Plant,
    ctrl_cfg: ControllerConfig,
    gap_s: f64,
    master_seed: u64,
    stream: u64,
    iteration: u64,
}

impl TuningRig {
    /// Bare-plate rig: 30 mV reference, ~3 s between iterations.
    pub fn offline(plant_cfg: PlantConfig, ctrl_cfg: ControllerConfig, seed: u64) -> Result<Self> {
        ctrl_cfg.validate()?;
        Ok(TuningRig {
            plant: Plant::new(plant_cfg, derive_seed(seed, 1, 0))?,
            ctrl_cfg,
            gap_s: OFFLINE_ITERATION_GAP_S,
            master_seed: seed,
            stream: 1,
            iteration: 0,
        })
    }

    /// Powder single-wall rig: 60 mV reference, 13 s recoat per iteration.
    pub fn online(plant_cfg: PlantConfig, ctrl_cfg: ControllerConfig, seed: u64) -> Result<Self> {
        ctrl_cfg.validate()?;
        Ok(TuningRig {
            plant: Plant::new(plant_cfg, derive_seed(seed, 2, 0))?,
            ctrl_cfg,
            gap_s: RECOAT_S,
            master_seed: seed,
            stream: 2,
            iteration: 0,
        })
    }

    pub fn plant(&self) -> &Plant {
        &self.plant
    }

    pub fn reference_mv(&self) -> f64 {
        self.ctrl_cfg.reference_mv
    }

    /// One tuning iteration: expose the 10 mm line with the given gains,
    /// then apply the laser-off gap.
    pub fn run_iteration(&mut self, gains: ControllerGains) -> Result<Trace> {
        self.plant
            .reseed(derive_seed(self.master_seed, self.stream, self.iteration));
        self.iteration += 1;
        let mut pi = PiController::new(gains, self.ctrl_cfg.clone())?;
        let trace = expose_vector(&mut self.plant, &mut pi, &tuning_vector())?;
        self.plant.recoat(self.gap_s);
        Ok(trace)
    }
}

/// Prints a full wedge build: every layer exposed vector by vector with the
/// scanner turnaround between vectors and a recoat after each layer. The
/// controller integral is reset at each vector start.
pub fn print_wedge(
    plant: &mut Plant,
    geom: &WedgeGeometry,
    mode: ExposureMode,
    ctrl_cfg: &ControllerConfig,
    recoat_s: f64,
) -> Result<BuildRecord> {
    geom.validate()?;
    let mut pi = match mode {
        ExposureMode::Controlled(gains) => Some(PiController::new(gains, ctrl_cfg.clone())?),
        ExposureMode::FixedPower(_) => None,
    };
    let mut layers = Vec::with_capacity(geom.layers);
    for layer_idx in 0..geom.layers {
        let vectors = geom.layer_vectors(layer_idx, plant.sample_dt_s())?;
        let mut layer = Vec::with_capacity(vectors.len());
        for vector in vectors {
            let trace = match (&mut pi, mode) {
                (Some(pi), ExposureMode::Controlled(_)) => {
                    pi.reset();
                    expose_vector(plant, pi, &vector)?
                }
                (None, ExposureMode::FixedPower(power)) => {
                    expose_vector_constant(plant, &vector, power, ctrl_cfg)?
                }
                _ => unreachable!(),
            };
            plant.travel(vector.inter_vector_delay_s);
            layer.push((vector, trace));
        }
        plant.recoat(recoat_s);
        layers.push(layer);
    }
    Ok(BuildRecord { layers })
}

/// The fixed-power baseline used when a wedge is printed without control.
pub fn uncontrolled_mode() -> ExposureMode {
    ExposureMode::FixedPower(NOMINAL_POWER_W)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::SubstrateKind;

    fn quiet(mut cfg: PlantConfig) -> PlantConfig {
        cfg.noise_std_mv = 0.0;
        cfg
    }

    #[test]
    fn zero_gains_leave_laser_off() {
        let mut plant = Plant::new(quiet(PlantConfig::plate()), 0).unwrap();
        let mut pi = PiController::new(
            ControllerGains::new(0.0, 0.0),
            ControllerConfig::with_reference(30.0),
        )
        .unwrap();
        let trace = expose_vector(&mut plant, &mut pi, &tuning_vector()).unwrap();
        assert!(trace.u_w.iter().all(|&u| u == 0.0));
        assert!(trace.y_mv.iter().all(|&y| y.abs() < 1e-9));
    }

    #[test]
    fn trace_length_matches_sample_count() {
        let mut plant = Plant::new(PlantConfig::plate(), 0).unwrap();
        let mut pi = PiController::new(
            ControllerGains::new(5.0, 1e5),
            ControllerConfig::with_reference(30.0),
        )
        .unwrap();
        let trace = expose_vector(&mut plant, &mut pi, &tuning_vector()).unwrap();
        assert_eq!(trace.len(), 1250);
        assert_eq!(trace.u_w.len(), 1250);
    }

    #[test]
    fn reference_gains_settle_on_plate_at_about_200_w() {
        let mut plant = Plant::new(quiet(PlantConfig::plate()), 0).unwrap();
        let mut pi = PiController::new(
            ControllerGains::new(8.45, 90_598.24),
            ControllerConfig::with_reference(30.0),
        )
        .unwrap();
        let trace = expose_vector(&mut plant, &mut pi, &tuning_vector()).unwrap();
        let within: Vec<usize> = (0..trace.len())
            .filter(|&k| (trace.y_mv[k] - 30.0).abs() <= 1.5)
            .collect();
        assert!(!within.is_empty(), "never reached the 30 mV band");
        assert!(within[0] < 1250, "settled too late: {}", within[0]);
        let tail = &trace.y_mv[trace.len() - 100..];
        assert!(tail.iter().all(|&y| (y - 30.0).abs() < 1.5));
        let u_end = trace.u_w[trace.len() - 1];
        assert!((u_end - 200.0).abs() < 6.0, "steady power {u_end} W");
    }

    #[test]
    fn one_sample_delay_replay_reproduces_trace() {
        // Replaying the recorded commands shifted by one sample against a
        // plant with the same seed must reproduce the emissions bit for bit.
        let cfg = PlantConfig::plate();
        let seed = 77;
        let ctrl_cfg = ControllerConfig::with_reference(30.0);
        let mut plant = Plant::new(cfg.clone(), seed).unwrap();
        let mut pi = PiController::new(ControllerGains::new(8.45, 90_598.24), ctrl_cfg.clone()).unwrap();
        let trace = expose_vector(&mut plant, &mut pi, &tuning_vector()).unwrap();

        let mut replay = Plant::new(cfg, seed).unwrap();
        replay.begin_vector(10.0);
        for k in 0..trace.len() {
            let applied = if k == 0 { ctrl_cfg.u_min_w } else { trace.u_w[k - 1] };
            let y = replay.step(applied);
            assert_eq!(y.to_bits(), trace.y_mv[k].to_bits(), "sample {k}");
        }
    }

    #[test]
    fn commands_always_within_power_limits() {
        let mut plant = Plant::new(PlantConfig::powder(), 123).unwrap();
        let mut pi = PiController::new(
            ControllerGains::new(100.0, 1.6e6),
            ControllerConfig::with_reference(60.0),
        )
        .unwrap();
        let trace = expose_vector(&mut plant, &mut pi, &tuning_vector()).unwrap();
        assert!(trace.u_w.iter().all(|&u| (0.0..=300.0).contains(&u)));
    }

    #[test]
    fn offline_rig_carries_preheat_between_iterations() {
        let mut cfg = quiet(PlantConfig::plate());
        cfg.preheat_coupling_per_s = 0.22;
        let rig_seed = 5;
        let mut rig =
            TuningRig::offline(cfg, ControllerConfig::with_reference(30.0), rig_seed).unwrap();
        let gains = ControllerGains::new(8.45, 90_598.24);
        let first = rig.run_iteration(gains).unwrap();
        let carried = rig.plant().preheat_mv();
        assert!(carried > 0.0, "no preheat carry-over");
        let second = rig.run_iteration(gains).unwrap();
        // Elevated preheat shows up as a slightly different start.
        assert_ne!(first.y_mv[5].to_bits(), second.y_mv[5].to_bits());
    }

    #[test]
    fn online_rig_recoats_between_iterations() {
        let mut rig = TuningRig::online(
            quiet(PlantConfig::powder()),
            ControllerConfig::with_reference(60.0),
            5,
        )
        .unwrap();
        rig.run_iteration(ControllerGains::new(8.44, 65_014.97)).unwrap();
        let after = rig.plant().preheat_mv();
        assert!(after > 0.0 && after < 0.05, "recoat did not attenuate preheat: {after}");
    }

    #[test]
    fn powder_emission_roughly_double_plate_at_equal_power() {
        let mut plate_cfg = quiet(PlantConfig::plate());
        let mut powder_cfg = quiet(PlantConfig::powder());
        plate_cfg.preheat_coupling_per_s = 0.0;
        powder_cfg.preheat_coupling_per_s = 0.0;
        assert_eq!(plate_cfg.substrate, SubstrateKind::Plate);
        assert_eq!(powder_cfg.substrate, SubstrateKind::Powder);
        let ctrl_cfg = ControllerConfig::with_reference(60.0);
        let vector = tuning_vector();
        let mut plate = Plant::new(plate_cfg, 0).unwrap();
        let mut powder = Plant::new(powder_cfg, 0).unwrap();
        let a = expose_vector_constant(&mut plate, &vector, 200.0, &ctrl_cfg).unwrap();
        let b = expose_vector_constant(&mut powder, &vector, 200.0, &ctrl_cfg).unwrap();
        let ya = a.y_mv[a.len() - 1];
        let yb = b.y_mv[b.len() - 1];
        assert!((yb / ya - 2.0).abs() < 1e-6, "ratio {}", yb / ya);
    }

    #[test]
    fn single_layer_build_has_one_layer() {
        let geom = WedgeGeometry {
            layers: 1,
            max_vector_mm: 2.0,
            ..WedgeGeometry::with_angle(45.0)
        };
        let mut plant = Plant::new(PlantConfig::powder(), 9).unwrap();
        let build = print_wedge(
            &mut plant,
            &geom,
            ExposureMode::Controlled(ControllerGains::new(8.45, 90_598.24)),
            &ControllerConfig::with_reference(80.0),
            RECOAT_S,
        )
        .unwrap();
        assert_eq!(build.layers.len(), 1);
        assert_eq!(
            build.layers[0].len(),
            geom.layer_vectors(0, 1e-5).unwrap().len()
        );
    }

    #[test]
    fn uncontrolled_wedge_heats_up_toward_short_vectors() {
        let geom = WedgeGeometry {
            layers: 1,
            ..WedgeGeometry::with_angle(28.0)
        };
        let mut plant = Plant::new(quiet(PlantConfig::powder()), 3).unwrap();
        let build = print_wedge(
            &mut plant,
            &geom,
            uncontrolled_mode(),
            &ControllerConfig::with_reference(80.0),
            RECOAT_S,
        )
        .unwrap();
        let layer = &build.layers[0];
        let means: Vec<f64> = layer
            .iter()
            .map(|(_, t)| t.y_mv.iter().sum::<f64>() / t.len() as f64)
            .collect();
        // Nondecreasing through the final quarter for every vector long
        // enough for the melt pool to form (a few emission time constants);
        // the sub-millimeter stubs at the tip are mostly formation transient.
        let formed = 4.0 * plant.config().tau_rise_s;
        let start = means.len() - means.len() / 4;
        for k in start..means.len() - 1 {
            if layer[k + 1].0.duration_s() < formed {
                break;
            }
            assert!(
                means[k + 1] >= means[k] - 1e-9,
                "mean emission decreased at vector {k}: {} -> {}",
                means[k],
                means[k + 1]
            );
        }
        // And the quarter as a whole runs far hotter than the layer start.
        let peak = means[start..].iter().cloned().fold(0.0f64, f64::max);
        assert!(peak > 2.0 * means[0], "no heat build-up: {peak} vs {}", means[0]);
    }

    #[test]
    fn controlled_wedge_sheds_power_as_vectors_shrink() {
        let geom = WedgeGeometry {
            layers: 1,
            ..WedgeGeometry::with_angle(28.0)
        };
        let mut plant = Plant::new(quiet(PlantConfig::powder()), 3).unwrap();
        let build = print_wedge(
            &mut plant,
            &geom,
            ExposureMode::Controlled(ControllerGains::new(8.45, 90_598.24)),
            &ControllerConfig::with_reference(80.0),
            RECOAT_S,
        )
        .unwrap();
        let layer = &build.layers[0];
        let mean_u = |t: &Trace| t.u_w.iter().sum::<f64>() / t.len() as f64;
        let first = mean_u(&layer[0].1);
        let last = mean_u(&layer[layer.len() - 1].1);
        assert!(last < first, "power did not decrease: {first} -> {last}");
    }

    #[test]
    fn build_is_deterministic_for_fixed_seed() {
        let geom = WedgeGeometry {
            layers: 2,
            max_vector_mm: 3.0,
            ..WedgeGeometry::with_angle(45.0)
        };
        let ctrl_cfg = ControllerConfig::with_reference(80.0);
        let run = || {
            let mut plant = Plant::new(PlantConfig::powder(), 21).unwrap();
            print_wedge(
                &mut plant,
                &geom,
                ExposureMode::Controlled(ControllerGains::new(10.0, 1e5)),
                &ctrl_cfg,
                RECOAT_S,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }
}
