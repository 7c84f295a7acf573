//! Property tests over the core invariants.

use proptest::prelude::*;

use melttune::bo::BoConfig;
use melttune::closedloop::{BuildRecord, Trace};
use melttune::controller::{ControllerConfig, ControllerGains, PiController};
use melttune::cost::{composite_cost, rolling_mean, sigma_prime, CostConfig};
use melttune::gp::{GpConfig, GpModel};
use melttune::io::{build_from_csv, build_to_csv};
use melttune::plant::{Plant, PlantConfig};
use melttune::scanpath::{ScanVector, WedgeGeometry};

fn trace_strategy() -> impl Strategy<Value = Trace> {
    (2usize..400, 20.0f64..120.0).prop_flat_map(|(n, reference)| {
        (
            proptest::collection::vec(0.0f64..200.0, n),
            proptest::collection::vec(0.0f64..300.0, n),
        )
            .prop_map(move |(y_mv, u_w)| Trace {
                dt_s: 1e-5,
                reference_mv: reference,
                y_mv,
                u_w,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cost_terms_stay_in_range(trace in trace_strategy()) {
        let b = composite_cost(&trace, &CostConfig::default()).unwrap();
        prop_assert!(b.mse_prime >= 0.0);
        prop_assert!(b.sigma_prime >= 0.0);
        prop_assert!(b.rise_prime > 0.0 && b.rise_prime <= 1.0);
        prop_assert!(b.total + 1e-15 >= b.mse_prime.max(b.rise_prime).max(b.sigma_prime));
        if let Some(k) = b.rise_index {
            prop_assert!(k >= 1 && k <= trace.len());
            prop_assert!((b.rise_prime - k as f64 / trace.len() as f64).abs() < 1e-15);
        } else {
            prop_assert_eq!(b.rise_prime, 1.0);
        }
    }

    #[test]
    fn mse_ignores_the_first_half(trace in trace_strategy(), fill in -50.0f64..250.0) {
        let cfg = CostConfig::default();
        let original = melttune::cost::mse_prime(&trace, &cfg).unwrap();
        let mut scrambled = trace.clone();
        let start = scrambled.len().div_ceil(2);
        for y in &mut scrambled.y_mv[..start] {
            *y = fill;
        }
        let modified = melttune::cost::mse_prime(&scrambled, &cfg).unwrap();
        prop_assert_eq!(original.to_bits(), modified.to_bits());
    }

    #[test]
    fn sigma_invariant_to_constant_offset(trace in trace_strategy(), offset in -100.0f64..100.0) {
        let cfg = CostConfig::default();
        let base = sigma_prime(&trace.u_w, &cfg).unwrap();
        let shifted: Vec<f64> = trace.u_w.iter().map(|u| u + offset).collect();
        let moved = sigma_prime(&shifted, &cfg).unwrap();
        prop_assert!((base - moved).abs() < 1e-12, "{} vs {}", base, moved);
    }

    #[test]
    fn rolling_mean_stays_within_data_range(
        u in proptest::collection::vec(-500.0f64..500.0, 1..300),
        w in 1usize..120,
    ) {
        let mu = rolling_mean(&u, w).unwrap();
        let lo = u.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for m in mu {
            prop_assert!(m >= lo - 1e-9 && m <= hi + 1e-9);
        }
    }

    #[test]
    fn controller_output_always_clamped(
        kp in 0.0f64..150.0,
        ki in 0.0f64..2e6,
        measurements in proptest::collection::vec(-200.0f64..400.0, 1..500),
    ) {
        let mut pi = PiController::new(
            ControllerGains::new(kp, ki),
            ControllerConfig::with_reference(60.0),
        ).unwrap();
        for y in measurements {
            let u = pi.step(y).unwrap();
            prop_assert!((0.0..=300.0).contains(&u), "u = {}", u);
        }
    }

    #[test]
    fn plant_monotone_in_power_and_deterministic(
        seed in 0u64..1000,
        p_lo in 0.0f64..290.0,
        extra in 0.1f64..100.0,
        warmup in 0usize..300,
    ) {
        let mut cfg = PlantConfig::powder();
        cfg.noise_std_mv = 0.0;
        let mut a = Plant::new(cfg.clone(), seed).unwrap();
        let mut b = Plant::new(cfg, seed).unwrap();
        for _ in 0..warmup {
            a.step(120.0);
            b.step(120.0);
        }
        prop_assert_eq!(a.emission_mv().to_bits(), b.emission_mv().to_bits());
        let ya = a.step(p_lo);
        let yb = b.step((p_lo + extra).min(300.0));
        prop_assert!(yb >= ya - 1e-12);
    }

    #[test]
    fn wedge_vector_count_tracks_trig(
        angle in 5.0f64..85.0,
        max_vector in 1.0f64..15.0,
        hatch in 0.05f64..0.5,
    ) {
        let geom = WedgeGeometry {
            angle_deg: angle,
            max_vector_mm: max_vector,
            hatch_spacing_mm: hatch,
            layers: 1,
            ..WedgeGeometry::default()
        };
        let vectors = geom.layer_vectors(0, 1e-5).unwrap();
        for pair in vectors.windows(2) {
            prop_assert!(pair[1].length_mm < pair[0].length_mm);
        }
        // Exact count under the one-sample minimum-length floor.
        let step = geom.length_step_mm();
        let min_len = geom.speed_mm_s * 1e-5;
        let exact = ((max_vector - min_len) / step).floor() + 1.0;
        prop_assert!((vectors.len() as f64 - exact).abs() <= 1.0);
        // The pure-trig count applies when the floor spans less than a step.
        if step >= min_len {
            let expected = (max_vector * angle.to_radians().tan() / hatch).ceil();
            prop_assert!((vectors.len() as f64 - expected).abs() <= 1.0);
        }
    }

    #[test]
    fn gp_variance_within_prior_bounds(
        points in proptest::collection::vec(((0.0f64..1.0), (0.0f64..1.0), (-3.0f64..3.0)), 1..15),
        query in ((0.0f64..1.0), (0.0f64..1.0)),
    ) {
        let mut model = GpModel::new(&GpConfig::default()).unwrap();
        for (x, y, g) in points {
            model.add([x, y], g).unwrap();
        }
        let (mean, var) = model.posterior([query.0, query.1]);
        prop_assert!(mean.is_finite());
        prop_assert!((0.0..=1.0 + 1e-9).contains(&var), "var = {}", var);
    }

    #[test]
    fn gain_normalization_round_trips(p0 in 0.0f64..1.0, p1 in 0.0f64..1.0) {
        let cfg = BoConfig::default();
        let gains = cfg.denormalize([p0, p1]);
        prop_assert!((1.0..=100.0).contains(&gains.kp));
        prop_assert!((100.0..=1.6e6).contains(&gains.ki));
        let back = cfg.normalize(gains);
        prop_assert!((back[0] - p0).abs() < 1e-9);
        prop_assert!((back[1] - p1).abs() < 1e-9);
    }

    #[test]
    fn build_csv_round_trip_preserves_bits(
        traces in proptest::collection::vec(
            proptest::collection::vec((0.0f64..300.0, 0.0f64..200.0), 1..40),
            1..6,
        ),
    ) {
        let layers: Vec<Vec<(ScanVector, Trace)>> = traces
            .iter()
            .map(|layer| {
                layer
                    .chunks(10)
                    .map(|chunk| {
                        let n = chunk.len();
                        let v = ScanVector::new(n as f64 * 0.008, 800.0, 5e-4).unwrap();
                        let t = Trace {
                            dt_s: 1e-5,
                            reference_mv: 80.0,
                            u_w: chunk.iter().map(|c| c.0).collect(),
                            y_mv: chunk.iter().map(|c| c.1).collect(),
                        };
                        (v, t)
                    })
                    .collect()
            })
            .collect();
        let build = BuildRecord { layers };
        let text = build_to_csv(&build);
        let back = build_from_csv(&text, 1e-5, 800.0, 80.0, 5e-4).unwrap();
        prop_assert_eq!(build_to_csv(&back), text);
        for (la, lb) in build.layers.iter().zip(&back.layers) {
            for ((_, ta), (_, tb)) in la.iter().zip(lb) {
                for k in 0..ta.len() {
                    prop_assert_eq!(ta.u_w[k].to_bits(), tb.u_w[k].to_bits());
                    prop_assert_eq!(ta.y_mv[k].to_bits(), tb.y_mv[k].to_bits());
                }
            }
        }
    }
}
