//! Scan-vector generation for tuning exposures and wedge layers.
//!
//! Tuning uses a single 10 mm line at the nominal 800 mm/s. Wedge parts are
//! hatched unidirectionally with vector lengths shrinking linearly along the
//! hatch index, which shortens the vector-to-vector period toward the thin
//! end and provokes heat build-up.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NOMINAL_SPEED_MM_S: f64 = 800.0;
pub const NOMINAL_POWER_W: f64 = 150.0;
pub const TUNING_VECTOR_MM: f64 = 10.0;

/// One straight laser scan line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanVector {
    pub length_mm: f64,
    pub speed_mm_s: f64,
    /// Scanner turnaround time before the next vector starts.
    pub inter_vector_delay_s: f64,
}

impl ScanVector {
    pub fn new(length_mm: f64, speed_mm_s: f64, inter_vector_delay_s: f64) -> Result<Self> {
        if length_mm <= 0.0 || !length_mm.is_finite() {
            return Err(Error::config(format!(
                "scan vector length must be positive, got {length_mm}"
            )));
        }
        if speed_mm_s <= 0.0 || !speed_mm_s.is_finite() {
            return Err(Error::config(format!(
                "scan speed must be positive, got {speed_mm_s}"
            )));
        }
        if inter_vector_delay_s < 0.0 || inter_vector_delay_s.is_nan() {
            return Err(Error::config(format!(
                "inter-vector delay must be nonnegative, got {inter_vector_delay_s}"
            )));
        }
        Ok(ScanVector {
            length_mm,
            speed_mm_s,
            inter_vector_delay_s,
        })
    }

    /// Number of samples recorded while exposing this vector.
    pub fn sample_count(&self, sample_dt_s: f64) -> usize {
        let n = (self.length_mm / self.speed_mm_s / sample_dt_s).round() as usize;
        n.max(1)
    }

    pub fn duration_s(&self) -> f64 {
        self.length_mm / self.speed_mm_s
    }
}

/// The 10 mm single-line exposure used by every tuning iteration.
pub fn tuning_vector() -> ScanVector {
    ScanVector {
        length_mm: TUNING_VECTOR_MM,
        speed_mm_s: NOMINAL_SPEED_MM_S,
        inter_vector_delay_s: 0.0,
    }
}

/// Wedge part: unidirectional hatch with linearly shrinking vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WedgeGeometry {
    /// Wedge angle between the long edge and the hatch direction.
    pub angle_deg: f64,
    /// Length of the first (longest) hatch vector.
    pub max_vector_mm: f64,
    pub hatch_spacing_mm: f64,
    pub layers: usize,
    pub speed_mm_s: f64,
    /// Scanner turnaround between consecutive vectors.
    pub turnaround_s: f64,
}

impl Default for WedgeGeometry {
    fn default() -> Self {
        WedgeGeometry {
            angle_deg: 55.0,
            max_vector_mm: 10.0,
            hatch_spacing_mm: 0.1,
            layers: 120,
            speed_mm_s: NOMINAL_SPEED_MM_S,
            turnaround_s: 5e-4,
        }
    }
}

impl WedgeGeometry {
    pub fn with_angle(angle_deg: f64) -> Self {
        WedgeGeometry {
            angle_deg,
            ..WedgeGeometry::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.angle_deg <= 0.0 || self.angle_deg >= 90.0 || self.angle_deg.is_nan() {
            return Err(Error::config(format!(
                "wedge angle must be in (0, 90) degrees, got {}",
                self.angle_deg
            )));
        }
        if self.max_vector_mm <= 0.0 || !self.max_vector_mm.is_finite() {
            return Err(Error::config(format!(
                "max_vector_mm must be positive, got {}",
                self.max_vector_mm
            )));
        }
        if self.hatch_spacing_mm <= 0.0 || !self.hatch_spacing_mm.is_finite() {
            return Err(Error::config(format!(
                "hatch_spacing_mm must be positive, got {}",
                self.hatch_spacing_mm
            )));
        }
        if self.layers == 0 {
            return Err(Error::config("wedge must have at least one layer"));
        }
        if self.speed_mm_s <= 0.0 || self.turnaround_s < 0.0 || self.turnaround_s.is_nan() {
            return Err(Error::config("wedge speed/turnaround out of range"));
        }
        Ok(())
    }

    /// Per-vector length decrement along the hatch:
    /// hatch_spacing / tan(angle).
    pub fn length_step_mm(&self) -> f64 {
        self.hatch_spacing_mm / (self.angle_deg.to_radians()).tan()
    }

    /// The hatch schedule for one layer. Every layer of the wedge prism uses
    /// the same schedule; `layer_idx` is validated against `layers`.
    pub fn layer_vectors(&self, layer_idx: usize, sample_dt_s: f64) -> Result<Vec<ScanVector>> {
        self.validate()?;
        if layer_idx >= self.layers {
            return Err(Error::config(format!(
                "layer index {layer_idx} out of range (layers={})",
                self.layers
            )));
        }
        let step = self.length_step_mm();
        let min_len = self.speed_mm_s * sample_dt_s; // one sample of travel
        let mut vectors = Vec::new();
        let mut k = 0usize;
        loop {
            let length = self.max_vector_mm - k as f64 * step;
            if length < min_len {
                break;
            }
            vectors.push(ScanVector {
                length_mm: length,
                speed_mm_s: self.speed_mm_s,
                inter_vector_delay_s: self.turnaround_s,
            });
            k += 1;
        }
        if vectors.is_empty() {
            return Err(Error::config(
                "wedge geometry produces no vectors (max_vector shorter than one sample)",
            ));
        }
        Ok(vectors)
    }

    /// Hatch-direction x coordinate of vector `k`.
    pub fn vector_x_mm(&self, k: usize) -> f64 {
        k as f64 * self.hatch_spacing_mm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DT: f64 = 1e-5;

    #[test]
    fn tuning_vector_is_1250_samples() {
        let v = tuning_vector();
        assert_eq!(v.sample_count(DT), 1250);
        assert_eq!(v.length_mm, 10.0);
        assert_eq!(v.speed_mm_s, 800.0);
    }

    #[test]
    fn halving_speed_doubles_samples() {
        let v = ScanVector::new(10.0, 400.0, 0.0).unwrap();
        assert_eq!(v.sample_count(DT), 2500);
    }

    #[test]
    fn zero_length_rejected() {
        assert!(ScanVector::new(0.0, 800.0, 0.0).is_err());
    }

    #[test]
    fn forty_five_degree_wedge_shrinks_by_hatch_spacing() {
        let geom = WedgeGeometry {
            angle_deg: 45.0,
            ..WedgeGeometry::default()
        };
        let vectors = geom.layer_vectors(0, DT).unwrap();
        assert!((vectors[0].length_mm - 10.0).abs() < 1e-12);
        assert!((vectors[1].length_mm - 9.9).abs() < 1e-12);
        assert!((vectors[2].length_mm - 9.8).abs() < 1e-12);
    }

    #[test]
    fn twenty_eight_degree_step() {
        let geom = WedgeGeometry::with_angle(28.0);
        let step = geom.length_step_mm();
        assert!((step - 0.1 / 28.0f64.to_radians().tan()).abs() < 1e-15);
        assert!((step - 0.188).abs() < 5e-4, "step {step}");
    }

    #[test]
    fn zero_hatch_rejected() {
        let geom = WedgeGeometry {
            hatch_spacing_mm: 0.0,
            ..WedgeGeometry::default()
        };
        assert!(geom.layer_vectors(0, DT).is_err());
    }

    #[test]
    fn angle_out_of_range_rejected() {
        for angle in [0.0, -5.0, 90.0, 180.0] {
            assert!(WedgeGeometry::with_angle(angle).validate().is_err());
        }
    }

    #[test]
    fn layer_index_bounds_checked() {
        let geom = WedgeGeometry::default();
        assert!(geom.layer_vectors(geom.layers, DT).is_err());
        assert!(geom.layer_vectors(geom.layers - 1, DT).is_ok());
    }

    #[test]
    fn lengths_strictly_decrease_and_count_matches_trig() {
        for angle in [28.0, 45.0, 55.0, 75.0] {
            let geom = WedgeGeometry::with_angle(angle);
            let vectors = geom.layer_vectors(0, DT).unwrap();
            for pair in vectors.windows(2) {
                assert!(pair[1].length_mm < pair[0].length_mm);
            }
            let expected =
                (geom.max_vector_mm * angle.to_radians().tan() / geom.hatch_spacing_mm).ceil();
            let count = vectors.len() as f64;
            assert!(
                (count - expected).abs() <= 1.0,
                "angle {angle}: {count} vs {expected}"
            );
        }
    }

    #[test]
    fn smaller_angle_means_fewer_vectors() {
        let narrow = WedgeGeometry::with_angle(28.0).layer_vectors(0, DT).unwrap();
        let wide = WedgeGeometry::with_angle(55.0).layer_vectors(0, DT).unwrap();
        assert!(narrow.len() < wide.len());
    }
}
