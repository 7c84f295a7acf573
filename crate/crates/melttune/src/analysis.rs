//! Post-build analytics: per-vector cost statistics across layers,
//! reference-band classification, process-window flagging, and best-so-far
//! curves.

use serde::{Deserialize, Serialize};

use crate::closedloop::BuildRecord;
use crate::cost::{composite_cost, CostConfig};
use crate::error::{Error, Result};

/// Cost of one hatch vector averaged over all printed layers.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorCostStat {
    pub length_mm: f64,
    pub mean_cost: f64,
    /// 1.96 * sd / sqrt(n), the shaded-band half width.
    pub ci95_halfwidth: f64,
    /// Number of layers averaged.
    pub n: usize,
    /// Mean of (mse', rise', sigma') over layers.
    pub term_means: (f64, f64, f64),
}

/// Laser-power range that yields dense material; below it lack of fusion,
/// above it keyholing.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessWindow {
    pub lof_w: f64,
    pub keyhole_w: f64,
}

impl Default for ProcessWindow {
    fn default() -> Self {
        ProcessWindow {
            lof_w: 140.0,
            keyhole_w: 210.0,
        }
    }
}

impl ProcessWindow {
    pub fn validate(&self) -> Result<()> {
        if self.lof_w >= self.keyhole_w || !self.lof_w.is_finite() {
            return Err(Error::config(format!(
                "process window must satisfy lof < keyhole, got ({}, {})",
                self.lof_w, self.keyhole_w
            )));
        }
        Ok(())
    }
}

/// The same per-vector cost used for tuning, applied to every vector of a
/// build and averaged by vector index across layers with a 95% confidence
/// interval.
pub fn per_vector_costs(build: &BuildRecord, cfg: &CostConfig) -> Result<Vec<VectorCostStat>> {
    if build.layers.is_empty() || build.layers[0].is_empty() {
        return Err(Error::config("cannot analyze an empty build"));
    }
    let vectors = build.layers[0].len();
    for (i, layer) in build.layers.iter().enumerate() {
        if layer.len() != vectors {
            return Err(Error::config(format!(
                "layer {i} has {} vectors, expected {vectors}",
                layer.len()
            )));
        }
    }
    let mut stats = Vec::with_capacity(vectors);
    for v in 0..vectors {
        let mut totals = Vec::with_capacity(build.layers.len());
        let mut terms = (0.0, 0.0, 0.0);
        for layer in &build.layers {
            let (_, trace) = &layer[v];
            let b = composite_cost(trace, cfg)?;
            totals.push(b.total);
            terms.0 += b.mse_prime;
            terms.1 += b.rise_prime;
            terms.2 += b.sigma_prime;
        }
        let n = totals.len();
        let nf = n as f64;
        let mean = totals.iter().sum::<f64>() / nf;
        let var = if n > 1 {
            totals.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (nf - 1.0)
        } else {
            0.0
        };
        stats.push(VectorCostStat {
            length_mm: build.layers[0][v].0.length_mm,
            mean_cost: mean,
            ci95_halfwidth: 1.96 * var.sqrt() / nf.sqrt(),
            n,
            term_means: (terms.0 / nf, terms.1 / nf, terms.2 / nf),
        });
    }
    Ok(stats)
}

/// Sample classification against the reference band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandLabel {
    Below,
    Within,
    Above,
}

impl BandLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            BandLabel::Below => "below",
            BandLabel::Within => "within",
            BandLabel::Above => "above",
        }
    }
}

pub fn classify_sample(y_mv: f64, reference_mv: f64, band: f64) -> BandLabel {
    let tol = band * reference_mv;
    if y_mv < reference_mv - tol {
        BandLabel::Below
    } else if y_mv > reference_mv + tol {
        BandLabel::Above
    } else {
        BandLabel::Within
    }
}

/// Fractions of samples below/within/above the band for one vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandStats {
    pub below: f64,
    pub within: f64,
    pub above: f64,
}

/// Per-vector band fractions for every layer of a build, classified against
/// an explicit reference (the wedge evaluation reference by default).
pub fn band_classification(
    build: &BuildRecord,
    reference_mv: f64,
    band: f64,
) -> Vec<Vec<BandStats>> {
    build
        .layers
        .iter()
        .map(|layer| {
            layer
                .iter()
                .map(|(_, trace)| {
                    let n = trace.len() as f64;
                    let mut counts = [0usize; 3];
                    for &y in &trace.y_mv {
                        match classify_sample(y, reference_mv, band) {
                            BandLabel::Below => counts[0] += 1,
                            BandLabel::Within => counts[1] += 1,
                            BandLabel::Above => counts[2] += 1,
                        }
                    }
                    BandStats {
                        below: counts[0] as f64 / n,
                        within: counts[1] as f64 / n,
                        above: counts[2] as f64 / n,
                    }
                })
                .collect()
        })
        .collect()
}

/// Fractions of commanded-power samples outside the process window for one
/// vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowFlags {
    pub below_lof: f64,
    pub above_keyhole: f64,
}

/// Per-vector process-window violation fractions for every layer.
pub fn window_flags(build: &BuildRecord, pw: &ProcessWindow) -> Result<Vec<Vec<WindowFlags>>> {
    pw.validate()?;
    Ok(build
        .layers
        .iter()
        .map(|layer| {
            layer
                .iter()
                .map(|(_, trace)| {
                    let n = trace.len() as f64;
                    let below = trace.u_w.iter().filter(|&&u| u < pw.lof_w).count();
                    let above = trace.u_w.iter().filter(|&&u| u > pw.keyhole_w).count();
                    WindowFlags {
                        below_lof: below as f64 / n,
                        above_keyhole: above as f64 / n,
                    }
                })
                .collect()
        })
        .collect())
}

/// Running minimum of a cost sequence.
pub fn best_so_far(costs: &[f64]) -> Result<Vec<f64>> {
    if costs.is_empty() {
        return Err(Error::config("best-so-far of an empty history"));
    }
    let mut out = Vec::with_capacity(costs.len());
    let mut best = f64::INFINITY;
    for &c in costs {
        best = best.min(c);
        out.push(best);
    }
    Ok(out)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mean) * (b - mean);
        dx += (a - mean) * (a - mean);
        dy += (b - mean) * (b - mean);
    }
    num / (dx.sqrt() * dy.sqrt())
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}
