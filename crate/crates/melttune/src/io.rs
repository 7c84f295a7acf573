//! CSV and JSON export/import.
//!
//! All floating-point values are printed with 17 significant digits in
//! scientific notation, which round-trips every f64 exactly; re-reading a
//! file written here reproduces the original bits. Row order is fully
//! deterministic (layer, vector, sample), so identical runs produce
//! byte-identical files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{classify_sample, BandLabel, VectorCostStat};
use crate::bo::{BoHistory, GpObservation, TuneResult};
use crate::closedloop::{BuildRecord, Trace};
use crate::controller::ControllerGains;
use crate::error::{Error, Result};
use crate::scanpath::ScanVector;

/// 17 significant digits: exact round-trip for every finite f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::config(format!("malformed float field: {s:?}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| Error::config(format!("malformed integer field: {s:?}")))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Build record CSV
// ---------------------------------------------------------------------------

pub const BUILD_HEADER: &str = "layer,vector_idx,sample_idx,t_us,u_W,y_mV";

/// Renders a build as CSV, one row per sample, local time within the vector.
pub fn build_to_csv(build: &BuildRecord) -> String {
    let mut out = String::with_capacity(1 << 20);
    out.push_str(BUILD_HEADER);
    out.push('\n');
    for (layer_idx, layer) in build.layers.iter().enumerate() {
        for (vector_idx, (_, trace)) in layer.iter().enumerate() {
            let dt_us = trace.dt_s * 1e6;
            for k in 0..trace.len() {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    layer_idx,
                    vector_idx,
                    k,
                    fmt_f64(k as f64 * dt_us),
                    fmt_f64(trace.u_w[k]),
                    fmt_f64(trace.y_mv[k]),
                ));
            }
        }
    }
    out
}

/// Parses a build CSV back into a `BuildRecord`. Scan metadata that the CSV
/// does not carry (speed, turnaround, reference) comes from the caller's
/// configuration; vector lengths are reconstructed from the sample counts.
pub fn build_from_csv(
    text: &str,
    dt_s: f64,
    speed_mm_s: f64,
    reference_mv: f64,
    turnaround_s: f64,
) -> Result<BuildRecord> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == BUILD_HEADER => {}
        other => {
            return Err(Error::config(format!(
                "build csv header mismatch: got {other:?}"
            )))
        }
    }
    let mut layers: Vec<Vec<(ScanVector, Trace)>> = Vec::new();
    let mut current: Option<(usize, usize, Trace)> = None;

    let flush = |layers: &mut Vec<Vec<(ScanVector, Trace)>>,
                 entry: (usize, usize, Trace)|
     -> Result<()> {
        let (layer_idx, vector_idx, trace) = entry;
        if layer_idx == layers.len() {
            layers.push(Vec::new());
        }
        if layer_idx + 1 != layers.len() {
            return Err(Error::config(format!(
                "build csv layers out of order at layer {layer_idx}"
            )));
        }
        if vector_idx != layers[layer_idx].len() {
            return Err(Error::config(format!(
                "build csv vectors out of order at layer {layer_idx} vector {vector_idx}"
            )));
        }
        let length_mm = trace.len() as f64 * speed_mm_s * dt_s;
        let vector = ScanVector::new(length_mm, speed_mm_s, turnaround_s)?;
        layers[layer_idx].push((vector, trace));
        Ok(())
    };

    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::config(format!(
                "build csv row {row}: expected 6 fields, got {}",
                fields.len()
            )));
        }
        let layer_idx = parse_usize(fields[0])?;
        let vector_idx = parse_usize(fields[1])?;
        let sample_idx = parse_usize(fields[2])?;
        let u = parse_f64(fields[4])?;
        let y = parse_f64(fields[5])?;
        let start_new = match &current {
            None => true,
            Some((l, v, _)) => *l != layer_idx || *v != vector_idx,
        };
        if start_new {
            if let Some(entry) = current.take() {
                flush(&mut layers, entry)?;
            }
            if sample_idx != 0 {
                return Err(Error::config(format!(
                    "build csv row {row}: vector does not start at sample 0"
                )));
            }
            current = Some((
                layer_idx,
                vector_idx,
                Trace {
                    dt_s,
                    reference_mv,
                    u_w: Vec::new(),
                    y_mv: Vec::new(),
                },
            ));
        }
        let (_, _, trace) = current.as_mut().expect("just set");
        if sample_idx != trace.len() {
            return Err(Error::config(format!(
                "build csv row {row}: non-contiguous sample index"
            )));
        }
        trace.u_w.push(u);
        trace.y_mv.push(y);
    }
    if let Some(entry) = current.take() {
        flush(&mut layers, entry)?;
    }
    if layers.is_empty() {
        return Err(Error::config("build csv contains no samples"));
    }
    Ok(BuildRecord { layers })
}

// ---------------------------------------------------------------------------
// Tuning history CSV
// ---------------------------------------------------------------------------

pub const HISTORY_HEADER: &str =
    "iteration,kp,ki,mse_prime,rise_prime,sigma_prime,total,best_so_far";

pub fn history_to_csv(history: &BoHistory) -> String {
    let mut out = String::new();
    out.push_str(HISTORY_HEADER);
    out.push('\n');
    for (rec, best) in history.records.iter().zip(&history.best_so_far) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            rec.iteration,
            fmt_f64(rec.gains.kp),
            fmt_f64(rec.gains.ki),
            fmt_f64(rec.cost.mse_prime),
            fmt_f64(rec.cost.rise_prime),
            fmt_f64(rec.cost.sigma_prime),
            fmt_f64(rec.cost.total),
            fmt_f64(*best),
        ));
    }
    out
}

/// Reads back the `total` column of a history CSV.
pub fn history_totals_from_csv(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == HISTORY_HEADER => {}
        other => {
            return Err(Error::config(format!(
                "history csv header mismatch: got {other:?}"
            )))
        }
    }
    let mut totals = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::config(format!(
                "history csv row {row}: expected 8 fields"
            )));
        }
        totals.push(parse_f64(fields[6])?);
    }
    Ok(totals)
}

// ---------------------------------------------------------------------------
// Analysis CSVs
// ---------------------------------------------------------------------------

pub fn vector_costs_to_csv(stats: &[VectorCostStat]) -> String {
    let mut out = String::new();
    out.push_str("vector_idx,length_mm,mean_cost,ci95_halfwidth,mse_mean,rise_mean,sigma_mean,n\n");
    for (idx, s) in stats.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            idx,
            fmt_f64(s.length_mm),
            fmt_f64(s.mean_cost),
            fmt_f64(s.ci95_halfwidth),
            fmt_f64(s.term_means.0),
            fmt_f64(s.term_means.1),
            fmt_f64(s.term_means.2),
            s.n,
        ));
    }
    out
}

/// Per-sample band map of one layer (0-based index), with spatial
/// coordinates: x across the hatch, y along the vector.
pub fn band_map_to_csv(
    build: &BuildRecord,
    layer_idx: usize,
    hatch_spacing_mm: f64,
    reference_mv: f64,
    band: f64,
) -> Result<String> {
    let layer = build
        .layers
        .get(layer_idx)
        .ok_or_else(|| Error::config(format!("band map layer {layer_idx} out of range")))?;
    let mut out = String::with_capacity(1 << 16);
    out.push_str("layer,vector_idx,sample_idx,x_mm,y_mm,y_mV,label\n");
    for (vector_idx, (vector, trace)) in layer.iter().enumerate() {
        let x = vector_idx as f64 * hatch_spacing_mm;
        let mm_per_sample = vector.speed_mm_s * trace.dt_s;
        for k in 0..trace.len() {
            let label: BandLabel = classify_sample(trace.y_mv[k], reference_mv, band);
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                layer_idx,
                vector_idx,
                k,
                fmt_f64(x),
                fmt_f64(k as f64 * mm_per_sample),
                fmt_f64(trace.y_mv[k]),
                label.as_str(),
            ));
        }
    }
    Ok(out)
}

pub fn window_flags_to_csv(
    build: &BuildRecord,
    flags: &[Vec<crate::analysis::WindowFlags>],
) -> String {
    let mut out = String::new();
    out.push_str("layer,vector_idx,length_mm,below_lof_frac,above_keyhole_frac\n");
    for (layer_idx, layer) in flags.iter().enumerate() {
        for (vector_idx, f) in layer.iter().enumerate() {
            let length = build.layers[layer_idx][vector_idx].0.length_mm;
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                layer_idx,
                vector_idx,
                fmt_f64(length),
                fmt_f64(f.below_lof),
                fmt_f64(f.above_keyhole),
            ));
        }
    }
    out
}

pub fn best_so_far_to_csv(best: &[f64]) -> String {
    let mut out = String::new();
    out.push_str("iteration,best_total\n");
    for (i, b) in best.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i, fmt_f64(*b)));
    }
    out
}

// ---------------------------------------------------------------------------
// JSON summaries
// ---------------------------------------------------------------------------

/// Result card of a tuning run; also the hand-off format for `wedge
/// --from-summary`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneSummary {
    pub mode: String,
    pub seed: u64,
    pub iterations: usize,
    pub best_iteration: usize,
    pub best_kp: f64,
    pub best_ki: f64,
    pub best_total_cost: f64,
    pub best_mse_prime: f64,
    pub best_rise_prime: f64,
    pub best_sigma_prime: f64,
}

impl TuneSummary {
    pub fn new(mode: &str, seed: u64, result: &TuneResult) -> Self {
        TuneSummary {
            mode: mode.to_string(),
            seed,
            iterations: result.history.len(),
            best_iteration: result.best_iteration,
            best_kp: result.best_gains.kp,
            best_ki: result.best_gains.ki,
            best_total_cost: result.best_cost.total,
            best_mse_prime: result.best_cost.mse_prime,
            best_rise_prime: result.best_cost.rise_prime,
            best_sigma_prime: result.best_cost.sigma_prime,
        }
    }

    pub fn gains(&self) -> ControllerGains {
        ControllerGains::new(self.best_kp, self.best_ki)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read summary {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("invalid summary {}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes") + "\n"
    }
}

/// Serialized GP state sufficient to resume or audit a tuning run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResumeFile {
    pub mode: String,
    pub seed: u64,
    pub cost_scale: f64,
    pub observations: Vec<GpObservation>,
}

impl ResumeFile {
    pub fn new(mode: &str, seed: u64, result: &TuneResult) -> Self {
        ResumeFile {
            mode: mode.to_string(),
            seed,
            cost_scale: result.cost_scale,
            observations: result.gp_observations.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("resume file serializes") + "\n"
    }
}
