//! Desk-scale autotuning pipeline for an in-layer PI laser-power controller.
//!
//! A seeded melt-pool emission simulator stands in for the machine; a
//! Gaussian-process surrogate with lower-confidence-bound acquisition tunes
//! the controller gains against a composite tracking cost, either on a bare
//! plate ("offline") or on a recoated powder wall ("online"). Tuned gains can
//! then be evaluated on wedge geometries whose shrinking hatch vectors
//! provoke heat build-up, with per-vector cost, reference-band, and
//! process-window analyses exported as CSV.

pub mod analysis;
pub mod bo;
pub mod cli;
pub mod closedloop;
pub mod config;
pub mod controller;
pub mod cost;
pub mod error;
pub mod gp;
pub mod io;
pub mod plant;
pub mod scanpath;

pub use error::{Error, Result};
