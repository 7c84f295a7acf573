//! Command-line surface: `tune`, `wedge`, and `analyze` subcommands bound to
//! a single TOML configuration file.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 i/o failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{best_so_far, per_vector_costs, window_flags};
use crate::bo::{run_offline_tuning, run_online_tuning, TuneFailure};
use crate::closedloop::{print_wedge, uncontrolled_mode, BuildRecord, ExposureMode};
use crate::config::RunConfig;
use crate::controller::ControllerGains;
use crate::error::{Error, Result};
use crate::io;
use crate::plant::Plant;
use crate::scanpath::WedgeGeometry;

#[derive(Debug, Parser)]
#[command(
    name = "melttune",
    about = "PI laser-power controller autotuning on a simulated melt-pool plant"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a tuning procedure and write history, summary, and resume files.
    Tune(TuneArgs),
    /// Print a wedge build with given gains (or uncontrolled) and export it.
    Wedge(WedgeArgs),
    /// Recompute all analyses from a previously exported build CSV.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TuneMode {
    Offline,
    Online,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Path to the TOML run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[arg(value_enum)]
    mode: TuneMode,
    #[command(flatten)]
    common: CommonArgs,
    /// Iteration budget override.
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Debug, Args)]
struct WedgeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Wedge angle in degrees.
    #[arg(long)]
    angle: Option<f64>,
    /// Controller gains KP KI.
    #[arg(long, num_args = 2, value_names = ["KP", "KI"], conflicts_with_all = ["from_summary", "uncontrolled"])]
    gains: Option<Vec<f64>>,
    /// Take the gains from a tuning summary JSON.
    #[arg(long, conflicts_with = "uncontrolled")]
    from_summary: Option<PathBuf>,
    /// Print without control at the fixed nominal power.
    #[arg(long)]
    uncontrolled: bool,
    /// Layer count override.
    #[arg(long)]
    layers: Option<usize>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Build CSV produced by the `wedge` subcommand.
    build: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

/// Parses `args` and runs the selected command; returns the process exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version through this path as well.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Tune(args) => cmd_tune(args),
        Command::Wedge(args) => cmd_wedge(args),
        Command::Analyze(args) => cmd_analyze(args),
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut rc = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        rc.seed = seed;
    }
    if let Some(out) = &common.out {
        rc.output_dir = out.clone();
    }
    Ok(rc)
}

fn cmd_tune(args: TuneArgs) -> Result<()> {
    let mut rc = load_config(&args.common)?;
    if let Some(iterations) = args.iterations {
        rc.bo.n_iterations = iterations;
    }
    rc.validate()?;
    let mode = match args.mode {
        TuneMode::Offline => "offline",
        TuneMode::Online => "online",
    };
    let dir = rc.output_dir.join(format!("tune_{mode}"));
    let outcome = match args.mode {
        TuneMode::Offline => run_offline_tuning(&rc),
        TuneMode::Online => run_online_tuning(&rc),
    };
    match outcome {
        Ok(result) => {
            io::write_text(&dir.join("history.csv"), &io::history_to_csv(&result.history))?;
            io::write_text(
                &dir.join("summary.json"),
                &io::TuneSummary::new(mode, rc.seed, &result).to_json(),
            )?;
            io::write_text(
                &dir.join("resume.json"),
                &io::ResumeFile::new(mode, rc.seed, &result).to_json(),
            )?;
            println!(
                "{mode} tuning finished: best kp={:.4} ki={:.2} cost={:.6} at iteration {} ({} iterations)",
                result.best_gains.kp,
                result.best_gains.ki,
                result.best_cost.total,
                result.best_iteration,
                result.history.len()
            );
            println!("outputs in {}", dir.display());
            Ok(())
        }
        Err(TuneFailure { error, partial }) => {
            // Flush whatever completed before the failure.
            if !partial.is_empty() {
                io::write_text(&dir.join("history.csv"), &io::history_to_csv(&partial))?;
            }
            Err(error)
        }
    }
}

fn wedge_mode(rc: &RunConfig, args: &WedgeArgs) -> Result<(ExposureMode, String)> {
    if args.uncontrolled {
        return Ok((uncontrolled_mode(), "uncontrolled".to_string()));
    }
    if let Some(values) = &args.gains {
        let gains = ControllerGains::new(values[0], values[1]);
        gains.validate()?;
        return Ok((ExposureMode::Controlled(gains), "controlled".to_string()));
    }
    if let Some(path) = &args.from_summary {
        let summary = io::TuneSummary::load(path)?;
        let gains = summary.gains();
        gains.validate()?;
        return Ok((
            ExposureMode::Controlled(gains),
            format!("controlled_{}", summary.mode),
        ));
    }
    let _ = rc;
    Err(Error::config(
        "wedge needs --gains KP KI, --from-summary PATH, or --uncontrolled",
    ))
}

fn cmd_wedge(args: WedgeArgs) -> Result<()> {
    let mut rc = load_config(&args.common)?;
    if let Some(angle) = args.angle {
        rc.geometry.angle_deg = angle;
    }
    if let Some(layers) = args.layers {
        rc.geometry.layers = layers;
    }
    rc.validate()?;
    let (mode, mode_name) = wedge_mode(&rc, &args)?;
    let geom = rc.geometry.clone();
    let ctrl_cfg = rc.controller_config(rc.controller.wedge_reference_mv);
    let mut plant = Plant::new(rc.plant.powder.clone(), rc.seed)?;
    let build = print_wedge(&mut plant, &geom, mode, &ctrl_cfg, rc.recoat_s)?;

    let dir = rc
        .output_dir
        .join(format!("wedge_{}deg_{mode_name}", rc.geometry.angle_deg));
    io::write_text(&dir.join("build.csv"), &io::build_to_csv(&build))?;
    write_analysis_outputs(&dir, &rc, &geom, &build)?;
    println!(
        "wedge build ({} layers, {} vectors/layer) written to {}",
        build.layers.len(),
        build.layers[0].len(),
        dir.display()
    );
    Ok(())
}

fn write_analysis_outputs(
    dir: &Path,
    rc: &RunConfig,
    geom: &WedgeGeometry,
    build: &BuildRecord,
) -> Result<()> {
    let stats = per_vector_costs(build, &rc.cost)?;
    io::write_text(&dir.join("vector_costs.csv"), &io::vector_costs_to_csv(&stats))?;

    let flags = window_flags(build, &rc.process_window)?;
    io::write_text(
        &dir.join("window_flags.csv"),
        &io::window_flags_to_csv(build, &flags),
    )?;

    // Band map of the configured evaluation layer only (1-based), clamped to
    // the last layer for short builds; the full per-sample map of every
    // layer would be enormous.
    let eval_layer = rc.evaluation_layer.min(build.layers.len()) - 1;
    let band = io::band_map_to_csv(
        build,
        eval_layer,
        geom.hatch_spacing_mm,
        rc.controller.wedge_reference_mv,
        rc.cost.band,
    )?;
    io::write_text(&dir.join("band_map.csv"), &band)?;
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let rc = load_config(&args.common)?;
    rc.validate()?;
    let text = std::fs::read_to_string(&args.build)
        .map_err(|e| Error::config(format!("cannot read build {}: {e}", args.build.display())))?;
    let build = io::build_from_csv(
        &text,
        rc.controller.sample_dt_s,
        rc.geometry.speed_mm_s,
        rc.controller.wedge_reference_mv,
        rc.geometry.turnaround_s,
    )?;
    let dir = match &args.common.out {
        Some(out) => out.clone(),
        None => args
            .build
            .parent()
            .map(|p| p.join("analysis"))
            .unwrap_or_else(|| PathBuf::from("analysis")),
    };
    write_analysis_outputs(&dir, &rc, &rc.geometry, &build)?;

    // Best-so-far curve when a tuning history sits next to the build.
    if let Some(parent) = args.build.parent() {
        let history_path = parent.join("history.csv");
        if history_path.exists() {
            let totals = io::history_totals_from_csv(&std::fs::read_to_string(&history_path)?)?;
            let curve = best_so_far(&totals)?;
            io::write_text(&dir.join("best_so_far.csv"), &io::best_so_far_to_csv(&curve))?;
        }
    }
    println!("analysis written to {}", dir.display());
    Ok(())
}
