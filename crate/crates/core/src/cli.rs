//! Command-line interface.
//!
//! Subcommands: `run`, `check`, `eps-study`, `refine`, `contract`,
//! `local-limit`, `snapshot-dump`. Exit codes: 0 success, 2 validation
//! error, 3 numerical failure. `NLCHNS_THREADS` caps the rayon pool used
//! by kernel quadrature; all reductions are serial and deterministic, so
//! results are identical for every cap.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::SimConfig;
use crate::experiments;
use crate::grid::Grid2D;
use crate::sim::{self, SimError};

#[derive(Parser)]
#[command(name = "nlchns", about = "Nonlocal Cahn-Hilliard-Navier-Stokes simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation from a JSON config.
    Run {
        config: PathBuf,
        /// Treat assumption-check failures as errors.
        #[arg(long)]
        strict: bool,
    },
    /// Build the kernel, verify the hypotheses and print the report.
    Check {
        config: PathBuf,
        #[arg(long)]
        strict: bool,
    },
    /// Regularization study: distances of eps-runs to the degenerate run.
    EpsStudy {
        config: PathBuf,
        /// Strictly decreasing eps values, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.05, 0.025])]
        eps: Vec<f64>,
    },
    /// dt-halving refinement study of the energy-identity residual.
    Refine {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// Halve h together with dt (overshoot trend study).
        #[arg(long)]
        space_time: bool,
    },
    /// Twin-run H^-1 contraction study (ch-only configs).
    Contract {
        config: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        amplitude: f64,
        #[arg(long, default_value_t = 400)]
        steps: usize,
    },
    /// Nonlocal-to-local limit table for the scaled kernel family.
    LocalLimit {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [2.0, 4.0, 8.0, 16.0])]
        scales: Vec<f64>,
        #[arg(long, default_value_t = 0.25)]
        bump_radius: f64,
    },
    /// Dump a binary snapshot as CSV on stdout.
    SnapshotDump { file: PathBuf },
}

fn load_config(path: &PathBuf) -> Result<SimConfig, SimError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SimError::Validation(format!("{}: {e}", path.display())))?;
    SimConfig::from_json(&text).map_err(SimError::Validation)
}

fn dispatch(cmd: Command) -> Result<(), SimError> {
    match cmd {
        Command::Run { config, strict } => {
            let cfg = load_config(&config)?;
            let opts = sim::SimulateOptions { strict, ..Default::default() };
            let out = sim::simulate_with(&cfg, &opts)?;
            println!(
                "completed {} steps; mass drift {:e}; overshoot {:e}; outputs in {}",
                out.summary.steps_taken,
                out.summary.max_mass_drift,
                out.summary.max_overshoot,
                cfg.output.dir.display()
            );
            for (name, pass) in &out.summary.flags {
                println!("  {name}: {}", if *pass { "PASS" } else { "FAIL" });
            }
            Ok(())
        }
        Command::Check { config, strict } => {
            let cfg = load_config(&config)?;
            let kernel = sim::build_kernel(&cfg)?;
            let mode = match cfg.mode {
                crate::config::ModeConfig::Degenerate => crate::assumptions::CheckMode::Degenerate,
                crate::config::ModeConfig::Regularized { epsilon } => {
                    crate::assumptions::CheckMode::Regularized { eps: epsilon }
                }
            };
            let report =
                crate::assumptions::check_assumptions(&cfg.potential, &cfg.mobility, &kernel, mode);
            let regularity = crate::assumptions::check_assumptions(
                &cfg.potential,
                &cfg.mobility,
                &kernel,
                crate::assumptions::CheckMode::Regularity,
            );
            println!("kernel: {}", serde_json::to_string(&kernel.report()).expect("serializable"));
            for rep in [&report, &regularity] {
                for (name, entry) in &rep.entries {
                    println!(
                        "({name}) {} {}",
                        if entry.pass { "PASS" } else { "FAIL" },
                        serde_json::to_string(&entry.constants).expect("serializable")
                    );
                }
            }
            if strict && !(report.all_pass && regularity.all_pass) {
                return Err(SimError::Validation("assumption check failed (--strict)".into()));
            }
            Ok(())
        }
        Command::EpsStudy { config, eps } => {
            let cfg = load_config(&config)?;
            let study = experiments::experiment_epsilon(&cfg, &eps)?;
            println!("eps,distance_L2_QT,completed");
            for row in &study.rows {
                println!("{},{},{}", row.eps, row.distance, row.completed);
            }
            println!(
                "# strictly decreasing: {}",
                if study.strictly_decreasing { "yes" } else { "no" }
            );
            Ok(())
        }
        Command::Refine { config, levels, space_time } => {
            let cfg = load_config(&config)?;
            let study = if space_time {
                experiments::experiment_refine_space_time(&cfg, levels)?
            } else {
                experiments::experiment_refine_dt(&cfg, levels)?
            };
            println!("dt,h,accumulated_residual,max_overshoot");
            for row in &study.rows {
                println!("{},{},{},{}", row.dt, row.h, row.accumulated_residual, row.max_overshoot);
            }
            println!("# orders: {:?}", study.orders);
            Ok(())
        }
        Command::Contract { config, amplitude, steps } => {
            let cfg = load_config(&config)?;
            let study = experiments::experiment_contraction(&cfg, amplitude, steps)?;
            println!("t,hminus1_distance_sq");
            for (t, d) in &study.series {
                println!("{t},{d}");
            }
            println!("# C5 = {} at |u|_inf = {}", study.c5, study.u_max);
            Ok(())
        }
        Command::LocalLimit { config, scales, bump_radius } => {
            let cfg = load_config(&config)?;
            let grid = Grid2D::new(cfg.grid.nx, cfg.grid.ny, cfg.grid.lx, cfg.grid.ly)
                .map_err(|e| SimError::Validation(e.to_string()))?;
            let study = experiments::experiment_local_limit(
                &cfg.kernel,
                &scales,
                grid,
                (grid.lx / 2.0, grid.ly / 2.0),
                bump_radius,
            )?;
            println!("scale,nonlocal_energy,dirichlet_target,rel_gap");
            for row in &study.rows {
                println!(
                    "{},{},{},{}",
                    row.scale, row.nonlocal_energy, row.dirichlet_target, row.rel_gap
                );
            }
            println!(
                "# sigma = {}; gap decreasing: {}",
                study.sigma,
                if study.decreasing { "yes" } else { "no" }
            );
            Ok(())
        }
        Command::SnapshotDump { file } => {
            let arr = crate::snapshot::read_array(&file)
                .map_err(|e| SimError::Validation(format!("{}: {e}", file.display())))?;
            let stdout = std::io::stdout();
            crate::snapshot::dump_csv(&arr, &mut stdout.lock())
                .map_err(|e| SimError::Numerical(e.to_string()))?;
            Ok(())
        }
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    if let Ok(threads) = std::env::var("NLCHNS_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            // build the global pool once; later calls are a no-op
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(SimError::Validation(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(SimError::Numerical(msg)) => {
            eprintln!("error: {msg}");
            3
        }
    }
}
