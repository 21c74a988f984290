//! `mhd2d` command-line interface.
//!
//! Exit codes: 0 success, 1 invariant or run failure, 2 usage or
//! configuration error.

use super::config::{load_config, Config};
use super::snapshot::{read_snapshot, read_snapshot_header};
use super::{output_dir, run_config, verify_config, RunError};
use crate::verification::mms::{run_mms, ManufacturedSolution};
use crate::verification::sweep::{default_delta_list, default_eps_list, delta_sweep, epsilon_sweep, SweepReport};
use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "mhd2d", version, about = "2D compressible viscous MHD on a staggered grid")]
struct Cli {
    /// Worker threads for parallel sweeps (results do not depend on it).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a configuration and write diagnostics and snapshots.
    Run {
        config: PathBuf,
        /// Override the CFL number without validation.
        #[arg(long, value_name = "X")]
        force_cfl: Option<f64>,
    },
    /// Manufactured-solution refinement study.
    Mms { config: PathBuf },
    /// Sweep over the artificial viscosity.
    SweepEps { config: PathBuf },
    /// Sweep over the artificial pressure coefficient.
    SweepDelta { config: PathBuf },
    /// Run and check every invariant, printing PASS/FAIL per check.
    Verify {
        config: PathBuf,
        /// Override the CFL number without validation.
        #[arg(long, value_name = "X")]
        force_cfl: Option<f64>,
    },
    /// Print a snapshot header and field statistics.
    Inspect { snapshot: PathBuf },
}

fn load(path: &Path, force_cfl: Option<f64>) -> Result<Config, i32> {
    match load_config(path) {
        Ok(mut c) => {
            if let Some(cfl) = force_cfl {
                c.params.cfl = cfl;
            }
            Ok(c)
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            Err(EXIT_USAGE)
        }
    }
}

fn run_error_code(e: &RunError) -> i32 {
    match e {
        RunError::Solver(_) => EXIT_FAILURE,
        RunError::Init(_) | RunError::Grid(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

fn cmd_run(config: &Config) -> i32 {
    match run_config(config) {
        Ok((out, files)) => {
            let last = out.series.last().expect("initial record");
            println!(
                "{}: {} steps to t = {}, energy {:.10e}, ratio [{:.12}, {:.12}]",
                config.run_id,
                out.steps(),
                out.final_state.t,
                last.energy,
                last.ratio_min,
                last.ratio_max
            );
            println!("series: {}", files.series_csv.display());
            println!("final snapshot: {}", files.final_snapshot.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            run_error_code(&e)
        }
    }
}

fn cmd_verify(config: &Config) -> i32 {
    match verify_config(config) {
        Ok(checks) => {
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().all(|c| c.passed) {
                EXIT_OK
            } else {
                EXIT_FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            run_error_code(&e)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), i32> {
    std::fs::write(path, text).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        EXIT_FAILURE
    })
}

fn cmd_mms(config: &Config) -> i32 {
    let p = &config.params;
    let ms = ManufacturedSolution::standard(p.lx, p.ly, config.mms.velocity);
    let report = match run_mms(p, &ms, &config.mms.options) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    let mut csv = String::from("n,h,steps,rho_l2,b_l2,u_l2,combined_l2,max_linf\n");
    for ((n, h), (e, s)) in report
        .resolutions
        .iter()
        .zip(&report.hs)
        .zip(report.errors.iter().zip(&report.steps))
    {
        println!(
            "n = {n:4}  h = {h:.5e}  steps = {s:6}  L2 = {:.6e}  Linf = {:.6e}",
            e.combined_l2(),
            e.max_linf()
        );
        csv.push_str(&format!(
            "{n},{h:.16e},{s},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            e.rho_l2,
            e.b_l2,
            e.u_l2,
            e.combined_l2(),
            e.max_linf()
        ));
    }
    println!(
        "observed order: L2 {:.4}, Linf {:.4}",
        report.order_l2, report.order_linf
    );
    let dir = output_dir(config);
    if let Err(e) = std::fs::create_dir_all(&dir) {
        eprintln!("error: {}: {e}", dir.display());
        return EXIT_FAILURE;
    }
    match write_text(&dir.join(format!("{}_mms.csv", config.run_id)), &csv) {
        Ok(()) => EXIT_OK,
        Err(c) => c,
    }
}

fn write_sweep(config: &Config, report: &SweepReport) -> i32 {
    print!("{}", report.summary());
    let dir = output_dir(config);
    if let Err(e) = std::fs::create_dir_all(&dir) {
        eprintln!("error: {}: {e}", dir.display());
        return EXIT_FAILURE;
    }
    let stem = format!("{}_sweep_{}", config.run_id, report.kind.name());
    for (suffix, text) in [
        ("members.csv", report.members_csv()),
        ("cauchy.csv", report.cauchy_csv()),
        ("summary.txt", report.summary()),
    ] {
        if let Err(c) = write_text(&dir.join(format!("{stem}_{suffix}")), &text) {
            return c;
        }
    }
    EXIT_OK
}

fn cmd_sweep(config: &Config, delta: bool) -> i32 {
    let result = if delta {
        let values = config.sweep.values.clone().unwrap_or_else(default_delta_list);
        delta_sweep(&config.params, &config.initial, &values, &config.sweep.options)
    } else {
        let values = config.sweep.values.clone().unwrap_or_else(default_eps_list);
        epsilon_sweep(&config.params, &config.initial, &values, &config.sweep.options)
    };
    match result {
        Ok(report) => write_sweep(config, &report),
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn cmd_inspect(path: &Path) -> i32 {
    let header = match read_snapshot_header(path) {
        Ok(h) => h,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    println!("{}: format version {}", path.display(), header.version);
    println!("grid {} x {}, t = {:.16e}", header.nx, header.ny, header.time);
    println!("fields: {}", header.fields.join(", "));
    match read_snapshot(path) {
        Ok(s) => {
            for (name, a) in [("rho", &s.rho), ("b", &s.b), ("ux", &s.u.ux), ("uy", &s.u.uy)] {
                let min = a.iter().copied().fold(f64::INFINITY, f64::min);
                let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mean = a.mean().unwrap_or(f64::NAN);
                println!("  {name:>3}: min {min:.6e}  max {max:.6e}  mean {mean:.6e}");
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn dispatch(cli: Cli) -> i32 {
    match cli.command {
        Command::Run { config, force_cfl } => match load(&config, force_cfl) {
            Ok(c) => cmd_run(&c),
            Err(code) => code,
        },
        Command::Verify { config, force_cfl } => match load(&config, force_cfl) {
            Ok(c) => cmd_verify(&c),
            Err(code) => code,
        },
        Command::Mms { config } => load(&config, None).map_or_else(|c| c, |c| cmd_mms(&c)),
        Command::SweepEps { config } => load(&config, None).map_or_else(|c| c, |c| cmd_sweep(&c, false)),
        Command::SweepDelta { config } => load(&config, None).map_or_else(|c| c, |c| cmd_sweep(&c, true)),
        Command::Inspect { snapshot } => cmd_inspect(&snapshot),
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            EXIT_USAGE
        }
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli)),
            Err(e) => {
                eprintln!("error: cannot start thread pool: {e}");
                EXIT_FAILURE
            }
        },
        None => dispatch(cli),
    }
}
