//! `blobflow` command-line runner.
//!
//! Exit status: 0 on success, 2 for invalid input, 3 when the numerics
//! fail, 1 for anything else (I/O).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blobflow::scenario::{convergence_sweep, ks2d_criticality, preset, preset_names, run_scenario, ScenarioConfig};
use blobflow::Error;
use clap::{Parser, Subcommand};

/// Environment variable holding the number of worker threads.
const WORKERS_VAR: &str = "BLOBFLOW_WORKERS";

#[derive(Parser)]
#[command(name = "blobflow", version, about = "Deterministic blob-method particle solver for diffusive gradient flows")]
struct Cli {
    /// Directory that receives every output file.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write diagnostics, densities, errors and a manifest.
    Run {
        /// Config file, or the name of a shipped preset.
        config: String,
        /// Override the grid spacing.
        #[arg(long)]
        h: Option<f64>,
        /// Override the final time.
        #[arg(long)]
        t_final: Option<f64>,
    },
    /// Convergence sweep over grid spacings with log-log slope fits.
    Sweep {
        config: String,
        /// At least three grid spacings.
        #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
        h: Vec<f64>,
        /// Evaluation time; defaults to the config's final time.
        #[arg(long)]
        t: Option<f64>,
    },
    /// Second-moment slopes of 2-D Keller-Segel runs at several masses.
    Ks2d {
        config: String,
        /// Total masses, e.g. `7pi 8pi 9pi` or `25.1`.
        #[arg(long, required = true, num_args = 1.., value_delimiter = ',', value_parser = parse_mass)]
        mass: Vec<f64>,
        #[arg(long)]
        h: Option<f64>,
    },
    /// List the shipped presets, or print one as TOML.
    Presets { name: Option<String> },
}

/// A number, optionally followed by `pi`: `8pi`, `0.5pi`, `pi`, `25.13`.
fn parse_mass(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let (num, scale) = match t.strip_suffix("pi") {
        Some(rest) => (rest.trim_end_matches('*'), std::f64::consts::PI),
        None => (t, 1.0),
    };
    let k = if num.is_empty() {
        1.0
    } else {
        num.parse::<f64>().map_err(|e| format!("cannot read mass `{s}`: {e}"))?
    };
    Ok(k * scale)
}

fn load(config: &str) -> blobflow::Result<ScenarioConfig> {
    let path = Path::new(config);
    if path.is_file() {
        ScenarioConfig::load(path)
    } else if preset_names().contains(&config) {
        preset(config)
    } else {
        Err(Error::InvalidArgument(format!(
            "`{config}` is neither a config file nor a preset (available: {})",
            preset_names().join(", ")
        )))
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        2
    } else if matches!(e, Error::Io { .. } | Error::Csv(_)) {
        1
    } else {
        3
    }
}

fn configure_workers() -> Result<(), Error> {
    let Ok(v) = std::env::var(WORKERS_VAR) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("{WORKERS_VAR} must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {n} workers: {e}")))
}

fn execute(cli: Cli) -> blobflow::Result<()> {
    configure_workers()?;
    match cli.command {
        Command::Run { config, h, t_final } => {
            let mut cfg = load(&config)?;
            if let Some(h) = h {
                cfg.grid.h = h;
            }
            if let Some(t) = t_final {
                cfg.integrator.t_final = t;
                cfg.integrator.record_times.retain(|&r| r <= t);
            }
            let dir = cli.out.join(&cfg.name);
            let run = run_scenario(&cfg, Some(&dir))?;
            let d = &run.manifest.derived;
            println!(
                "{}: N = {}, eps = {:.6}, {} accepted / {} rejected steps",
                cfg.name, d.n_particles, d.epsilon, d.accepted_steps, d.rejected_steps
            );
            if d.merged_particles > 0 {
                println!("{} particles merged on contact", d.merged_particles);
            }
            if let (Some(t), Some(why)) = (d.stopped_at, &d.stop_reason) {
                println!("stopped early at t = {t}: {why}");
            }
            if let Some(errs) = &run.errors {
                if let (Some(t), Some(row)) = (errs.times.last(), errs.rows.last()) {
                    let cols: Vec<String> = errs.columns.iter().zip(row).map(|(c, v)| format!("{c} = {v:.3e}")).collect();
                    println!("errors at t = {t}: {}", cols.join(", "));
                }
            }
            println!("wrote {}", dir.display());
        }
        Command::Sweep { config, h, t } => {
            let cfg = load(&config)?;
            let t_eval = t.unwrap_or(cfg.integrator.t_final);
            let dir = cli.out.join(format!("{}_sweep", cfg.name));
            let report = convergence_sweep(&cfg, &h, t_eval, Some(&dir))?;
            println!("{:>10} {:>10} {:>8}  {}", "h", "eps", "N", report.metrics.join("  "));
            for p in &report.points {
                let errs: Vec<String> = p.errors.iter().map(|e| format!("{e:.3e}")).collect();
                println!("{:>10} {:>10.6} {:>8}  {}", p.h, p.epsilon, p.n_particles, errs.join("  "));
            }
            for (m, s) in report.metrics.iter().zip(&report.slopes) {
                println!("slope {m}: {s:.3}");
            }
            println!("wrote {}", dir.display());
        }
        Command::Ks2d { config, mass, h } => {
            let mut cfg = load(&config)?;
            if let Some(h) = h {
                cfg.grid.h = h;
            }
            let dir = cli.out.join(format!("{}_ks2d", cfg.name));
            let rows = ks2d_criticality(&cfg, &mass, Some(&dir))?;
            println!("{:>10} {:>12} {:>12} {:>8}", "mass/pi", "slope", "virial", "r2");
            for r in &rows {
                println!(
                    "{:>10.4} {:>12.4} {:>12.4} {:>8.4}",
                    r.mass / std::f64::consts::PI,
                    r.fitted_slope,
                    r.reference_slope,
                    r.r2
                );
                if let Some(t) = r.stopped_at {
                    println!("  mass {:.4}: stopped early at t = {t}", r.mass);
                }
            }
            println!("wrote {}", dir.display());
        }
        Command::Presets { name } => match name {
            Some(n) => print!("{}", preset(&n)?.to_toml_string()?),
            None => {
                for n in preset_names() {
                    println!("{n}");
                }
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn masses_accept_multiples_of_pi() {
        assert_eq!(parse_mass("8pi").unwrap(), 8.0 * PI);
        assert_eq!(parse_mass("pi").unwrap(), PI);
        assert_eq!(parse_mass("0.5*pi").unwrap(), 0.5 * PI);
        assert_eq!(parse_mass("25.5").unwrap(), 25.5);
        assert!(parse_mass("eight").is_err());
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::InvalidArgument("x".into())), 2);
        assert_eq!(exit_code(&Error::StepUnderflow { time: 0.1, dt: 1e-20 }), 3);
        let inner = Error::Incomplete {
            time: 0.1,
            target: 0.2,
            reason: "x".into(),
        };
        assert_eq!(exit_code(&Error::SweepPoint { h: 0.1, source: Box::new(inner) }), 3);
    }
}
