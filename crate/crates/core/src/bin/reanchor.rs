//! Command-line front end: `run`, `trotter-sweep`, `popsize-sweep`, `gsweep`.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 when a
//! run fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use afqmc_tt::config::{Mode, RunConfig};
use afqmc_tt::experiments::{cmd_gsweep, cmd_popsize_sweep, cmd_run, cmd_trotter_sweep, SweepRow};
use afqmc_tt::Error;

#[derive(Parser)]
#[command(name = "reanchor", version, about = "Constrained-path AFQMC for transverse-field Ising models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file with run parameters; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
    /// Keep the initial trial for the whole run.
    #[arg(long)]
    no_reanchor: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// One simulation; writes trace.csv, summary.json and trial.tt.
    Run(Common),
    /// One simulation per imaginary-time step.
    TrotterSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        dtau: Vec<f64>,
    },
    /// One simulation per walker count.
    PopsizeSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        walkers: Vec<usize>,
    },
    /// Energies and finite-difference slopes over a list of fields.
    Gsweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        g: Vec<f64>,
        #[arg(long, default_value_t = 0.01)]
        dg: f64,
    },
}

fn load(common: &Common) -> Result<RunConfig, Error> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if common.no_reanchor {
        config.mode = Mode::Vanilla;
    }
    if let Some(dir) = &common.out_dir {
        config.out_dir = dir.clone();
    }
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config {
                field: "--threads".into(),
                message: e.to_string(),
            })?;
    }
    config.validate()?;
    Ok(config)
}

fn print_rows(name: &str, rows: &[SweepRow]) {
    println!("{name:>10} {:>16} {:>10} {:>12}", "energy", "stderr", "error");
    for r in rows {
        let err = r.error.map_or("-".to_string(), |e| format!("{e:+.3e}"));
        println!("{:>10} {:>16.8} {:>10.2e} {err:>12}", r.value, r.energy, r.stderr);
    }
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Run(common) => {
            let config = load(&common)?;
            let r = cmd_run(&config)?;
            println!("energy {:.8} ± {:.2e}", r.mean, r.stderr);
            if let (Some(e), Some(rel)) = (r.reference_energy, r.relative_error) {
                println!("exact  {e:.8}  (relative error {rel:+.3e})");
            }
            if let Some(f) = r.fidelity {
                println!("trial fidelity {f:.4}");
            }
            println!("outputs in {}", config.out_dir.display());
        }
        Command::TrotterSweep { common, dtau } => {
            let config = load(&common)?;
            print_rows("dtau", &cmd_trotter_sweep(&config, &dtau)?);
        }
        Command::PopsizeSweep { common, walkers } => {
            let config = load(&common)?;
            print_rows("walkers", &cmd_popsize_sweep(&config, &walkers)?);
        }
        Command::Gsweep { common, g, dg } => {
            let config = load(&common)?;
            println!("{:>8} {:>16} {:>12}", "g", "energy", "dE/dg");
            for p in cmd_gsweep(&config, &g, dg)? {
                println!("{:>8} {:>16.8} {:>12.5}", p.g, p.energy, p.derivative);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_config_error() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
