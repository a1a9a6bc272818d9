//! End-to-end experiments behind the command-line tool. Each one runs the
//! driver, writes its artifacts into the configured output directory and
//! returns the numbers it wrote.

use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::driver::{self, fidelity, reference_energy, GPoint, PhaseTimes, ReanchorRecord};
use crate::error::{Error, Result};
use crate::oracle::exact_ground;
use crate::util::write_atomic;
use crate::walker::TrialHandle;

/// Largest system for which a run summary includes the trial fidelity.
pub const FIDELITY_CAP: usize = 14;

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub mean: f64,
    pub stderr: f64,
    pub naive_stderr: f64,
    pub blocking_level: usize,
    pub samples: usize,
    pub reference_energy: Option<f64>,
    pub relative_error: Option<f64>,
    pub fidelity: Option<f64>,
    pub trial_ranks: Vec<usize>,
    pub final_alive: usize,
    pub reanchors: Vec<ReanchorRecord>,
    pub wall_seconds: PhaseTimes,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Runs once and writes `trace.csv`, `summary.json` and `trial.tt`.
pub fn cmd_run(config: &RunConfig) -> Result<RunReport> {
    let report = run_report(config, true)?;
    Ok(report)
}

fn run_report(config: &RunConfig, write: bool) -> Result<RunReport> {
    let config = config.resolved();
    let out = driver::run(&config)?;
    let lattice = config.build_lattice()?;
    let stats = out.trace.summary(config.equilibration())?;
    let reference = reference_energy(&lattice, config.g);
    let fidelity = if lattice.num_sites() <= FIDELITY_CAP {
        let exact = exact_ground(&lattice, config.g)?;
        Some(fidelity(&out.trial, &exact.ground_state)?)
    } else {
        None
    };
    let tt = match &out.trial {
        TrialHandle::Tt(tt) => tt,
        TrialHandle::Dense(_) => unreachable!("runs built from a config always use TT trials"),
    };
    let report = RunReport {
        mean: stats.mean,
        stderr: stats.stderr,
        naive_stderr: stats.naive_stderr,
        blocking_level: stats.level,
        samples: stats.samples,
        reference_energy: reference,
        relative_error: reference.map(|e| (stats.mean - e) / e.abs()),
        fidelity,
        trial_ranks: tt.ranks(),
        final_alive: out.ensemble.alive(),
        reanchors: out.diagnostics.reanchors.clone(),
        wall_seconds: out.diagnostics.wall_seconds,
        config: config.clone(),
    };
    if write {
        ensure_dir(&config.out_dir)?;
        write_atomic(&config.out_dir.join("trace.csv"), out.trace.to_csv().as_bytes())?;
        write_atomic(
            &config.out_dir.join("summary.json"),
            serde_json::to_string_pretty(&report)?.as_bytes(),
        )?;
        tt.save(config.out_dir.join("trial.tt"))?;
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    /// The swept parameter (`dtau` or walker count).
    pub value: f64,
    pub energy: f64,
    pub stderr: f64,
    /// Deviation from the exact energy, when one is available.
    pub error: Option<f64>,
}

fn sweep_csv(header: &str, rows: &[SweepRow]) -> String {
    let mut s = format!("{header},energy,stderr,error\n");
    for r in rows {
        let err = r.error.map_or(String::new(), |e| format!("{e:.10e}"));
        s.push_str(&format!("{},{:.12},{:.6e},{}\n", r.value, r.energy, r.stderr, err));
    }
    s
}

fn sweep<F>(config: &RunConfig, values: &[f64], apply: F) -> Result<Vec<SweepRow>>
where
    F: Fn(&mut RunConfig, f64),
{
    let lattice = config.build_lattice()?;
    let reference = reference_energy(&lattice, config.g);
    values
        .iter()
        .map(|&v| {
            let mut c = config.clone();
            apply(&mut c, v);
            let r = run_report(&c, false)?;
            Ok(SweepRow {
                value: v,
                energy: r.mean,
                stderr: r.stderr,
                error: reference.map(|e| r.mean - e),
            })
        })
        .collect()
}

fn sorted(values: &[f64], what: &str) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::config(what, "needs at least one value"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::config(what, "values must be finite"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

/// One run per time step, written to `trotter.csv` sorted by `dtau`. The
/// accumulated Trotter bias should scale as `dtau²`.
pub fn cmd_trotter_sweep(config: &RunConfig, dtaus: &[f64]) -> Result<Vec<SweepRow>> {
    let dtaus = sorted(dtaus, "dtau")?;
    let rows = sweep(config, &dtaus, |c, v| c.dtau = v)?;
    ensure_dir(&config.out_dir)?;
    write_atomic(&config.out_dir.join("trotter.csv"), sweep_csv("dtau", &rows).as_bytes())?;
    Ok(rows)
}

/// One run per walker count, written to `popsize.csv`.
pub fn cmd_popsize_sweep(config: &RunConfig, sizes: &[usize]) -> Result<Vec<SweepRow>> {
    if sizes.contains(&0) {
        return Err(Error::config("walkers", "walker counts must be at least 1"));
    }
    let values: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let values = sorted(&values, "walkers")?;
    let rows = sweep(config, &values, |c, v| c.n_walkers = v as usize)?;
    ensure_dir(&config.out_dir)?;
    write_atomic(&config.out_dir.join("popsize.csv"), sweep_csv("walkers", &rows).as_bytes())?;
    Ok(rows)
}

/// Energies at each `g` and `g + dg` with the forward-difference slope,
/// written to `gsweep.csv`.
pub fn cmd_gsweep(config: &RunConfig, g_values: &[f64], dg: f64) -> Result<Vec<GPoint>> {
    let g_values = sorted(g_values, "g")?;
    if g_values[0] < 0.0 {
        return Err(Error::config("g", "field strengths must be >= 0"));
    }
    let points = driver::g_sweep(config, &g_values, dg)?;
    let mut s = String::from("g,energy,energy_shifted,derivative\n");
    for p in &points {
        s.push_str(&format!("{},{:.12},{:.12},{:.10}\n", p.g, p.energy, p.energy_shifted, p.derivative));
    }
    ensure_dir(&config.out_dir)?;
    write_atomic(&config.out_dir.join("gsweep.csv"), s.as_bytes())?;
    Ok(points)
}
