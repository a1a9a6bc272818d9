//! Time-step error of the re-anchored estimator on a small chain. The
//! bias should shrink roughly fourfold each time `dtau` is halved, until it
//! drops below the statistical error.
//!
//! cargo run --release --example trotter_bias -- [sites] [walkers]

use afqmc_tt::config::RunConfig;
use afqmc_tt::driver::{reference_energy, run};

fn main() -> afqmc_tt::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let sites = args.first().copied().unwrap_or(8);
    let walkers = args.get(1).copied().unwrap_or(2000);
    let base = RunConfig { sites, n_walkers: walkers, ..RunConfig::default() };
    let exact = reference_energy(&base.build_lattice()?, base.g).expect("periodic chain");
    println!("{:>7} {:>14} {:>10} {:>12}", "dtau", "energy", "stderr", "bias");
    for dtau in [0.2, 0.1, 0.05, 0.025] {
        // fixed projection time of 20
        let steps = (20.0 / dtau) as usize;
        let config = RunConfig {
            dtau,
            total_steps: steps,
            sketch_every: (steps / 40).max(1),
            sketch_stop_step: steps / 2,
            measure_every: (steps / 400).max(1),
            popcontrol_every: (steps / 400).max(1),
            ..base.clone()
        };
        let out = run(&config)?;
        let s = out.trace.summary(config.equilibration())?;
        println!("{dtau:>7} {:>14.8} {:>10.2e} {:>+12.3e}", s.mean, s.stderr, s.mean - exact);
    }
    Ok(())
}
