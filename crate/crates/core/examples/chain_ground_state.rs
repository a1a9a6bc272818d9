//! Re-anchored cp-AFQMC on a periodic transverse-field Ising chain,
//! compared with the closed-form ground-state energy.
//!
//! cargo run --release --example chain_ground_state -- [sites] [walkers] [steps]

use afqmc_tt::config::RunConfig;
use afqmc_tt::driver::{reference_energy, run};

fn main() -> afqmc_tt::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let sites = args.first().copied().unwrap_or(16);
    let walkers = args.get(1).copied().unwrap_or(2000);
    let steps = args.get(2).copied().unwrap_or(4000);
    let config = RunConfig {
        sites,
        n_walkers: walkers,
        total_steps: steps,
        sketch_stop_step: steps / 2,
        ..RunConfig::default()
    };
    let lattice = config.build_lattice()?;
    let out = run(&config)?;
    let s = out.trace.summary(config.equilibration())?;
    let exact = reference_energy(&lattice, config.g).expect("periodic chain");
    println!("sites {sites}, walkers {walkers}, steps {steps}");
    println!("energy     {:.8} ± {:.2e}", s.mean, s.stderr);
    println!("exact      {exact:.8}");
    println!("rel. error {:+.3e}", (s.mean - exact) / exact.abs());
    let kills: usize = out.diagnostics.reanchors.iter().map(|r| r.kills).sum();
    println!("re-anchors {} (walkers killed: {kills})", out.diagnostics.reanchors.len());
    println!("wall times {:?}", out.diagnostics.wall_seconds);
    Ok(())
}
