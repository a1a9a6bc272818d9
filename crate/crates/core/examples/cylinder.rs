//! Re-anchored run on a 3 x 4 cylinder (periodic around, open along),
//! checked against exact diagonalization.
//!
//! cargo run --release --example cylinder -- [walkers] [steps]

use afqmc_tt::config::RunConfig;
use afqmc_tt::driver::run;
use afqmc_tt::oracle::exact_ground;
use afqmc_tt::spin_model::LatticeKind;

fn main() -> afqmc_tt::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let walkers = args.first().copied().unwrap_or(1000);
    let steps = args.get(1).copied().unwrap_or(2000);
    let config = RunConfig {
        lattice: LatticeKind::Cylinder,
        circumference: 3,
        length: 4,
        g: 3.0,
        n_walkers: walkers,
        total_steps: steps,
        sketch_stop_step: steps / 2,
        ..RunConfig::default()
    };
    config.validate()?;
    let lattice = config.build_lattice()?;
    let out = run(&config)?;
    let s = out.trace.summary(config.equilibration())?;
    let exact = exact_ground(&lattice, config.g)?.energy;
    println!("{} sites, {} bonds, g = {}", lattice.num_sites(), lattice.bonds().len(), config.g);
    println!("energy {:.8} ± {:.2e}", s.mean, s.stderr);
    println!("exact  {exact:.8}");
    println!("rel. error {:+.3e}", (s.mean - exact) / exact.abs());
    Ok(())
}
