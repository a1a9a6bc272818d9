//! The same chain simulated twice per seed: once with the fixed disordered
//! trial, once re-anchoring the trial to sketches of the walkers.
//!
//! cargo run --release --example vanilla_vs_reanchored -- [sites] [walkers] [seeds]

use afqmc_tt::config::{Mode, RunConfig};
use afqmc_tt::driver::{reference_energy, run};

fn main() -> afqmc_tt::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let sites = args.first().copied().unwrap_or(16);
    let walkers = args.get(1).copied().unwrap_or(2000);
    let seeds = args.get(2).copied().unwrap_or(3) as u64;
    let base = RunConfig {
        sites,
        n_walkers: walkers,
        ..RunConfig::default()
    };
    let exact = reference_energy(&base.build_lattice()?, base.g).expect("periodic chain");
    println!("seed  mode       energy          stderr     rel. error");
    for seed in 1..=seeds {
        for mode in [Mode::Vanilla, Mode::Reanchor] {
            let config = RunConfig { seed, mode, ..base.clone() };
            let s = run(&config)?.trace.summary(config.equilibration())?;
            println!(
                "{seed:<5} {:<10} {:<15.8} {:<10.2e} {:+.3e}",
                format!("{mode:?}").to_lowercase(),
                s.mean,
                s.stderr,
                (s.mean - exact) / exact.abs()
            );
        }
    }
    Ok(())
}
