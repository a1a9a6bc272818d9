//! Energy and its field derivative across the ordering transition at
//! g = 1. The slope dE/dg is the (negative) transverse magnetization.
//!
//! cargo run --release --example phase_transition -- [sites] [walkers]

use afqmc_tt::config::RunConfig;
use afqmc_tt::driver::g_sweep;
use afqmc_tt::spin_model::analytic_chain_energy;

fn main() -> afqmc_tt::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let sites = args.first().copied().unwrap_or(10);
    let walkers = args.get(1).copied().unwrap_or(500);
    let config = RunConfig {
        sites,
        n_walkers: walkers,
        total_steps: 1500,
        sketch_stop_step: 750,
        ..RunConfig::default()
    };
    let dg = 0.02;
    let gs = [0.4, 0.7, 0.9, 1.0, 1.1, 1.3, 1.6];
    println!("{:>5} {:>14} {:>14} {:>10} {:>10}", "g", "energy", "exact", "dE/dg", "exact");
    for p in g_sweep(&config, &gs, dg)? {
        let e = analytic_chain_energy(sites, p.g);
        let slope = (analytic_chain_energy(sites, p.g + dg) - e) / dg;
        println!("{:>5} {:>14.8} {e:>14.8} {:>10.5} {slope:>10.5}", p.g, p.energy, p.derivative);
    }
    Ok(())
}
