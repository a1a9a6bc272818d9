//! Population-control bias in vanilla mode: small populations bias the
//! energy, and the bias falls off roughly as one over the walker count.
//!
//! cargo run --release --example population_bias -- [sites] [seeds]

use afqmc_tt::config::{Mode, RunConfig};
use afqmc_tt::driver::{reference_energy, run};

fn main() -> afqmc_tt::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let sites = args.first().copied().unwrap_or(10);
    let seeds = args.get(1).copied().unwrap_or(5) as u64;
    let base = RunConfig {
        sites,
        mode: Mode::Vanilla,
        total_steps: 2000,
        sketch_stop_step: 1000,
        ..RunConfig::default()
    };
    let exact = reference_energy(&base.build_lattice()?, base.g).expect("periodic chain");
    println!("{:>8} {:>12} {:>12}", "walkers", "mean bias", "stderr");
    for walkers in [20, 50, 200, 1000] {
        let biases: Vec<f64> = (1..=seeds)
            .map(|seed| {
                let config = RunConfig { n_walkers: walkers, seed, ..base.clone() };
                let out = run(&config)?;
                Ok(out.trace.summary(config.equilibration())?.mean - exact)
            })
            .collect::<afqmc_tt::Result<_>>()?;
        let m = biases.iter().sum::<f64>() / biases.len() as f64;
        let var = biases.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (biases.len().max(2) - 1) as f64;
        println!("{walkers:>8} {m:>+12.3e} {:>12.2e}", (var / biases.len() as f64).sqrt());
    }
    Ok(())
}
