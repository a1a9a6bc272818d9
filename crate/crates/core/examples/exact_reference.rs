//! Exact ground-state references: the closed-form periodic-chain energy,
//! dense/Lanczos diagonalization, and an eigen-residual check.
//!
//! cargo run --release --example exact_reference

use afqmc_tt::oracle::{exact_ground, residual_check};
use afqmc_tt::spin_model::{analytic_chain_energy, Lattice};

fn main() -> afqmc_tt::Result<()> {
    println!("{:>6} {:>5} {:>16} {:>16} {:>10}", "sites", "g", "closed form", "diagonalized", "residual");
    for d in [6, 8, 10, 12] {
        for g in [0.5, 1.0, 2.0] {
            let lattice = Lattice::periodic_chain(d)?;
            let exact = exact_ground(&lattice, g)?;
            let res = residual_check(&exact, &lattice, g)?;
            println!(
                "{d:>6} {g:>5} {:>16.10} {:>16.10} {res:>10.1e}",
                analytic_chain_energy(d, g),
                exact.energy
            );
        }
    }

    // no closed form off the periodic chain
    for (name, lattice) in [
        ("open chain 10", Lattice::open_chain(10)?),
        ("cylinder 3x4", Lattice::cylinder(3, 4)?),
    ] {
        let exact = exact_ground(&lattice, 1.0)?;
        println!("{name}: E0 = {:.10} (residual {:.1e})", exact.energy, residual_check(&exact, &lattice, 1.0)?);
    }
    Ok(())
}
