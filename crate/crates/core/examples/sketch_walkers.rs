//! Compressing a walker ensemble into a low-rank trial by sketching.
//!
//! Walkers are propagated for a while under the disordered trial, then
//! `Σ w_k φ_k / O(φ_k)` is fitted with ranks (2, 4, …, 4, 2) and compared
//! with the exact ground state.
//!
//! cargo run --release --example sketch_walkers -- [sites] [walkers] [steps]

use afqmc_tt::driver::{disordered_trial, fidelity};
use afqmc_tt::oracle::exact_ground;
use afqmc_tt::sketching::{make_sketch_pair, sketch_ensemble};
use afqmc_tt::spin_model::{Lattice, PropagatorSet};
use afqmc_tt::tensor_train::ProductState;
use afqmc_tt::walker::{Ensemble, TrialHandle};

fn main() -> afqmc_tt::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let d = args.first().copied().unwrap_or(10);
    let n = args.get(1).copied().unwrap_or(1000);
    let steps = args.get(2).copied().unwrap_or(300);
    let g = 1.0;

    let lattice = Lattice::periodic_chain(d)?;
    let props = PropagatorSet::new(g, 0.01)?;
    let trial = disordered_trial(d);
    let mut ensemble = Ensemble::new(n, &ProductState::uniform(d), &trial, 7)?;
    for step in 1..=steps {
        ensemble.step(&trial, &lattice, &props)?;
        if step % 10 == 0 {
            ensemble.population_control()?;
        }
    }

    let exact = exact_ground(&lattice, g)?;
    println!("fidelity of the disordered trial: {:.4}", fidelity(&trial, &exact.ground_state)?);
    let mut ranks = vec![4; d - 1];
    ranks[0] = 2;
    ranks[d - 2] = 2;
    for sketch_rank in [10, 30, 60] {
        let pair = make_sketch_pair(d, sketch_rank, 0.1, 11)?;
        let tt = sketch_ensemble(ensemble.walkers(), &pair, &ranks)?;
        let f = fidelity(&TrialHandle::Tt(tt), &exact.ground_state)?;
        println!("sketch rank {sketch_rank:>3}: fidelity {f:.4}");
    }
    Ok(())
}
