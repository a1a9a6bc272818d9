//! Property tests against independent dense contractions.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use afqmc_tt::driver::mixed_energy;
use afqmc_tt::oracle::exact_ground;
use afqmc_tt::sketching::{make_sketch_pair, sketch_weighted};
use afqmc_tt::spin_model::{Lattice, PropagatorSet};
use afqmc_tt::tensor_train::{Core, ProductState, TensorTrain};
use afqmc_tt::walker::{comb_counts, Ensemble, TrialHandle, Walker};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_tt(d: usize, max_rank: usize, positive: bool, rng: &mut ChaCha8Rng) -> TensorTrain {
    let bonds: Vec<usize> = (0..=d)
        .map(|c| if c == 0 || c == d { 1 } else { rng.random_range(1..=max_rank) })
        .collect();
    let cores = (0..d)
        .map(|j| {
            let n = bonds[j] * 2 * bonds[j + 1];
            let data = (0..n)
                .map(|_| {
                    let x: f64 = rng.random_range(-1.0..1.0);
                    if positive {
                        x.abs() + 0.01
                    } else {
                        x
                    }
                })
                .collect();
            Core::new(bonds[j], bonds[j + 1], data).unwrap()
        })
        .collect();
    TensorTrain::new(cores).unwrap()
}

fn positive_state(d: usize, rng: &mut ChaCha8Rng) -> ProductState {
    ProductState::new((0..d).map(|_| [rng.random::<f64>() + 0.01, rng.random::<f64>() + 0.01]).collect()).unwrap()
}

fn spin(k: usize, d: usize, j: usize) -> f64 {
    if (k >> (d - 1 - j)) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn product_overlap_matches_dense(seed in any::<u64>(), d in 1usize..8, r in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tt = random_tt(d, r, false, &mut rng);
        let phi = ProductState::random(d, &mut rng);
        let a = tt.product_overlap(&phi).unwrap();
        let b = dot(&tt.to_dense().unwrap(), &phi.to_dense().unwrap());
        let scale: f64 = tt.norm() * phi.to_dense().unwrap().iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((a - b).abs() <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn tt_overlap_matches_dense(seed in any::<u64>(), d in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_tt(d, 3, false, &mut rng);
        let b = random_tt(d, 2, false, &mut rng);
        let want = dot(&a.to_dense().unwrap(), &b.to_dense().unwrap());
        prop_assert!((a.overlap(&b).unwrap() - want).abs() <= 1e-12 * a.norm() * b.norm());
    }

    #[test]
    fn cached_overlaps_track_direct_contraction(seed in any::<u64>(), d in 3usize..9, steps in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lattice = Lattice::periodic_chain(d).unwrap();
        let trial = TrialHandle::Tt(random_tt(d, 4, true, &mut rng));
        let props = PropagatorSet::new(rng.random_range(0.1..2.0), rng.random_range(0.001..0.1)).unwrap();
        let mut w = Walker::new(positive_state(d, &mut rng), &trial).unwrap();
        for _ in 0..steps {
            w.propagate(&trial, lattice.chain_bonds(), &props, &mut rng);
            let direct = trial.overlap(w.state()).unwrap();
            prop_assert!((w.overlap() - direct).abs() <= 1e-12 * direct);
            prop_assert!(w.weight() > 0.0);
        }
    }

    #[test]
    fn one_bond_update_is_unbiased(seed in any::<u64>(), d in 2usize..8) {
        // positive trial: N · O_tr(φ) equals the field-averaged overlap
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tt = random_tt(d, 3, true, &mut rng);
        let psi = tt.to_dense().unwrap();
        let trial = TrialHandle::Tt(tt);
        let props = PropagatorSet::new(1.0, rng.random_range(0.001..0.2)).unwrap();
        let mut w = Walker::new(positive_state(d, &mut rng), &trial).unwrap();
        let i = rng.random_range(0..d);
        let j = (i + 1 + rng.random_range(0..d - 1)) % d;
        let br = w.bond_branches(&trial, (i, j), &props);
        let phi = w.state().to_dense().unwrap();
        let mut avg = 0.0;
        for x in [1.0, -1.0] {
            for k in 0..phi.len() {
                let b = props.bond_prefactor * (x * props.lambda * (spin(k, d, i) + spin(k, d, j))).exp();
                avg += 0.5 * psi[k] * b * phi[k];
            }
        }
        let engine = br.normalization(&props) * br.current;
        prop_assert!((engine - avg).abs() <= 1e-13 * avg);
    }

    #[test]
    fn comb_preserves_population(seed in any::<u64>(), n in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random::<f64>() * 5.0 }).collect();
        prop_assume!(weights.iter().sum::<f64>() > 0.0);
        let counts = comb_counts(&weights, rng.random()).unwrap();
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        for (c, w) in counts.iter().zip(&weights) {
            if *w == 0.0 {
                prop_assert_eq!(*c, 0);
            }
        }
    }

    #[test]
    fn sketch_scales_with_weights(seed in any::<u64>(), alpha in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states: Vec<ProductState> = (0..30).map(|_| positive_state(6, &mut rng)).collect();
        let coeffs: Vec<f64> = (0..30).map(|_| rng.random::<f64>() + 0.1).collect();
        let pair = make_sketch_pair(6, 12, 0.1, seed).unwrap();
        let base: Vec<(f64, &ProductState)> = coeffs.iter().copied().zip(&states).collect();
        let scaled: Vec<(f64, &ProductState)> = coeffs.iter().map(|c| c * alpha).zip(&states).collect();
        let a = sketch_weighted(&base, &pair, &[2, 4, 4, 4, 2]).unwrap().to_dense().unwrap();
        let b = sketch_weighted(&scaled, &pair, &[2, 4, 4, 4, 2]).unwrap().to_dense().unwrap();
        let na = dot(&a, &a).sqrt();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((alpha * x - y).abs() <= 1e-10 * alpha * na);
        }
    }
}

#[test]
fn comb_copy_counts_are_unbiased() {
    let weights = [0.3, 1.7, 0.05, 2.4, 1.0, 0.55];
    let n = weights.len() as f64;
    let total: f64 = weights.iter().sum();
    let reps = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut sum = vec![0.0; weights.len()];
    let mut sumsq = vec![0.0; weights.len()];
    for _ in 0..reps {
        let c = comb_counts(&weights, rng.random()).unwrap();
        for k in 0..weights.len() {
            sum[k] += c[k] as f64;
            sumsq[k] += (c[k] * c[k]) as f64;
        }
    }
    for k in 0..weights.len() {
        let mean = sum[k] / reps as f64;
        let var = sumsq[k] / reps as f64 - mean * mean;
        let se = (var / reps as f64).sqrt();
        let expected = weights[k] * n / total;
        assert!((mean - expected).abs() <= 3.0 * se + 1e-12, "walker {k}: {mean} vs {expected} (se {se})");
    }
}

#[test]
fn exact_recovery_across_sketch_seeds() {
    // data that is exactly a rank-(2,2,2,2,2) train
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u = positive_state(6, &mut rng);
    let v = positive_state(6, &mut rng);
    let want: Vec<f64> = u
        .to_dense()
        .unwrap()
        .iter()
        .zip(v.to_dense().unwrap())
        .map(|(a, b)| 2.0 * a + 0.5 * b)
        .collect();
    let mut good = 0;
    for seed in 0..20 {
        let pair = make_sketch_pair(6, 10, 0.1, seed).unwrap();
        let tt = sketch_weighted(&[(2.0, &u), (0.5, &v)], &pair, &[2; 5]).unwrap();
        let got = tt.to_dense().unwrap();
        let err: f64 = got.iter().zip(&want).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / dot(&want, &want).sqrt();
        if err < 1e-8 {
            good += 1;
        }
    }
    assert!(good >= 19, "{good}/20");
}

#[test]
fn zero_variance_holds_at_every_step() {
    let lattice = Lattice::open_chain(6).unwrap();
    let exact = exact_ground(&lattice, 1.3).unwrap();
    let trial = TrialHandle::dense(exact.ground_state).unwrap();
    let props = PropagatorSet::new(1.3, 0.02).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut e = Ensemble::new(20, &positive_state(6, &mut rng), &trial, 8).unwrap();
    for _ in 0..20 {
        e.step(&trial, &lattice, &props).unwrap();
        for w in e.walkers() {
            let el = w.clone().local_energy(&trial, &lattice, 1.3).unwrap();
            assert!((el - exact.energy).abs() < 1e-10);
        }
        e.population_control().unwrap();
    }
}

#[test]
fn mixed_energy_is_weighted_mean_of_local_energies() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let lattice = Lattice::periodic_chain(7).unwrap();
    let trial = TrialHandle::Tt(random_tt(7, 3, true, &mut rng));
    let walkers: Vec<Walker> = (0..25)
        .map(|_| Walker::with_weight(positive_state(7, &mut rng), rng.random::<f64>() * 2.0, &trial).unwrap())
        .collect();
    let (mut num, mut den) = (0.0, 0.0);
    for w in &walkers {
        num += w.weight() * w.clone().local_energy(&trial, &lattice, 0.9).unwrap();
        den += w.weight();
    }
    let mut e = Ensemble::from_walkers(walkers, 0);
    let m = mixed_energy(&mut e, &trial, &lattice, 0.9).unwrap();
    assert!((m - num / den).abs() <= 1e-13 * m.abs());
}

#[test]
fn dense_local_energy_matches_hamiltonian_action() {
    use afqmc_tt::spin_model::HamiltonianAction;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let lattice = Lattice::cylinder(3, 3).unwrap();
    let tt = random_tt(9, 3, true, &mut rng);
    let psi = tt.to_dense().unwrap();
    let trial = TrialHandle::Tt(tt);
    let h = HamiltonianAction::new(&lattice, 0.7).unwrap();
    for _ in 0..5 {
        let phi = positive_state(9, &mut rng);
        let v = phi.to_dense().unwrap();
        let mut hv = vec![0.0; v.len()];
        h.apply(&v, &mut hv);
        let want = dot(&psi, &hv) / dot(&psi, &v);
        let got = Walker::new(phi, &trial).unwrap().local_energy(&trial, &lattice, 0.7).unwrap();
        assert!((got - want).abs() <= 1e-11 * want.abs());
    }
}
