//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! The d=16 simulations are shared between criteria 7-10; expect several
//! minutes on one core.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use afqmc_tt::config::{Mode, RunConfig};
use afqmc_tt::driver::{fidelity, run, run_setup, RunSetup, Schedule};
use afqmc_tt::oracle::{dense_propagator, exact_ground, residual_check};
use afqmc_tt::sketching::{make_sketch_pair, sketch_ensemble, sketch_weighted};
use afqmc_tt::spin_model::{
    analytic_chain_energy, dense_field_averaged_two_body, dense_trotter_step, hs_lambda, Lattice, PropagatorSet,
};
use afqmc_tt::tensor_train::{Core, ProductState, TensorTrain};
use afqmc_tt::walker::{TrialHandle, Walker};

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: usize, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("[{}] criterion {id:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

fn positive_tt(d: usize, rng: &mut ChaCha8Rng) -> TensorTrain {
    let max = rng.random_range(1..=4usize);
    let bonds: Vec<usize> = (0..=d)
        .map(|c| if c == 0 || c == d { 1 } else { rng.random_range(1..=max) })
        .collect();
    let cores = (0..d)
        .map(|j| {
            let n = bonds[j] * 2 * bonds[j + 1];
            let data = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
            Core::new(bonds[j], bonds[j + 1], data).unwrap()
        })
        .collect();
    TensorTrain::new(cores).unwrap()
}

fn positive_state(d: usize, rng: &mut ChaCha8Rng) -> ProductState {
    ProductState::new((0..d).map(|_| [rng.random::<f64>() + 0.01, rng.random::<f64>() + 0.01]).collect()).unwrap()
}

fn hs_exactness(r: &mut Report) {
    let lattice = Lattice::open_chain(2).unwrap();
    let mut worst: f64 = 0.0;
    for dtau in [0.001, 0.01, 0.1] {
        let avg = dense_field_averaged_two_body(&lattice, dtau).unwrap();
        // e^{Δτ σ^zσ^z} on two spins is diag(e^Δτ, e^-Δτ, e^-Δτ, e^Δτ)
        let exact = [dtau.exp(), (-dtau).exp(), (-dtau).exp(), dtau.exp()];
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { exact[i] } else { 0.0 };
                worst = worst.max((avg[(i, j)] - want).abs());
            }
        }
        // the same identity from the scalar relation cosh 2λ = e^{2Δτ}
        let l = hs_lambda(dtau);
        worst = worst.max(((-dtau).exp() * (2.0 * l).cosh() - dtau.exp()).abs());
    }
    r.line(1, "HS exactness", worst < 1e-13, format!("max entrywise deviation {worst:.2e} (< 1e-13)"));
}

fn trotter_order(r: &mut Report) {
    let lattice = Lattice::periodic_chain(4).unwrap();
    let err = |dtau: f64| {
        let split = dense_trotter_step(&lattice, 1.0, dtau).unwrap();
        let exact = dense_propagator(&lattice, 1.0, dtau).unwrap();
        spectral_norm(&(split - exact))
    };
    let (e2, e1) = (err(0.02), err(0.01));
    let ratio = e2 / e1;
    r.line(
        2,
        "Trotter order",
        (6.0..=10.0).contains(&ratio),
        format!("error {e2:.3e} -> {e1:.3e}, ratio {ratio:.3} (in [6, 10])"),
    );
}

fn overlap_constancy(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    while count < 1000 {
        let d = rng.random_range(2..=10usize);
        let tt = positive_tt(d, &mut rng);
        let trial = TrialHandle::Tt(tt.clone());
        let dtau = rng.random_range(0.001..0.2);
        let props = PropagatorSet::new(1.0, dtau).unwrap();
        let weight = rng.random_range(0.1..3.0);
        let mut walker = Walker::with_weight(positive_state(d, &mut rng), weight, &trial).unwrap();
        let i = rng.random_range(0..d);
        let mut j = rng.random_range(0..d);
        while j == i {
            j = rng.random_range(0..d);
        }
        let br = walker.bond_branches(&trial, (i, j), &props);
        let p_plus = br.prob_plus();
        // the walker as a whole, Φ = w φ / O_tr(φ), with everything
        // contracted directly instead of through the walker's caches
        let phi = walker.state().clone();
        let o = tt.product_overlap(&phi).unwrap();
        let mut post = [0.0; 2];
        for (k, x) in [1i8, -1].into_iter().enumerate() {
            let f = props.field_diagonal(x);
            let mut sites = phi.sites().to_vec();
            for s in [i, j] {
                sites[s] = [sites[s][0] * f[0], sites[s][1] * f[1]];
            }
            let moved = tt.product_overlap(&ProductState::new(sites).unwrap()).unwrap();
            let p_tilde = if x > 0 { p_plus } else { 1.0 - p_plus };
            post[k] = 0.5 / p_tilde * props.bond_prefactor * weight * moved / o;
        }
        worst = worst.max((post[0] - post[1]).abs() / post[0].abs());
        // and the engine's weight factor N reproduces the same constant
        worst = worst.max((weight * br.normalization(&props) - post[0]).abs() / post[0].abs());
        count += 1;
    }
    r.line(
        3,
        "importance-sampled overlap constancy",
        worst < 1e-12,
        format!("{count} triples, max rel. diff {worst:.2e} (< 1e-12)"),
    );
}

fn zero_variance(r: &mut Report) {
    let lattice = Lattice::open_chain(8).unwrap();
    let exact = exact_ground(&lattice, 1.0).unwrap();
    let trial = TrialHandle::dense(exact.ground_state.clone()).unwrap();
    let setup = RunSetup {
        lattice: lattice.clone(),
        g: 1.0,
        n_walkers: 500,
        schedule: Schedule {
            dtau: 0.01,
            total_steps: 100,
            measure_every: 10,
            popcontrol_every: 10,
            sketch_every: 50,
            sketch_stop_step: 0,
            equilibration_steps: 0,
        },
        seed: 4,
        sketch: None,
        trial: trial.clone(),
        initial_state: ProductState::uniform(8),
    };
    let out = run_setup(&setup).unwrap();
    let mixed_dev = out
        .trace
        .entries
        .iter()
        .map(|e| (e.energy - exact.energy).abs())
        .fold(0.0, f64::max);
    let locals: Vec<f64> = out
        .ensemble
        .walkers()
        .iter()
        .filter(|w| w.is_alive())
        .map(|w| w.clone().local_energy(&trial, &lattice, 1.0).unwrap())
        .collect();
    let mean = locals.iter().sum::<f64>() / locals.len() as f64;
    let std = (locals.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / locals.len() as f64).sqrt();
    r.line(
        4,
        "zero-variance",
        std < 1e-9 && mixed_dev < 1e-9,
        format!("local-energy std {std:.2e}, max |E_mixed - E0| {mixed_dev:.2e} (both < 1e-9)"),
    );
}

fn analytic_vs_exact(r: &mut Report) {
    let mut worst: f64 = 0.0;
    let mut residual: f64 = 0.0;
    for d in [8, 10, 12] {
        let lattice = Lattice::periodic_chain(d).unwrap();
        for g in [0.5, 1.0, 2.0] {
            let s = exact_ground(&lattice, g).unwrap();
            worst = worst.max((s.energy - analytic_chain_energy(d, g)).abs());
            residual = residual.max(residual_check(&s, &lattice, g).unwrap());
        }
    }
    r.line(
        5,
        "analytic vs exact diagonalization",
        worst < 1e-9,
        format!("max |diff| {worst:.2e} (< 1e-9), max eigen-residual {residual:.1e}"),
    );
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn rel_dense(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b)
}

fn sketch_recovery(r: &mut Report) {
    let d = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let single = positive_state(d, &mut rng);
    // four product states summing to a rank-2 train: u(s)+u(t) = u(s+t)
    let u = ProductState::random(d, &mut rng);
    let v = ProductState::random(d, &mut rng);
    let split = |p: &ProductState, rng: &mut ChaCha8Rng| {
        let t: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let mut a = p.sites().to_vec();
        let mut b = p.sites().to_vec();
        b[0] = t;
        a[0] = [a[0][0] - t[0], a[0][1] - t[1]];
        (ProductState::new(a).unwrap(), ProductState::new(b).unwrap())
    };
    let (u1, u2) = split(&u, &mut rng);
    let (v1, v2) = split(&v, &mut rng);
    let four = [u1, u2, v1, v2];
    let target: Vec<f64> = {
        let (du, dv) = (u.to_dense().unwrap(), v.to_dense().unwrap());
        du.iter().zip(&dv).map(|(a, b)| a + b).collect()
    };
    let mut passes = 0;
    let (mut worst1, mut worst2): (f64, f64) = (0.0, 0.0);
    for seed in 0..20u64 {
        let pair = make_sketch_pair(d, 60, 0.1, 1000 + seed).unwrap();
        let t1 = sketch_weighted(&[(1.0, &single)], &pair, &[1; 5]).unwrap();
        let e1 = rel_dense(&t1.to_dense().unwrap(), &single.to_dense().unwrap());
        let terms: Vec<(f64, &ProductState)> = four.iter().map(|p| (1.0, p)).collect();
        let t2 = sketch_weighted(&terms, &pair, &[2; 5]).unwrap();
        let e2 = rel_dense(&t2.to_dense().unwrap(), &target);
        worst1 = worst1.max(e1);
        worst2 = worst2.max(e2);
        if e1 < 1e-8 && e2 < 1e-6 {
            passes += 1;
        }
    }
    r.line(
        6,
        "sketch recovery",
        passes >= 19,
        format!("{passes}/20 seeds pass (>= 19); worst single {worst1:.1e}, worst rank-2 {worst2:.1e}"),
    );
}

struct RunStat {
    mean: f64,
    stderr: f64,
    fidelity: Option<f64>,
}

fn chain_runs(mode: Mode, walkers: usize, seeds: &[u64], reference: Option<&[f64]>) -> Vec<RunStat> {
    seeds
        .iter()
        .map(|&seed| {
            let config = RunConfig {
                seed,
                mode,
                n_walkers: walkers,
                ..RunConfig::default()
            };
            let t = Instant::now();
            let out = run(&config).unwrap();
            let s = out.trace.summary(config.equilibration()).unwrap();
            let fid = reference.map(|psi| fidelity(&out.trial, psi).unwrap());
            eprintln!(
                "  {mode:?} N={walkers} seed {seed}: {:.8} ± {:.2e} ({:.0} s)",
                s.mean,
                s.stderr,
                t.elapsed().as_secs_f64()
            );
            RunStat {
                mean: s.mean,
                stderr: s.stderr,
                fidelity: fid,
            }
        })
        .collect()
}

fn scaling(r: &mut Report) {
    let walkers = 2000;
    let measure = |d: usize| -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
        let ranks: Vec<usize> = (1..d).map(|c| if c == 1 || c + 1 == d { 2 } else { 4 }).collect();
        let bonds: Vec<usize> = std::iter::once(1).chain(ranks.iter().copied()).chain(std::iter::once(1)).collect();
        let cores = (0..d)
            .map(|j| {
                let n = bonds[j] * 2 * bonds[j + 1];
                Core::new(bonds[j], bonds[j + 1], (0..n).map(|_| rng.random::<f64>() + 0.01).collect()).unwrap()
            })
            .collect();
        let trial = TrialHandle::Tt(TensorTrain::new(cores).unwrap());
        let states: Vec<ProductState> = (0..walkers).map(|_| positive_state(d, &mut rng)).collect();
        let mut overlap_time = f64::INFINITY;
        let mut walkers_vec = Vec::new();
        for _ in 0..5 {
            let t = Instant::now();
            walkers_vec = states.iter().map(|s| Walker::new(s.clone(), &trial).unwrap()).collect();
            overlap_time = overlap_time.min(t.elapsed().as_secs_f64());
        }
        let pair = make_sketch_pair(d, 60, 0.1, 9).unwrap();
        let mut sketch_time = f64::INFINITY;
        for _ in 0..3 {
            let t = Instant::now();
            sketch_ensemble(&walkers_vec, &pair, &ranks).unwrap();
            sketch_time = sketch_time.min(t.elapsed().as_secs_f64());
        }
        (sketch_time, overlap_time)
    };
    let (s16, o16) = measure(16);
    let (s32, o32) = measure(32);
    let (rs, ro) = (s32 / s16, o32 / o16);
    r.line(
        11,
        "linear-in-d cost",
        rs <= 2.5 && ro <= 2.5,
        format!(
            "sketch {s16:.3} s -> {s32:.3} s (x{rs:.2}), overlaps {:.1} ms -> {:.1} ms (x{ro:.2}) (both <= 2.5)",
            o16 * 1e3,
            o32 * 1e3
        ),
    );
}

fn main() -> ExitCode {
    let mut r = Report { failures: 0 };
    hs_exactness(&mut r);
    trotter_order(&mut r);
    overlap_constancy(&mut r);
    zero_variance(&mut r);
    analytic_vs_exact(&mut r);
    sketch_recovery(&mut r);

    let d = 16;
    let exact_e = analytic_chain_energy(d, 1.0);
    let exact = exact_ground(&Lattice::periodic_chain(d).unwrap(), 1.0).unwrap();
    let seeds: Vec<u64> = (1..=5).collect();
    let reanchored = chain_runs(Mode::Reanchor, 2000, &seeds, Some(&exact.ground_state));
    let vanilla = chain_runs(Mode::Vanilla, 2000, &seeds, None);

    let ok7: Vec<bool> = reanchored
        .iter()
        .map(|s| rel(s.mean, exact_e) <= 5e-4 && (s.mean - exact_e).abs() <= 3.0 * s.stderr)
        .collect();
    let detail7 = reanchored
        .iter()
        .map(|s| format!("{:+.2e}({:.1}σ)", (s.mean - exact_e) / exact_e.abs(), (s.mean - exact_e).abs() / s.stderr))
        .collect::<Vec<_>>()
        .join(", ");
    r.line(
        7,
        "d=16 re-anchored energy",
        ok7.iter().all(|&b| b),
        format!("rel. errors per seed {detail7} (each <= 5e-4 and within 3σ)"),
    );

    let mean_abs = |v: &[RunStat]| v.iter().map(|s| rel(s.mean, exact_e)).sum::<f64>() / v.len() as f64;
    let (va, ra) = (mean_abs(&vanilla), mean_abs(&reanchored));
    let order = (10f64.powf(-3.5)..=10f64.powf(-2.5)).contains(&va);
    r.line(
        8,
        "re-anchoring beats vanilla",
        va > ra && order,
        format!(
            "mean |rel. error| vanilla {va:.2e} vs re-anchored {ra:.2e}; vanilla of order 1e-3 (in [3.2e-4, 3.2e-3]): {order}; mean stderr vanilla {:.1e}, re-anchored {:.1e}",
            vanilla.iter().map(|s| s.stderr).sum::<f64>() / 5.0,
            reanchored.iter().map(|s| s.stderr).sum::<f64>() / 5.0
        ),
    );

    let fids: Vec<f64> = reanchored.iter().map(|s| s.fidelity.unwrap()).collect();
    let good = fids.iter().filter(|&&f| f >= 0.9).count();
    r.line(
        9,
        "trial fidelity",
        good >= 4,
        format!(
            "fidelities {} ({good}/5 >= 0.9, need 4)",
            fids.iter().map(|f| format!("{f:.4}")).collect::<Vec<_>>().join(", ")
        ),
    );

    let small_seeds: Vec<u64> = (1..=20).collect();
    let small = chain_runs(Mode::Vanilla, 200, &small_seeds, None);
    let bias = |v: &[RunStat]| v.iter().map(|s| s.mean - exact_e).sum::<f64>() / v.len() as f64;
    let (b200, b2000) = (bias(&small), bias(&vanilla));
    r.line(
        10,
        "population-bias direction",
        b200.abs() > b2000.abs(),
        format!(
            "bias N=200 {b200:+.3e} (20 seeds), N=2000 {b2000:+.3e} (5 seeds), ratio {:.1}",
            b200 / b2000
        ),
    );

    scaling(&mut r);

    if r.failures == 0 {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{} criteria failed", r.failures);
        ExitCode::FAILURE
    }
}
