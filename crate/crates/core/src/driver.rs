//! The cp-AFQMC run loop with optional re-anchoring, energy estimators and
//! run statistics.
//!
//! Per step `n = 1..=total_steps`: propagate, then measure (every
//! `measure_every`), then sketch and swap the trial (every `sketch_every`
//! up to `sketch_stop_step`), then population control (every
//! `popcontrol_every`). Measuring first keeps the estimator independent of
//! the resampling noise of the same step.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Mode, RunConfig};
use crate::error::{Error, Result};
use crate::oracle;
use crate::sketching::{make_sketch_pair, sketch_ensemble, SketchPair};
use crate::spin_model::{analytic_chain_energy, Lattice, PropagatorSet};
use crate::tensor_train::{ProductState, TensorTrain};
use crate::walker::{Ensemble, TrialHandle, Walker};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Schedule {
    pub dtau: f64,
    pub total_steps: usize,
    pub measure_every: usize,
    pub popcontrol_every: usize,
    pub sketch_every: usize,
    pub sketch_stop_step: usize,
    pub equilibration_steps: usize,
}

impl Schedule {
    pub fn from_config(c: &RunConfig) -> Self {
        Schedule {
            dtau: c.dtau,
            total_steps: c.total_steps,
            measure_every: c.measure_every,
            popcontrol_every: c.popcontrol_every,
            sketch_every: c.sketch_every,
            sketch_stop_step: c.sketch_stop_step,
            equilibration_steps: c.equilibration(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.measure_every == 0 || self.popcontrol_every == 0 || self.sketch_every == 0 {
            return Err(Error::invalid("schedule intervals must be at least 1"));
        }
        if self.sketch_stop_step > self.total_steps {
            return Err(Error::invalid("sketch_stop_step exceeds total_steps"));
        }
        Ok(())
    }

    fn measures_at(&self, n: usize) -> bool {
        n.is_multiple_of(self.measure_every)
    }

    fn sketches_at(&self, n: usize) -> bool {
        n.is_multiple_of(self.sketch_every) && n <= self.sketch_stop_step
    }

    fn controls_at(&self, n: usize) -> bool {
        n.is_multiple_of(self.popcontrol_every)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceEntry {
    pub step: usize,
    pub energy: f64,
    pub total_weight: f64,
    pub alive: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EnergyTrace {
    pub entries: Vec<TraceEntry>,
}

impl EnergyTrace {
    /// Energies measured at or after `from_step`.
    pub fn energies_from(&self, from_step: usize) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| e.step >= from_step)
            .map(|e| e.energy)
            .collect()
    }

    /// Mean and blocked standard error of the energies from `from_step` on.
    pub fn summary(&self, from_step: usize) -> Result<BlockingResult> {
        blocking_error(&self.energies_from(from_step))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,energy,total_weight,alive\n");
        for e in &self.entries {
            out.push_str(&format!("{},{:.17e},{:.17e},{}\n", e.step, e.energy, e.total_weight, e.alive));
        }
        out
    }
}

/// Parameters of the sketch that replaces the trial.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchSettings {
    pub sketch_rank: usize,
    pub delta: f64,
    pub target_ranks: Vec<usize>,
}

/// Everything `run_setup` needs; `run` builds one from a [`RunConfig`].
#[derive(Clone, Debug)]
pub struct RunSetup {
    pub lattice: Lattice,
    pub g: f64,
    pub n_walkers: usize,
    pub schedule: Schedule,
    pub seed: u64,
    /// `None` runs plain cp-AFQMC with the initial trial throughout.
    pub sketch: Option<SketchSettings>,
    pub trial: TrialHandle,
    pub initial_state: ProductState,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReanchorRecord {
    pub step: usize,
    pub kills: usize,
    pub alive_after: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PhaseTimes {
    pub propagate: f64,
    pub measure: f64,
    pub sketch: f64,
    pub reanchor: f64,
    pub population_control: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub reanchors: Vec<ReanchorRecord>,
    pub wall_seconds: PhaseTimes,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trace: EnergyTrace,
    pub trial: TrialHandle,
    pub ensemble: Ensemble,
    pub diagnostics: Diagnostics,
}

/// `E_local = ⟨Ψ_tr, Hφ⟩ / ⟨Ψ_tr, φ⟩`.
pub fn local_energy(trial: &TrialHandle, walker: &mut Walker, lattice: &Lattice, g: f64) -> Result<f64> {
    walker.local_energy(trial, lattice, g)
}

/// `Σ_k w_k E_local(φ_k) / Σ_k w_k` over live walkers. The reduction is
/// sequential over walker order, so the result does not depend on threads.
pub fn mixed_energy(ensemble: &mut Ensemble, trial: &TrialHandle, lattice: &Lattice, g: f64) -> Result<f64> {
    let terms: Vec<Result<(f64, f64)>> = ensemble
        .walkers_mut()
        .par_iter_mut()
        .map(|w| {
            if w.is_alive() {
                Ok((w.weight(), w.weight() * w.local_energy(trial, lattice, g)?))
            } else {
                Ok((0.0, 0.0))
            }
        })
        .collect();
    let (mut wsum, mut esum) = (0.0, 0.0);
    for t in terms {
        let (w, e) = t?;
        wsum += w;
        esum += e;
    }
    if !(wsum > 0.0) {
        return Err(Error::ZeroWeight);
    }
    Ok(esum / wsum)
}

/// The default initial trial: every site `(1, 1)`.
pub fn disordered_trial(d: usize) -> TrialHandle {
    TrialHandle::Tt(TensorTrain::fully_disordered(d))
}

impl RunSetup {
    pub fn from_config(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let lattice = config.build_lattice()?;
        let d = lattice.num_sites();
        let sketch = match config.mode {
            Mode::Reanchor => Some(SketchSettings {
                sketch_rank: config.sketch_rank,
                delta: config.delta,
                target_ranks: config.resolved_target_ranks(),
            }),
            Mode::Vanilla => None,
        };
        Ok(RunSetup {
            lattice,
            g: config.g,
            n_walkers: config.n_walkers,
            schedule: Schedule::from_config(config),
            seed: config.seed,
            sketch,
            trial: disordered_trial(d),
            initial_state: ProductState::uniform(d),
        })
    }
}

pub fn run(config: &RunConfig) -> Result<RunOutput> {
    run_setup(&RunSetup::from_config(config)?)
}

pub fn run_setup(setup: &RunSetup) -> Result<RunOutput> {
    let sched = setup.schedule;
    sched.validate()?;
    let props = PropagatorSet::new(setup.g, sched.dtau)?;
    let lattice = &setup.lattice;
    let mut trial = setup.trial.clone();
    let mut ensemble = Ensemble::new(setup.n_walkers, &setup.initial_state, &trial, setup.seed)?;
    let pair: Option<(SketchPair, &SketchSettings)> = match &setup.sketch {
        Some(s) => Some((
            make_sketch_pair(lattice.num_sites(), s.sketch_rank, s.delta, setup.seed)?,
            s,
        )),
        None => None,
    };

    let mut trace = EnergyTrace::default();
    let mut diag = Diagnostics::default();
    let mut measure = |ensemble: &mut Ensemble, trial: &TrialHandle, step: usize, times: &mut PhaseTimes| -> Result<()> {
        let t = Instant::now();
        let energy = mixed_energy(ensemble, trial, lattice, setup.g)?;
        trace.entries.push(TraceEntry {
            step,
            energy,
            total_weight: ensemble.total_weight(),
            alive: ensemble.alive(),
        });
        times.measure += t.elapsed().as_secs_f64();
        Ok(())
    };

    measure(&mut ensemble, &trial, 0, &mut diag.wall_seconds)?;
    for n in 1..=sched.total_steps {
        let t = Instant::now();
        ensemble.step(&trial, lattice, &props).map_err(|e| e.at_step(n))?;
        diag.wall_seconds.propagate += t.elapsed().as_secs_f64();

        if sched.measures_at(n) {
            measure(&mut ensemble, &trial, n, &mut diag.wall_seconds).map_err(|e| e.at_step(n))?;
        }
        if let Some((pair, s)) = &pair {
            if sched.sketches_at(n) {
                let t = Instant::now();
                let tt = sketch_ensemble(ensemble.walkers(), pair, &s.target_ranks).map_err(|e| e.at_step(n))?;
                diag.wall_seconds.sketch += t.elapsed().as_secs_f64();
                let t = Instant::now();
                trial = TrialHandle::Tt(tt);
                let kills = ensemble.reanchor_overlaps(&trial).map_err(|e| e.at_step(n))?;
                diag.reanchors.push(ReanchorRecord {
                    step: n,
                    kills,
                    alive_after: ensemble.alive(),
                });
                diag.wall_seconds.reanchor += t.elapsed().as_secs_f64();
            }
        }
        if sched.controls_at(n) {
            let t = Instant::now();
            ensemble.population_control().map_err(|e| e.at_step(n))?;
            diag.wall_seconds.population_control += t.elapsed().as_secs_f64();
        }
    }
    Ok(RunOutput {
        trace,
        trial,
        ensemble,
        diagnostics: diag,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlockingResult {
    pub mean: f64,
    pub stderr: f64,
    /// Standard error without any blocking, for comparison.
    pub naive_stderr: f64,
    /// Blocking level at which the plateau was found.
    pub level: usize,
    pub samples: usize,
}

/// Mean and standard error of a correlated series by pairwise blocking.
///
/// At level `l` neighbouring samples of level `l-1` are averaged, and the
/// naive standard error `s_l` of the blocked series is recorded together
/// with its own uncertainty `s_l / sqrt(2(n_l - 1))`. The reported error is
/// `s_l` at the first level whose successor no longer rises significantly
/// (`s_{l+1} <= s_l + 2 δs_{l+1}`); if none does, the largest `s_l` over
/// levels with at least four blocks.
pub fn blocking_error(samples: &[f64]) -> Result<BlockingResult> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let mut levels: Vec<(f64, f64)> = Vec::new();
    let mut series = samples.to_vec();
    while series.len() >= 4 || levels.is_empty() {
        let m = series.len() as f64;
        let mu = series.iter().sum::<f64>() / m;
        let var = series.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (m * (m - 1.0));
        let se = var.sqrt();
        levels.push((se, se / (2.0 * (m - 1.0)).sqrt()));
        series = series.chunks_exact(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        if series.len() < 2 {
            break;
        }
    }
    let naive = levels[0].0;
    let plateau = (0..levels.len().saturating_sub(1)).find(|&l| levels[l + 1].0 <= levels[l].0 + 2.0 * levels[l + 1].1);
    let (stderr, level) = match plateau {
        Some(l) => (levels[l].0, l),
        None => levels
            .iter()
            .enumerate()
            .map(|(l, &(s, _))| (s, l))
            .fold((0.0, 0), |acc, x| if x.0 > acc.0 { x } else { acc }),
    };
    Ok(BlockingResult {
        mean,
        stderr,
        naive_stderr: naive,
        level,
        samples: n,
    })
}

/// `|⟨a, b⟩| / (‖a‖‖b‖)` between a trial and a dense reference.
pub fn fidelity(trial: &TrialHandle, reference: &[f64]) -> Result<f64> {
    let a = trial.to_dense()?;
    dense_fidelity(&a, reference)
}

pub fn dense_fidelity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            found: a.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("fidelity of a zero vector"));
    }
    Ok((dot.abs() / (na * nb)).min(1.0))
}

/// Exact ground-state energy when one is cheaply available: the closed
/// form for periodic chains, exact diagonalization up to 14 sites.
pub fn reference_energy(lattice: &Lattice, g: f64) -> Option<f64> {
    if lattice.is_periodic_chain() {
        Some(analytic_chain_energy(lattice.num_sites(), g))
    } else if lattice.num_sites() <= 14 {
        oracle::exact_ground(lattice, g).ok().map(|s| s.energy)
    } else {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GPoint {
    pub g: f64,
    pub energy: f64,
    pub energy_shifted: f64,
    /// `(E(g + dg) - E(g)) / dg`.
    pub derivative: f64,
}

/// Forward differences of `energy` at each `g`.
pub fn g_sweep_with<F>(g_values: &[f64], dg: f64, mut energy: F) -> Result<Vec<GPoint>>
where
    F: FnMut(f64) -> Result<f64>,
{
    if g_values.is_empty() {
        return Err(Error::invalid("g sweep needs at least one value"));
    }
    if !(dg > 0.0) || !dg.is_finite() {
        return Err(Error::invalid(format!("dg must be > 0, got {dg}")));
    }
    if g_values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("g values must be strictly increasing"));
    }
    g_values
        .iter()
        .map(|&g| {
            let e = energy(g)?;
            let e2 = energy(g + dg)?;
            Ok(GPoint {
                g,
                energy: e,
                energy_shifted: e2,
                derivative: (e2 - e) / dg,
            })
        })
        .collect()
}

/// One full run at every `g` and at `g + dg`. Both runs of a pair share the
/// seed, so their difference is far less noisy than the energies.
pub fn g_sweep(config: &RunConfig, g_values: &[f64], dg: f64) -> Result<Vec<GPoint>> {
    let from = config.equilibration();
    g_sweep_with(g_values, dg, |g| {
        let c = RunConfig { g, ..config.clone() };
        Ok(run(&c)?.trace.summary(from)?.mean)
    })
}
