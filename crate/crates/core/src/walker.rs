//! Walkers, their propagation under the split TFI propagator, and the comb
//! population control.
//!
//! A walker is a product state `φ` with weight `w`; the ensemble represents
//! `Σ_k w_k φ_k / O_tr(φ_k)`. Only that ratio matters, so site vectors are
//! renormalized after every update and the cached overlap always refers to
//! the stored (normalized) state.
//!
//! Against a tensor-train trial each walker keeps left partials
//! `L_k = Π_{m<k} M_m` and right partials `R_k = Π_{m≥k} M_m`, where
//! `M_m = Σ_i φ_m(i) G_m[i]`. Touching site `m` invalidates `L_{>m}` and
//! `R_{≤m}`; they are rebuilt lazily on the next query, so sweeping
//! nearest-neighbour bonds in chain order costs `O(d r²)` per sweep.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spin_model::{spin_z, Lattice, PropagatorSet};
use crate::tensor_train::{ProductState, TensorTrain, DENSE_SITE_CAP};
use crate::util::{keyed_rng, STREAM_POPCONTROL, STREAM_WALKER};

/// A trial given by its full amplitude vector (site 0 most significant).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTrial {
    d: usize,
    amplitudes: Vec<f64>,
}

impl DenseTrial {
    pub fn new(d: usize, amplitudes: Vec<f64>) -> Result<Self> {
        if d > DENSE_SITE_CAP {
            return Err(Error::TooManySites {
                what: "dense trial",
                sites: d,
                cap: DENSE_SITE_CAP,
            });
        }
        if amplitudes.len() != 1 << d {
            return Err(Error::DimensionMismatch {
                expected: 1 << d,
                found: amplitudes.len(),
            });
        }
        if amplitudes.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("dense trial has non-finite entries"));
        }
        Ok(DenseTrial { d, amplitudes })
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    /// Contracts every site except `free` against `phi`. The result is
    /// indexed by the free sites' spins, earliest site most significant.
    fn env(&self, phi: &ProductState, free: &[usize]) -> Vec<f64> {
        let mut t: Vec<f64> = Vec::new();
        let mut inner = 1usize;
        let mut borrowed = true;
        for j in (0..self.d).rev() {
            if free.contains(&j) {
                inner *= 2;
                continue;
            }
            let src: &[f64] = if borrowed { &self.amplitudes } else { &t };
            let s = phi.site(j);
            let outer = src.len() / (2 * inner);
            let mut next = vec![0.0; outer * inner];
            for o in 0..outer {
                let base = o * 2 * inner;
                for f in 0..inner {
                    next[o * inner + f] = s[0] * src[base + f] + s[1] * src[base + inner + f];
                }
            }
            t = next;
            borrowed = false;
        }
        if borrowed {
            self.amplitudes.clone()
        } else {
            t
        }
    }
}

/// The trial wavefunction used for importance sampling, the constraint and
/// the mixed estimator.
#[derive(Clone, Debug, PartialEq)]
pub enum TrialHandle {
    Tt(TensorTrain),
    Dense(DenseTrial),
}

impl TrialHandle {
    pub fn product(phi: &ProductState) -> Self {
        TrialHandle::Tt(TensorTrain::from_product(phi))
    }

    pub fn dense(amplitudes: Vec<f64>) -> Result<Self> {
        let d = amplitudes.len().trailing_zeros() as usize;
        Ok(TrialHandle::Dense(DenseTrial::new(d, amplitudes)?))
    }

    pub fn num_sites(&self) -> usize {
        match self {
            TrialHandle::Tt(tt) => tt.num_sites(),
            TrialHandle::Dense(v) => v.d,
        }
    }

    /// `⟨Ψ_tr, φ⟩` by direct contraction, without any walker caches.
    pub fn overlap(&self, phi: &ProductState) -> Result<f64> {
        match self {
            TrialHandle::Tt(tt) => tt.product_overlap(phi),
            TrialHandle::Dense(v) => {
                if phi.num_sites() != v.d {
                    return Err(Error::DimensionMismatch {
                        expected: v.d,
                        found: phi.num_sites(),
                    });
                }
                Ok(v.env(phi, &[])[0])
            }
        }
    }

    pub fn to_dense(&self) -> Result<Vec<f64>> {
        match self {
            TrialHandle::Tt(tt) => tt.to_dense(),
            TrialHandle::Dense(v) => Ok(v.amplitudes.clone()),
        }
    }

    pub fn as_tt(&self) -> Option<&TensorTrain> {
        match self {
            TrialHandle::Tt(tt) => Some(tt),
            TrialHandle::Dense(_) => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            TrialHandle::Tt(tt) => tt.cores().iter().all(|c| c.data().iter().all(|x| x.is_finite())),
            TrialHandle::Dense(v) => v.amplitudes.iter().all(|x| x.is_finite()),
        }
    }
}

/// Lazily maintained left/right partial contractions against a TT trial.
#[derive(Clone, Debug, PartialEq)]
struct Partials {
    stride: usize,
    left: Vec<f64>,
    right: Vec<f64>,
    l_ok: usize,
    r_ok: usize,
    scratch: [Vec<f64>; 3],
}

impl Partials {
    fn new(tt: &TensorTrain) -> Self {
        let d = tt.num_sites();
        let stride = tt.max_rank().max(1);
        let mut left = vec![0.0; (d + 1) * stride];
        let mut right = vec![0.0; (d + 1) * stride];
        left[0] = 1.0;
        right[d * stride] = 1.0;
        Partials {
            stride,
            left,
            right,
            l_ok: 0,
            r_ok: d,
            scratch: [vec![0.0; stride], vec![0.0; stride], vec![0.0; stride]],
        }
    }

    fn invalidate(&mut self, site: usize) {
        self.l_ok = self.l_ok.min(site);
        self.r_ok = self.r_ok.max(site + 1);
    }

    fn invalidate_all(&mut self, d: usize) {
        self.l_ok = 0;
        self.r_ok = d;
    }

    fn ensure_left(&mut self, tt: &TensorTrain, phi: &ProductState, k: usize) {
        let s = self.stride;
        while self.l_ok < k {
            let j = self.l_ok;
            let (done, todo) = self.left.split_at_mut((j + 1) * s);
            tt.core(j).transfer_left(&done[j * s..], phi.site(j), todo);
            self.l_ok += 1;
        }
    }

    fn ensure_right(&mut self, tt: &TensorTrain, phi: &ProductState, k: usize) {
        let s = self.stride;
        while self.r_ok > k {
            let j = self.r_ok - 1;
            let (todo, done) = self.right.split_at_mut((j + 1) * s);
            tt.core(j).transfer_right(phi.site(j), done, &mut todo[j * s..]);
            self.r_ok -= 1;
        }
    }

    fn overlap(&mut self, tt: &TensorTrain, phi: &ProductState) -> f64 {
        let d = tt.num_sites();
        self.ensure_left(tt, phi, d);
        self.left[d * self.stride]
    }

    /// `E(a) = L_i G_i[a] R_{i+1}`.
    fn site_env(&mut self, tt: &TensorTrain, phi: &ProductState, i: usize) -> [f64; 2] {
        self.ensure_left(tt, phi, i);
        self.ensure_right(tt, phi, i + 1);
        let s = self.stride;
        let core = tt.core(i);
        let r = core.right();
        let mut out = [0.0; 2];
        for (a, o) in out.iter_mut().enumerate() {
            let tmp = &mut self.scratch[0];
            core.row_times_slice(&self.left[i * s..], a, tmp);
            *o = tmp[..r]
                .iter()
                .zip(&self.right[(i + 1) * s..(i + 1) * s + r])
                .map(|(x, y)| x * y)
                .sum();
        }
        out
    }

    /// `E(a, b) = L_i G_i[a] (Π_{i<m<j} M_m) G_j[b] R_{j+1}` for `i < j`.
    fn pair_env(&mut self, tt: &TensorTrain, phi: &ProductState, i: usize, j: usize) -> [[f64; 2]; 2] {
        self.ensure_left(tt, phi, i);
        self.ensure_right(tt, phi, j + 1);
        let s = self.stride;
        let cj = tt.core(j);
        let mut out = [[0.0; 2]; 2];
        let [v, w, col] = &mut self.scratch;
        for (a, row) in out.iter_mut().enumerate() {
            tt.core(i).row_times_slice(&self.left[i * s..], a, v);
            for m in i + 1..j {
                tt.core(m).transfer_left(v, phi.site(m), w);
                std::mem::swap(v, w);
            }
            for (b, e) in row.iter_mut().enumerate() {
                cj.slice_times_col(b, &self.right[(j + 1) * s..], col);
                *e = v[..cj.left()].iter().zip(&col[..cj.left()]).map(|(x, y)| x * y).sum();
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Cache {
    Tt(Partials),
    Dense,
}

impl Cache {
    fn for_trial(trial: &TrialHandle) -> Self {
        match trial {
            TrialHandle::Tt(tt) => Cache::Tt(Partials::new(tt)),
            TrialHandle::Dense(_) => Cache::Dense,
        }
    }
}

/// Overlaps of one bond update for both auxiliary fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BondBranches {
    /// `⟨Ψ_tr, e^{xλ(σ^z_i+σ^z_j)} φ⟩` for `x = +1, -1`, without the
    /// `e^{-Δτ}` prefactor.
    pub overlaps: [f64; 2],
    /// `⟨Ψ_tr, φ⟩` before the update.
    pub current: f64,
}

impl BondBranches {
    /// `N = e^{-Δτ} · ½ Σ_x max(Õ(x), 0) / O`.
    pub fn normalization(&self, props: &PropagatorSet) -> f64 {
        let [p, m] = self.overlaps;
        props.bond_prefactor * 0.5 * (p.max(0.0) + m.max(0.0)) / self.current
    }

    /// Importance-sampled probability of `x = +1`.
    pub fn prob_plus(&self) -> f64 {
        let [p, m] = self.overlaps;
        let (p, m) = (p.max(0.0), m.max(0.0));
        p / (p + m)
    }
}

#[derive(Clone, Debug)]
pub struct Walker {
    state: ProductState,
    weight: f64,
    overlap: f64,
    cache: Cache,
}

impl Walker {
    /// Unit-weight walker; killed at birth if its overlap is not positive.
    pub fn new(state: ProductState, trial: &TrialHandle) -> Result<Self> {
        Walker::with_weight(state, 1.0, trial)
    }

    pub fn with_weight(mut state: ProductState, weight: f64, trial: &TrialHandle) -> Result<Self> {
        if state.num_sites() != trial.num_sites() {
            return Err(Error::DimensionMismatch {
                expected: trial.num_sites(),
                found: state.num_sites(),
            });
        }
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::invalid(format!("walker weight must be >= 0, got {weight}")));
        }
        state.normalize_sites();
        let mut w = Walker {
            state,
            weight,
            overlap: 0.0,
            cache: Cache::for_trial(trial),
        };
        w.refresh_overlap(trial);
        Ok(w)
    }

    pub fn state(&self) -> &ProductState {
        &self.state
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Cached `max(⟨Ψ_tr, φ⟩, 0)` of the stored state.
    pub fn overlap(&self) -> f64 {
        self.overlap
    }

    pub fn is_alive(&self) -> bool {
        self.weight > 0.0
    }

    fn kill(&mut self) {
        self.weight = 0.0;
        self.overlap = 0.0;
    }

    /// Full recontraction; kills the walker if the overlap is not positive.
    fn refresh_overlap(&mut self, trial: &TrialHandle) {
        let o = self.raw_overlap(trial);
        if o > 0.0 {
            self.overlap = o;
        } else {
            self.kill();
        }
    }

    fn raw_overlap(&mut self, trial: &TrialHandle) -> f64 {
        match (trial, &mut self.cache) {
            (TrialHandle::Tt(tt), Cache::Tt(p)) => p.overlap(tt, &self.state),
            (TrialHandle::Dense(v), _) => v.env(&self.state, &[])[0],
            _ => unreachable!("walker cache does not match the trial"),
        }
    }

    fn site_env(&mut self, trial: &TrialHandle, i: usize) -> [f64; 2] {
        match (trial, &mut self.cache) {
            (TrialHandle::Tt(tt), Cache::Tt(p)) => p.site_env(tt, &self.state, i),
            (TrialHandle::Dense(v), _) => {
                let e = v.env(&self.state, &[i]);
                [e[0], e[1]]
            }
            _ => unreachable!("walker cache does not match the trial"),
        }
    }

    fn pair_env(&mut self, trial: &TrialHandle, i: usize, j: usize) -> [[f64; 2]; 2] {
        let (i, j) = (i.min(j), i.max(j));
        match (trial, &mut self.cache) {
            (TrialHandle::Tt(tt), Cache::Tt(p)) => p.pair_env(tt, &self.state, i, j),
            (TrialHandle::Dense(v), _) => {
                let e = v.env(&self.state, &[i, j]);
                [[e[0], e[1]], [e[2], e[3]]]
            }
            _ => unreachable!("walker cache does not match the trial"),
        }
    }

    fn touched(&mut self, site: usize) {
        if let Cache::Tt(p) = &mut self.cache {
            p.invalidate(site);
        }
    }

    /// `φ ← B_{H_1/2} φ`, `w ← w · O_tr(φ') / O_tr(φ)`.
    pub fn apply_one_body(&mut self, trial: &TrialHandle, props: &PropagatorSet) {
        let m = props.one_body_half;
        if !self.is_alive() || m == [[1.0, 0.0], [0.0, 1.0]] {
            return;
        }
        for j in 0..self.state.num_sites() {
            let s = self.state.site_mut(j);
            *s = [m[0][0] * s[0] + m[0][1] * s[1], m[1][0] * s[0] + m[1][1] * s[1]];
        }
        let scale = self.state.normalize_sites();
        if let Cache::Tt(p) = &mut self.cache {
            p.invalidate_all(self.state.num_sites());
        }
        let old = self.overlap;
        self.refresh_overlap(trial);
        if self.is_alive() {
            self.weight *= self.overlap * scale / old;
        }
    }

    /// Overlaps of both field branches for one bond. Bond sites may be given
    /// in either order.
    pub fn bond_branches(&mut self, trial: &TrialHandle, bond: (usize, usize), props: &PropagatorSet) -> BondBranches {
        let (i, j) = bond;
        let e = self.pair_env(trial, i, j);
        let (si, sj) = if i < j {
            (self.state.site(i), self.state.site(j))
        } else {
            (self.state.site(j), self.state.site(i))
        };
        let mut overlaps = [0.0; 2];
        let mut current = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                current += e[a][b] * si[a] * sj[b];
            }
        }
        for (slot, x) in [1i8, -1].into_iter().enumerate() {
            let f = props.field_diagonal(x);
            let mut acc = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    acc += e[a][b] * si[a] * f[a] * sj[b] * f[b];
                }
            }
            overlaps[slot] = acc;
        }
        BondBranches { overlaps, current }
    }

    /// Applies field `x` on the bond with the importance-sampled weight
    /// factor `N` from `branches`. The chosen branch must have positive
    /// overlap.
    pub fn apply_field(&mut self, bond: (usize, usize), x: i8, branches: &BondBranches, props: &PropagatorSet) {
        let f = props.field_diagonal(x);
        let mut scale = 1.0;
        for site in [bond.0, bond.1] {
            let s = self.state.site_mut(site);
            s[0] *= f[0];
            s[1] *= f[1];
            let n = s[0].hypot(s[1]);
            s[0] /= n;
            s[1] /= n;
            scale *= n;
            self.touched(site);
        }
        let chosen = branches.overlaps[if x > 0 { 0 } else { 1 }];
        self.weight *= branches.normalization(props);
        self.overlap = chosen / scale;
    }

    /// One stochastic bond update with importance sampling.
    pub fn sample_bond<R: Rng + ?Sized>(
        &mut self,
        trial: &TrialHandle,
        bond: (usize, usize),
        props: &PropagatorSet,
        rng: &mut R,
    ) {
        if !self.is_alive() {
            return;
        }
        let br = self.bond_branches(trial, bond, props);
        let [p, m] = br.overlaps;
        if p <= 0.0 && m <= 0.0 {
            self.kill();
            return;
        }
        let u: f64 = rng.random();
        let x = if u < br.prob_plus() { 1 } else { -1 };
        self.apply_field(bond, x, &br, props);
    }

    /// Half one-body step, every bond in order, half one-body step.
    pub fn propagate<R: Rng + ?Sized>(
        &mut self,
        trial: &TrialHandle,
        bonds: &[(usize, usize)],
        props: &PropagatorSet,
        rng: &mut R,
    ) {
        self.apply_one_body(trial, props);
        for &bond in bonds {
            if !self.is_alive() {
                return;
            }
            self.sample_bond(trial, bond, props, rng);
        }
        self.apply_one_body(trial, props);
    }

    /// `⟨Ψ_tr, Hφ⟩ / ⟨Ψ_tr, φ⟩`, each term evaluated as a product-state
    /// overlap through the cached environments.
    pub fn local_energy(&mut self, trial: &TrialHandle, lattice: &Lattice, g: f64) -> Result<f64> {
        if lattice.num_sites() != self.state.num_sites() {
            return Err(Error::DimensionMismatch {
                expected: self.state.num_sites(),
                found: lattice.num_sites(),
            });
        }
        let denom = self.raw_overlap(trial);
        if denom == 0.0 {
            return Err(Error::ZeroOverlap);
        }
        let mut num = 0.0;
        for i in 0..self.state.num_sites() {
            let e = self.site_env(trial, i);
            let s = self.state.site(i);
            num -= g * (e[0] * s[1] + e[1] * s[0]);
        }
        for &(i, j) in lattice.chain_bonds() {
            let e = self.pair_env(trial, i, j);
            let (si, sj) = (self.state.site(i), self.state.site(j));
            for a in 0..2 {
                for b in 0..2 {
                    num -= spin_z(a) * spin_z(b) * e[a][b] * si[a] * sj[b];
                }
            }
        }
        Ok(num / denom)
    }

    /// Swaps in a new trial: caches rebuilt, overlap recomputed, walkers
    /// with non-positive overlap killed. Returns whether this walker died.
    fn reanchor(&mut self, trial: &TrialHandle) -> bool {
        self.cache = Cache::for_trial(trial);
        if !self.is_alive() {
            return false;
        }
        self.refresh_overlap(trial);
        !self.is_alive()
    }
}

/// Walkers compare by state, weight and overlap; caches are derived data.
impl PartialEq for Walker {
    fn eq(&self, other: &Self) -> bool {
        self.state == other.state && self.weight == other.weight && self.overlap == other.overlap
    }
}

/// Copy counts of the comb for the given weights and offset `s ∈ [0, 1)`.
/// Weights are normalized to mean one first; counts always sum to the
/// number of walkers.
pub fn comb_counts(weights: &[f64], offset: f64) -> Result<Vec<usize>> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= 0.0)) || !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroWeight);
    }
    let norm = n as f64 / total;
    let mut s = offset;
    let mut n1 = s.ceil() as usize;
    let mut counts = Vec::with_capacity(n);
    let mut filled = 0usize;
    for &w in weights {
        s += w * norm;
        let n2 = (s.ceil() as usize).max(n1);
        let c = (n2 - n1).min(n - filled);
        counts.push(c);
        filled += c;
        n1 = n2;
    }
    if filled < n {
        // rounding left a slot empty; give it to the heaviest walker
        let k = (0..n).max_by(|&a, &b| weights[a].total_cmp(&weights[b])).unwrap();
        counts[k] += n - filled;
    }
    Ok(counts)
}

/// The walker population plus the bookkeeping needed for reproducible
/// random streams.
#[derive(Clone, Debug)]
pub struct Ensemble {
    walkers: Vec<Walker>,
    seed: u64,
    step: usize,
}

impl Ensemble {
    /// `n` unit-weight copies of `initial`.
    pub fn new(n: usize, initial: &ProductState, trial: &TrialHandle, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("ensemble needs at least one walker"));
        }
        let w = Walker::new(initial.clone(), trial)?;
        if !w.is_alive() {
            return Err(Error::ZeroOverlap);
        }
        Ok(Ensemble {
            walkers: vec![w; n],
            seed,
            step: 0,
        })
    }

    pub fn from_walkers(walkers: Vec<Walker>, seed: u64) -> Self {
        Ensemble { walkers, seed, step: 0 }
    }

    pub fn walkers(&self) -> &[Walker] {
        &self.walkers
    }

    pub(crate) fn walkers_mut(&mut self) -> &mut [Walker] {
        &mut self.walkers
    }

    pub fn len(&self) -> usize {
        self.walkers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walkers.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of completed steps.
    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn alive(&self) -> usize {
        self.walkers.iter().filter(|w| w.is_alive()).count()
    }

    pub fn total_weight(&self) -> f64 {
        self.walkers.iter().map(|w| w.weight).sum()
    }

    /// Advances every live walker by one time step. Each walker draws from
    /// its own stream keyed by `(seed, slot, step)`.
    pub fn step(&mut self, trial: &TrialHandle, lattice: &Lattice, props: &PropagatorSet) -> Result<()> {
        let next = self.step + 1;
        let seed = self.seed;
        let bonds = lattice.chain_bonds();
        self.walkers.par_iter_mut().enumerate().for_each(|(slot, w)| {
            if w.is_alive() {
                let mut rng = keyed_rng(seed, &[STREAM_WALKER, slot as u64, next as u64]);
                w.propagate(trial, bonds, props, &mut rng);
            }
        });
        self.step = next;
        if self.alive() == 0 {
            return Err(Error::AllWalkersDead {
                walkers: self.walkers.len(),
                context: format!("during propagation step {next}"),
            });
        }
        Ok(())
    }

    /// Comb resampling with an offset drawn from the population-control
    /// stream of the current step.
    pub fn population_control(&mut self) -> Result<()> {
        let mut rng = keyed_rng(self.seed, &[STREAM_POPCONTROL, self.step as u64]);
        let offset: f64 = rng.random();
        self.population_control_with_offset(offset)
    }

    pub fn population_control_with_offset(&mut self, offset: f64) -> Result<()> {
        let weights: Vec<f64> = self.walkers.iter().map(|w| w.weight).collect();
        let counts = comb_counts(&weights, offset)?;
        let mut next = Vec::with_capacity(self.walkers.len());
        for (w, &c) in self.walkers.iter().zip(&counts) {
            for _ in 0..c {
                let mut copy = w.clone();
                copy.weight = 1.0;
                next.push(copy);
            }
        }
        self.walkers = next;
        Ok(())
    }

    /// Switches the ensemble to a new trial. Returns the number of walkers
    /// killed by the swap.
    pub fn reanchor_overlaps(&mut self, trial: &TrialHandle) -> Result<usize> {
        if !trial.is_finite() {
            return Err(Error::invalid("new trial has non-finite entries"));
        }
        if let Some(w) = self.walkers.first() {
            if w.state.num_sites() != trial.num_sites() {
                return Err(Error::DimensionMismatch {
                    expected: w.state.num_sites(),
                    found: trial.num_sites(),
                });
            }
        }
        let kills = self
            .walkers
            .par_iter_mut()
            .map(|w| usize::from(w.reanchor(trial)))
            .sum();
        if self.alive() == 0 {
            return Err(Error::AllWalkersDead {
                walkers: self.walkers.len(),
                context: "every overlap with the new trial is non-positive".into(),
            });
        }
        Ok(kills)
    }
}
