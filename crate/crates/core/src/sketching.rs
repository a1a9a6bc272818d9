//! Fitting a walker ensemble into a low-rank tensor train by randomized
//! sketching.
//!
//! The ensemble `Ψ̂ = Σ_k c_k φ_k` is never expanded. Each core is solved
//! from two small sketches: `Y_j`, the data contracted with a left sketch on
//! sites `< j` and a right sketch on sites `> j`, and `X_j`, the left sketch
//! applied to the cores already solved. A second pass trims every bond to
//! the dominant right singular subspace of the corresponding `X_j`.
//!
//! Both sketches are tensor trains whose cores are Gaussian combinations of
//! the cluster basis `v_1 = (1, 1)`, `v_2 = (δ, -δ)`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor_train::{Core, ProductState, TensorTrain, SITE_DIM};
use crate::util::{keyed_rng, STREAM_SKETCH};
use crate::walker::Walker;

/// Relative singular-value cutoff used by the per-core least-squares solves.
pub const LSTSQ_CUTOFF: f64 = 1e-12;

/// Left and right sketch functions shared by every re-anchoring of a run.
#[derive(Clone, Debug)]
pub struct SketchPair {
    left: TensorTrain,
    right: TensorTrain,
    sketch_rank: usize,
    delta: f64,
    seed: u64,
}

impl SketchPair {
    pub fn left(&self) -> &TensorTrain {
        &self.left
    }

    pub fn right(&self) -> &TensorTrain {
        &self.right
    }

    pub fn sketch_rank(&self) -> usize {
        self.sketch_rank
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_sites(&self) -> usize {
        self.left.num_sites()
    }

    /// With `δ = 0` the second basis vector vanishes and both physical
    /// slices of every core coincide, so the sketches cannot tell spin up
    /// from spin down.
    pub fn is_degenerate(&self) -> bool {
        self.delta == 0.0
    }
}

pub fn make_sketch_pair(d: usize, sketch_rank: usize, delta: f64, seed: u64) -> Result<SketchPair> {
    if d < 2 {
        return Err(Error::invalid("sketching needs at least two sites"));
    }
    if sketch_rank == 0 {
        return Err(Error::invalid("sketch rank must be at least 1"));
    }
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::invalid(format!("cluster-basis delta must be >= 0, got {delta}")));
    }
    let mut rng = keyed_rng(seed, &[STREAM_SKETCH]);
    let left = cluster_train(d, sketch_rank, delta, &mut rng)?;
    let right = cluster_train(d, sketch_rank, delta, &mut rng)?;
    Ok(SketchPair {
        left,
        right,
        sketch_rank,
        delta,
        seed,
    })
}

fn cluster_train<R: Rng>(d: usize, rank: usize, delta: f64, rng: &mut R) -> Result<TensorTrain> {
    let basis = [[1.0, 1.0], [delta, -delta]];
    let cores = (0..d)
        .map(|j| {
            let l = if j == 0 { 1 } else { rank };
            let r = if j + 1 == d { 1 } else { rank };
            let mut core = Core::zeros(l, r);
            for a in 0..l {
                for b in 0..r {
                    let c1: f64 = rng.sample(StandardNormal);
                    let c2: f64 = rng.sample(StandardNormal);
                    for i in 0..SITE_DIM {
                        core.set(a, i, b, c1 * basis[0][i] + c2 * basis[1][i]);
                    }
                }
            }
            core
        })
        .collect();
    TensorTrain::new(cores)
}

/// Minimum-norm solution of `X G = Y` through the pseudoinverse of `X`,
/// discarding singular values below `cutoff · σ_max`.
pub fn least_squares_core(x: &DMatrix<f64>, y: &DMatrix<f64>, cutoff: f64) -> Result<DMatrix<f64>> {
    solve_core(x, y, cutoff, 0)
}

fn solve_core(x: &DMatrix<f64>, y: &DMatrix<f64>, cutoff: f64, cut: usize) -> Result<DMatrix<f64>> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.nrows(),
        });
    }
    let (u, sv, v) = thin_svd(x, cut)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    if !(smax > 0.0) || !smax.is_finite() {
        return Err(Error::RankZero { cut });
    }
    let mut uty = u.tr_mul(y);
    for (k, &s) in sv.iter().enumerate() {
        let inv = if s > cutoff * smax { 1.0 / s } else { 0.0 };
        uty.row_mut(k).scale_mut(inv);
    }
    Ok(v * uty)
}

/// Top `r` right singular vectors of `x` as the rows of an `r x ncols` matrix.
fn dominant_row_space(x: &DMatrix<f64>, r: usize, cut: usize) -> Result<DMatrix<f64>> {
    let (_, _, v) = thin_svd(x, cut)?;
    if r > v.ncols() {
        return Err(Error::invalid(format!("target rank {r} exceeds the sketch at cut {cut}")));
    }
    Ok(v.columns(0, r).transpose())
}

/// Thin SVD `x = U diag(s) Vᵀ` with `s` non-increasing. nalgebra's SVD is
/// unreliable on strongly rank-deficient inputs, which are the norm here.
fn thin_svd(x: &DMatrix<f64>, cut: usize) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let m = faer::Mat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)]);
    let svd = m.thin_svd().map_err(|_| Error::NoConvergence(format!("SVD at cut {cut}")))?;
    let (u, v) = (svd.U(), svd.V());
    let s = svd.S().column_vector();
    let u = DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]);
    let v = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)]);
    Ok((u, (0..s.nrows()).map(|k| s[k]).collect(), v))
}

fn check_target_ranks(d: usize, sketch_rank: usize, ranks: &[usize]) -> Result<()> {
    if ranks.len() + 1 != d {
        return Err(Error::DimensionMismatch {
            expected: d - 1,
            found: ranks.len(),
        });
    }
    let bond = |c: usize| if c == 0 || c == d { 1 } else { ranks[c - 1] };
    for c in 1..d {
        let r = bond(c);
        if r == 0 || r > sketch_rank || r > 2 * bond(c - 1) || r > 2 * bond(c + 1) {
            return Err(Error::invalid(format!(
                "target rank {r} at cut {c} incompatible with sketch rank {sketch_rank} and neighbours"
            )));
        }
    }
    Ok(())
}

/// Fits the ensemble `Σ_k w_k φ_k / O_tr(φ_k)` into a train of the given
/// inner ranks. Zero-weight walkers are skipped.
pub fn sketch_ensemble(walkers: &[Walker], pair: &SketchPair, target_ranks: &[usize]) -> Result<TensorTrain> {
    let mut terms = Vec::with_capacity(walkers.len());
    for (k, w) in walkers.iter().enumerate() {
        if w.weight() == 0.0 {
            continue;
        }
        let c = w.weight() / w.overlap();
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::invalid(format!(
                "walker {k} has non-positive coefficient (weight {}, overlap {})",
                w.weight(),
                w.overlap()
            )));
        }
        terms.push((c, w.state()));
    }
    sketch_weighted(&terms, pair, target_ranks)
}

/// Fits `Σ_k c_k φ_k` into a train of the given inner ranks.
pub fn sketch_weighted(
    terms: &[(f64, &ProductState)],
    pair: &SketchPair,
    target_ranks: &[usize],
) -> Result<TensorTrain> {
    let d = pair.num_sites();
    if terms.is_empty() {
        return Err(Error::invalid("nothing to sketch"));
    }
    for (_, phi) in terms {
        if phi.num_sites() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: phi.num_sites(),
            });
        }
    }
    check_target_ranks(d, pair.sketch_rank, target_ranks)?;
    let k = terms.len();
    let coeff: Vec<f64> = terms.iter().map(|t| t.0).collect();
    let site = |n: usize, j: usize| terms[n].1.site(j);

    let left_slices: Vec<[DMatrix<f64>; 2]> = pair
        .left
        .cores()
        .iter()
        .map(|c| [c.slice(0), c.slice(1)])
        .collect();
    let right_slices_t: Vec<[DMatrix<f64>; 2]> = pair
        .right
        .cores()
        .iter()
        .map(|c| [c.slice(0).transpose(), c.slice(1).transpose()])
        .collect();

    // right partials: rows are walkers, entry (n, γ) = T_{j:d} contracted with φ_n on sites >= j
    let mut right_partials: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); d + 1];
    right_partials[d] = DMatrix::from_element(k, 1, 1.0);
    for j in (1..d).rev() {
        right_partials[j] = transfer(&right_partials[j + 1], &right_slices_t[j], |n| site(n, j));
    }

    let mut left_partial = DMatrix::from_element(k, 1, 1.0);
    let mut x = DMatrix::from_element(1, 1, 1.0);
    let mut xs: Vec<DMatrix<f64>> = Vec::with_capacity(d);
    let mut raw: Vec<Core> = Vec::with_capacity(d);

    for j in 0..d {
        let rp = &right_partials[j + 1];
        let mut y_unfolded = DMatrix::zeros(left_partial.ncols(), SITE_DIM * rp.ncols());
        for i in 0..SITE_DIM {
            let mut scaled = rp.clone();
            for n in 0..k {
                scaled.row_mut(n).scale_mut(coeff[n] * site(n, j)[i]);
            }
            let yi = left_partial.tr_mul(&scaled);
            y_unfolded
                .columns_mut(i * rp.ncols(), rp.ncols())
                .copy_from(&yi);
        }
        let g = if j == 0 {
            y_unfolded
        } else {
            solve_core(&x, &y_unfolded, LSTSQ_CUTOFF, j)?
        };
        let core = Core::new(g.nrows(), rp.ncols(), g.transpose().as_slice().to_vec())?;

        if j + 1 < d {
            // X_{j+1} = Σ_i S_j[i]^T X_j G̃_j[i]
            let mut next = DMatrix::zeros(left_slices[j][0].ncols(), core.right());
            for i in 0..SITE_DIM {
                next += left_slices[j][i].tr_mul(&x) * core.slice(i);
            }
            x = next;
            xs.push(x.clone());
            left_partial = transfer(&left_partial, &left_slices[j], |n| site(n, j));
        }
        raw.push(core);
    }

    // second phase: project every bond onto the dominant row space of its X
    let projectors: Vec<DMatrix<f64>> = xs
        .iter()
        .zip(target_ranks)
        .enumerate()
        .map(|(j, (x, &r))| dominant_row_space(x, r, j + 1))
        .collect::<Result<_>>()?;
    let mut cores = Vec::with_capacity(d);
    for (j, core) in raw.iter().enumerate() {
        let mut slices = [core.slice(0), core.slice(1)];
        for s in &mut slices {
            if j > 0 {
                *s = &projectors[j - 1] * &*s;
            }
            if j + 1 < d {
                *s = &*s * projectors[j].transpose();
            }
        }
        cores.push(Core::from_slices(&slices[0], &slices[1])?);
    }

    // keep entries O(1); the overall scale lives in the first core
    let mut scale = 1.0;
    for core in cores.iter_mut().skip(1) {
        let m = core.max_abs();
        if m > 0.0 {
            core.scale(1.0 / m);
            scale *= m;
        }
    }
    cores[0].scale(scale);
    TensorTrain::new(cores)
}

/// `out[n, :] = Σ_i φ_n(i) · partial[n, :] · slices[i]`.
fn transfer(partial: &DMatrix<f64>, slices: &[DMatrix<f64>; 2], site: impl Fn(usize) -> [f64; 2]) -> DMatrix<f64> {
    let a = partial * &slices[0];
    let mut b = partial * &slices[1];
    for n in 0..partial.nrows() {
        let s = site(n);
        for c in 0..b.ncols() {
            b[(n, c)] = s[0] * a[(n, c)] + s[1] * b[(n, c)];
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel_err_up_to_scale(a: &[f64], b: &[f64]) -> f64 {
        // best scalar fit of a onto b
        let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let bb: f64 = b.iter().map(|y| y * y).sum();
        let s = ab / bb;
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - s * y).powi(2)).sum();
        (diff / a.iter().map(|x| x * x).sum::<f64>()).sqrt()
    }

    #[test]
    fn pair_is_deterministic() {
        let a = make_sketch_pair(6, 8, 0.1, 42).unwrap();
        let b = make_sketch_pair(6, 8, 0.1, 42).unwrap();
        assert_eq!(a.left(), b.left());
        assert_eq!(a.right(), b.right());
        let c = make_sketch_pair(6, 8, 0.1, 43).unwrap();
        assert_ne!(a.left(), c.left());
    }

    #[test]
    fn pair_shapes_follow_configuration() {
        let p = make_sketch_pair(16, 60, 0.1, 1).unwrap();
        assert_eq!(p.left().ranks(), vec![60; 15]);
        assert_eq!(p.right().core(0).left(), 1);
        assert_eq!(p.right().core(15).right(), 1);
        assert!(!p.is_degenerate());
    }

    #[test]
    fn zero_delta_is_degenerate() {
        let p = make_sketch_pair(4, 3, 0.0, 1).unwrap();
        assert!(p.is_degenerate());
        for core in p.left().cores() {
            assert_eq!(core.slice(0), core.slice(1));
        }
        assert!(make_sketch_pair(4, 3, -0.1, 1).is_err());
        assert!(make_sketch_pair(4, 0, 0.1, 1).is_err());
    }

    #[test]
    fn cores_live_in_cluster_span() {
        let delta = 0.25;
        let p = make_sketch_pair(5, 4, delta, 9).unwrap();
        let mut rng = keyed_rng(9, &[STREAM_SKETCH]);
        for core in p.left().cores() {
            for a in 0..core.left() {
                for b in 0..core.right() {
                    let c1: f64 = rng.sample(StandardNormal);
                    let c2: f64 = rng.sample(StandardNormal);
                    assert_eq!(core.get(a, 0, b), c1 + delta * c2);
                    assert_eq!(core.get(a, 1, b), c1 - delta * c2);
                }
            }
        }
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let y = DMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64);
        let g = least_squares_core(&DMatrix::identity(3, 3), &y, LSTSQ_CUTOFF).unwrap();
        assert!((g - y).abs().max() < 1e-14);
    }

    #[test]
    fn tiny_singular_values_are_null_space() {
        let x = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1e-20]));
        let y = DMatrix::from_row_slice(2, 1, &[4.0, 1.0]);
        let g = least_squares_core(&x, &y, 1e-12).unwrap();
        assert!((g[(0, 0)] - 2.0).abs() < 1e-15);
        assert_eq!(g[(1, 0)], 0.0);
    }

    #[test]
    fn zero_matrix_is_rank_zero() {
        let x = DMatrix::zeros(3, 3);
        let y = DMatrix::from_element(3, 2, 1.0);
        assert!(matches!(least_squares_core(&x, &y, 1e-12), Err(Error::RankZero { .. })));
    }

    #[test]
    fn recovers_forward_constructed_core() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(6, 6, |i, j| {
            let g: f64 = rng.sample(StandardNormal);
            g + if i == j { 4.0 } else { 0.0 }
        });
        let g = DMatrix::from_fn(6, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &x * &g;
        let back = least_squares_core(&x, &y, LSTSQ_CUTOFF).unwrap();
        assert!((back - g).abs().max() < 1e-10);
    }

    #[test]
    fn single_state_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phi = ProductState::random(6, &mut rng);
        let pair = make_sketch_pair(6, 8, 0.1, 17).unwrap();
        let tt = sketch_weighted(&[(1.0, &phi)], &pair, &[1; 5]).unwrap();
        let err = rel_err_up_to_scale(&tt.to_dense().unwrap(), &phi.to_dense().unwrap());
        assert!(err < 1e-8, "err {err}");
    }

    #[test]
    fn requested_ranks_are_honoured() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let states: Vec<ProductState> = (0..40).map(|_| ProductState::random(8, &mut rng)).collect();
        let terms: Vec<(f64, &ProductState)> = states.iter().map(|s| (1.0, s)).collect();
        let pair = make_sketch_pair(8, 12, 0.1, 3).unwrap();
        let ranks = [2, 4, 4, 4, 4, 4, 2];
        let tt = sketch_weighted(&terms, &pair, &ranks).unwrap();
        assert_eq!(tt.ranks(), ranks.to_vec());
    }

    #[test]
    fn incompatible_ranks_are_rejected() {
        let pair = make_sketch_pair(4, 4, 0.1, 3).unwrap();
        let phi = ProductState::uniform(4);
        assert!(sketch_weighted(&[(1.0, &phi)], &pair, &[4, 4, 2]).is_err());
        assert!(sketch_weighted(&[(1.0, &phi)], &pair, &[2, 8, 2]).is_err());
        assert!(sketch_weighted(&[(1.0, &phi)], &pair, &[2, 2]).is_err());
    }
}
