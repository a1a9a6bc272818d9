//! Exact references for small systems.
//!
//! Up to [`DENSE_EIGEN_CAP`] sites the Hamiltonian is diagonalized densely.
//! Larger systems (up to [`spin_model::MATRIX_FREE_CAP`]) use Lanczos with
//! full reorthogonalization on the matrix-free Hamiltonian, started from the
//! uniform vector. That start vector is invariant under every lattice
//! symmetry and the global spin flip, so the Krylov space stays in the
//! symmetric sector that holds the (positive) ground state; the reported gap
//! is then the gap inside that sector.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::spin_model::{self, HamiltonianAction, Lattice};

/// Largest system diagonalized densely.
pub const DENSE_EIGEN_CAP: usize = 10;

/// Gap below which the ground state is flagged as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct ExactSolution {
    pub energy: f64,
    pub ground_state: Vec<f64>,
    pub gap: f64,
    /// `gap < DEGENERACY_TOL`; the returned vector is then one arbitrary
    /// member of the ground multiplet.
    pub degenerate: bool,
}

pub fn exact_ground(lattice: &Lattice, g: f64) -> Result<ExactSolution> {
    let d = lattice.num_sites();
    if d > spin_model::MATRIX_FREE_CAP {
        return Err(Error::TooManySites {
            what: "exact diagonalization",
            sites: d,
            cap: spin_model::MATRIX_FREE_CAP,
        });
    }
    let (energy, mut psi, gap) = if d <= DENSE_EIGEN_CAP {
        dense_ground(lattice, g)?
    } else {
        let act = HamiltonianAction::new(lattice, g)?;
        let start = vec![1.0; act.dim()];
        lanczos_ground(|v, out| act.apply(v, out), &start, 1e-12, 400)?
    };
    fix_sign(&mut psi);
    Ok(ExactSolution {
        energy,
        ground_state: psi,
        gap,
        degenerate: gap < DEGENERACY_TOL,
    })
}

fn dense_ground(lattice: &Lattice, g: f64) -> Result<(f64, Vec<f64>, f64)> {
    let h = spin_model::dense_hamiltonian(lattice, g)?;
    let eig = SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let e0 = eig.eigenvalues[idx[0]];
    let gap = idx.get(1).map_or(f64::INFINITY, |&k| eig.eigenvalues[k] - e0);
    let psi = eig.eigenvectors.column(idx[0]).iter().copied().collect();
    Ok((e0, psi, gap.max(0.0)))
}

/// Largest-magnitude entry positive, unit norm.
fn fix_sign(psi: &mut [f64]) {
    let norm = psi.iter().map(|x| x * x).sum::<f64>().sqrt();
    let pivot = psi
        .iter()
        .copied()
        .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    let s = if pivot < 0.0 { -1.0 } else { 1.0 } / norm;
    psi.iter_mut().for_each(|x| *x *= s);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lowest eigenpair of a symmetric operator by Lanczos with full
/// reorthogonalization. Returns `(E0, ψ0, E1_ritz - E0)`.
pub fn lanczos_ground<F>(apply: F, start: &[f64], tol: f64, max_iter: usize) -> Result<(f64, Vec<f64>, f64)>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = start.len();
    let norm0 = dot(start, start).sqrt();
    if norm0 == 0.0 {
        return Err(Error::invalid("zero start vector"));
    }
    let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|x| x / norm0).collect()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let max_iter = max_iter.min(n);

    loop {
        let k = basis.len() - 1;
        apply(&basis[k], &mut w);
        let a = dot(&w, &basis[k]);
        alpha.push(a);
        // two passes of classical Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = dot(&w, &w).sqrt();

        let m = alpha.len();
        let t = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
        let e0 = eig.eigenvalues[idx[0]];
        let last = eig.eigenvectors[(m - 1, idx[0])];
        let residual = (b * last).abs();
        let scale = eig.eigenvalues.iter().fold(1.0f64, |s, v| s.max(v.abs()));

        if residual <= tol * scale || b <= tol * scale || m >= max_iter {
            if residual > 1e3 * tol * scale && b > tol * scale {
                return Err(Error::NoConvergence(format!(
                    "Lanczos residual {residual:.3e} after {m} iterations"
                )));
            }
            let coeffs = eig.eigenvectors.column(idx[0]);
            let mut psi = vec![0.0; n];
            for (q, &c) in basis.iter().zip(coeffs.iter()) {
                psi.iter_mut().zip(q).for_each(|(x, y)| *x += c * y);
            }
            let gap = idx.get(1).map_or(f64::INFINITY, |&k| eig.eigenvalues[k] - e0);
            return Ok((e0, psi, gap));
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
}

/// `‖H ψ0 − E0 ψ0‖₂`.
pub fn residual_check(solution: &ExactSolution, lattice: &Lattice, g: f64) -> Result<f64> {
    let act = HamiltonianAction::new(lattice, g)?;
    if solution.ground_state.len() != act.dim() {
        return Err(Error::DimensionMismatch {
            expected: act.dim(),
            found: solution.ground_state.len(),
        });
    }
    let mut hv = vec![0.0; act.dim()];
    act.apply(&solution.ground_state, &mut hv);
    Ok(hv
        .iter()
        .zip(&solution.ground_state)
        .map(|(h, v)| (h - solution.energy * v).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// `e^{-ΔτH}` from a dense eigendecomposition.
pub fn dense_propagator(lattice: &Lattice, g: f64, dtau: f64) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(spin_model::dense_hamiltonian(lattice, g)?);
    let q = &eig.eigenvectors;
    let expd = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|e| (-dtau * e).exp()),
    );
    Ok(q * DMatrix::from_diagonal(&expd) * q.transpose())
}
