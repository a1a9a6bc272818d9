//! Transverse-field Ising model `H = -g Σ σ^x_i - Σ_<ij> σ^z_i σ^z_j`.
//!
//! Lattices, the split-step propagators used by the walkers, the discrete
//! Hubbard-Stratonovich constants, and dense/analytic references.
//!
//! All site indices handed to the rest of the crate are chain positions,
//! i.e. lattice sites already mapped through [`Lattice::tt_order`].

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest system for which a dense `2^d x 2^d` Hamiltonian is built.
pub const DENSE_HAMILTONIAN_CAP: usize = 12;

/// Largest system the matrix-free Hamiltonian action accepts.
pub const MATRIX_FREE_CAP: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Chain,
    Grid,
    Cylinder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

impl fmt::Display for LatticeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LatticeKind::Chain => "chain",
            LatticeKind::Grid => "grid",
            LatticeKind::Cylinder => "cylinder",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    kind: LatticeKind,
    dims: Vec<usize>,
    boundary: Vec<Boundary>,
    bonds: Vec<(usize, usize)>,
    tt_order: Vec<usize>,
    chain_bonds: Vec<(usize, usize)>,
}

impl Lattice {
    /// A 1D chain of `d` sites.
    pub fn chain(d: usize, boundary: Boundary) -> Result<Self> {
        build_lattice(LatticeKind::Chain, &[d], &[boundary])
    }

    pub fn periodic_chain(d: usize) -> Result<Self> {
        Lattice::chain(d, Boundary::Periodic)
    }

    pub fn open_chain(d: usize) -> Result<Self> {
        Lattice::chain(d, Boundary::Open)
    }

    /// `rows x cols` grid with per-axis boundaries `[rows, cols]`.
    pub fn grid(rows: usize, cols: usize, boundary: [Boundary; 2]) -> Result<Self> {
        build_lattice(LatticeKind::Grid, &[rows, cols], &boundary)
    }

    /// Periodic around the circumference, open along the length.
    pub fn cylinder(circumference: usize, length: usize) -> Result<Self> {
        build_lattice(LatticeKind::Cylinder, &[circumference, length], &[])
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn boundary(&self) -> &[Boundary] {
        &self.boundary
    }

    pub fn num_sites(&self) -> usize {
        self.tt_order.len()
    }

    /// Nearest-neighbour pairs in lattice-site labels, in processing order.
    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }

    /// `tt_order[site]` is the chain position of a lattice site.
    pub fn tt_order(&self) -> &[usize] {
        &self.tt_order
    }

    /// Bonds mapped to chain positions, each as `(i, j)` with `i < j`,
    /// in the same order as [`Lattice::bonds`].
    pub fn chain_bonds(&self) -> &[(usize, usize)] {
        &self.chain_bonds
    }

    pub fn is_periodic_chain(&self) -> bool {
        self.kind == LatticeKind::Chain && self.boundary[0] == Boundary::Periodic
    }
}

/// Builds a lattice with a deterministic bond list.
///
/// `dims` is `[d]` for chains, `[rows, cols]` for grids and
/// `[circumference, length]` for cylinders; `boundary` holds one entry per
/// axis (cylinders ignore it).
pub fn build_lattice(kind: LatticeKind, dims: &[usize], boundary: &[Boundary]) -> Result<Lattice> {
    if dims.contains(&0) {
        return Err(Error::UnsupportedLattice("dimensions must be positive".into()));
    }
    match kind {
        LatticeKind::Chain => {
            let [d] = dims else {
                return Err(Error::UnsupportedLattice("chain takes one dimension".into()));
            };
            let [b] = boundary else {
                return Err(Error::UnsupportedLattice("chain takes one boundary".into()));
            };
            let d = *d;
            check_periodic_axis(d, *b, "chain")?;
            let mut bonds: Vec<(usize, usize)> = (0..d.saturating_sub(1)).map(|i| (i, i + 1)).collect();
            if *b == Boundary::Periodic {
                bonds.push((d - 1, 0));
            }
            Ok(finish(kind, vec![d], vec![*b], bonds, (0..d).collect()))
        }
        LatticeKind::Grid | LatticeKind::Cylinder => {
            let [a, b] = dims else {
                return Err(Error::UnsupportedLattice(format!("{kind} takes two dimensions")));
            };
            let (rows, cols, bnd) = if kind == LatticeKind::Cylinder {
                // rings of `circumference` sites stacked along the open axis
                (*b, *a, [Boundary::Open, Boundary::Periodic])
            } else {
                let [br, bc] = boundary else {
                    return Err(Error::UnsupportedLattice("grid takes two boundaries".into()));
                };
                (*a, *b, [*br, *bc])
            };
            check_periodic_axis(rows, bnd[0], "row axis")?;
            check_periodic_axis(cols, bnd[1], "column axis")?;
            let site = |r: usize, c: usize| r * cols + c;
            let mut bonds = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols {
                        bonds.push((site(r, c), site(r, c + 1)));
                    } else if bnd[1] == Boundary::Periodic {
                        bonds.push((site(r, c), site(r, 0)));
                    }
                    if r + 1 < rows {
                        bonds.push((site(r, c), site(r + 1, c)));
                    } else if bnd[0] == Boundary::Periodic {
                        bonds.push((site(r, c), site(0, c)));
                    }
                }
            }
            // row-major snake
            let mut order = vec![0; rows * cols];
            for r in 0..rows {
                for c in 0..cols {
                    let pos_in_row = if r % 2 == 0 { c } else { cols - 1 - c };
                    order[site(r, c)] = r * cols + pos_in_row;
                }
            }
            let (dims, boundary) = if kind == LatticeKind::Cylinder {
                (vec![*a, *b], vec![Boundary::Periodic, Boundary::Open])
            } else {
                (vec![rows, cols], bnd.to_vec())
            };
            Ok(finish(kind, dims, boundary, bonds, order))
        }
    }
}

fn check_periodic_axis(len: usize, b: Boundary, axis: &str) -> Result<()> {
    if b == Boundary::Periodic && len < 3 {
        return Err(Error::UnsupportedLattice(format!(
            "periodic {axis} of length {len} has degenerate nearest neighbours"
        )));
    }
    Ok(())
}

fn finish(
    kind: LatticeKind,
    dims: Vec<usize>,
    boundary: Vec<Boundary>,
    bonds: Vec<(usize, usize)>,
    tt_order: Vec<usize>,
) -> Lattice {
    let chain_bonds = bonds
        .iter()
        .map(|&(a, b)| {
            let (p, q) = (tt_order[a], tt_order[b]);
            (p.min(q), p.max(q))
        })
        .collect();
    Lattice {
        kind,
        dims,
        boundary,
        bonds,
        tt_order,
        chain_bonds,
    }
}

/// `e^{gΔτσ^x/2} = cosh(gΔτ/2) I + sinh(gΔτ/2) σ^x`.
pub fn one_body_matrix(g: f64, dtau: f64) -> [[f64; 2]; 2] {
    let (c, s) = ((g * dtau / 2.0).cosh(), (g * dtau / 2.0).sinh());
    [[c, s], [s, c]]
}

/// Hubbard-Stratonovich coupling with `cosh 2λ = e^{2Δτ}`.
pub fn hs_lambda(dtau: f64) -> f64 {
    // acosh(1 + x) = ln(1 + x + sqrt(x (2 + x))), stable for small x
    let x = (2.0 * dtau).exp_m1();
    0.5 * (x + (x * (2.0 + x)).sqrt()).ln_1p()
}

/// Everything needed to advance a walker by one imaginary-time step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagatorSet {
    pub g: f64,
    pub dtau: f64,
    pub one_body_half: [[f64; 2]; 2],
    pub lambda: f64,
    pub bond_prefactor: f64,
}

impl PropagatorSet {
    pub fn new(g: f64, dtau: f64) -> Result<Self> {
        if !g.is_finite() || !dtau.is_finite() || dtau < 0.0 {
            return Err(Error::invalid(format!("bad propagator parameters g={g}, dtau={dtau}")));
        }
        Ok(PropagatorSet {
            g,
            dtau,
            one_body_half: one_body_matrix(g, dtau),
            lambda: hs_lambda(dtau),
            bond_prefactor: (-dtau).exp(),
        })
    }

    /// Diagonal of `e^{xλσ^z}` on one site, in the `(up, down)` basis.
    #[inline]
    pub fn field_diagonal(&self, x: i8) -> [f64; 2] {
        let e = (f64::from(x) * self.lambda).exp();
        [e, 1.0 / e]
    }
}

#[inline]
pub(crate) fn spin_z(bit: usize) -> f64 {
    if bit == 0 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
fn bit_of(k: usize, d: usize, j: usize) -> usize {
    (k >> (d - 1 - j)) & 1
}

#[inline]
fn mask_of(d: usize, j: usize) -> usize {
    1 << (d - 1 - j)
}

/// Classical part `-Σ s_i s_j` of the diagonal for every basis state.
pub fn diagonal_energies(lattice: &Lattice) -> Result<Vec<f64>> {
    let d = lattice.num_sites();
    if d > MATRIX_FREE_CAP {
        return Err(Error::TooManySites {
            what: "Hamiltonian diagonal",
            sites: d,
            cap: MATRIX_FREE_CAP,
        });
    }
    Ok((0..1usize << d)
        .map(|k| {
            -lattice
                .chain_bonds()
                .iter()
                .map(|&(i, j)| spin_z(bit_of(k, d, i)) * spin_z(bit_of(k, d, j)))
                .sum::<f64>()
        })
        .collect())
}

pub fn dense_hamiltonian(lattice: &Lattice, g: f64) -> Result<DMatrix<f64>> {
    let d = lattice.num_sites();
    if d > DENSE_HAMILTONIAN_CAP {
        return Err(Error::TooManySites {
            what: "dense Hamiltonian",
            sites: d,
            cap: DENSE_HAMILTONIAN_CAP,
        });
    }
    let diag = diagonal_energies(lattice)?;
    let n = 1usize << d;
    let mut h = DMatrix::zeros(n, n);
    for k in 0..n {
        h[(k, k)] = diag[k];
        for j in 0..d {
            h[(k ^ mask_of(d, j), k)] -= g;
        }
    }
    Ok(h)
}

/// Matrix-free `H v` for systems up to [`MATRIX_FREE_CAP`] sites.
pub struct HamiltonianAction {
    d: usize,
    g: f64,
    diag: Vec<f64>,
}

impl HamiltonianAction {
    pub fn new(lattice: &Lattice, g: f64) -> Result<Self> {
        Ok(HamiltonianAction {
            d: lattice.num_sites(),
            g,
            diag: diagonal_energies(lattice)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let mut acc = self.diag[k] * v[k];
            for j in 0..self.d {
                acc -= self.g * v[k ^ mask_of(self.d, j)];
            }
            *o = acc;
        }
    }
}

/// `B_{H_1/2} = ⊗_j e^{gΔτσ^x/2}` as a dense matrix.
pub fn dense_one_body_half(d: usize, g: f64, dtau: f64) -> Result<DMatrix<f64>> {
    if d > DENSE_HAMILTONIAN_CAP {
        return Err(Error::TooManySites {
            what: "dense propagator",
            sites: d,
            cap: DENSE_HAMILTONIAN_CAP,
        });
    }
    let m = one_body_matrix(g, dtau);
    let single = DMatrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]]);
    let mut out = DMatrix::from_element(1, 1, 1.0);
    for _ in 0..d {
        out = out.kronecker(&single);
    }
    Ok(out)
}

/// `B_{H_2} = e^{Δτ Σ σ^zσ^z}` as a dense diagonal matrix.
pub fn dense_two_body(lattice: &Lattice, dtau: f64) -> Result<DMatrix<f64>> {
    if lattice.num_sites() > DENSE_HAMILTONIAN_CAP {
        return Err(Error::TooManySites {
            what: "dense propagator",
            sites: lattice.num_sites(),
            cap: DENSE_HAMILTONIAN_CAP,
        });
    }
    let diag = diagonal_energies(lattice)?;
    Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        diag.len(),
        diag.iter().map(|e| (-dtau * e).exp()),
    )))
}

/// `Π_bonds Σ_x p(x) b(x)` assembled densely from the auxiliary-field
/// operators, independent of [`dense_two_body`].
pub fn dense_field_averaged_two_body(lattice: &Lattice, dtau: f64) -> Result<DMatrix<f64>> {
    let d = lattice.num_sites();
    if d > DENSE_HAMILTONIAN_CAP {
        return Err(Error::TooManySites {
            what: "dense propagator",
            sites: d,
            cap: DENSE_HAMILTONIAN_CAP,
        });
    }
    let props = PropagatorSet::new(0.0, dtau)?;
    let n = 1usize << d;
    let mut acc = DMatrix::<f64>::identity(n, n);
    for &(i, j) in lattice.chain_bonds() {
        let mut avg = DMatrix::<f64>::zeros(n, n);
        for x in [1i8, -1] {
            let f = props.field_diagonal(x);
            for k in 0..n {
                avg[(k, k)] += 0.5 * props.bond_prefactor * f[bit_of(k, d, i)] * f[bit_of(k, d, j)];
            }
        }
        acc = avg * acc;
    }
    Ok(acc)
}

/// `B_{H_1/2} B_{H_2} B_{H_1/2}` densely.
pub fn dense_trotter_step(lattice: &Lattice, g: f64, dtau: f64) -> Result<DMatrix<f64>> {
    let half = dense_one_body_half(lattice.num_sites(), g, dtau)?;
    let two = dense_two_body(lattice, dtau)?;
    Ok(&half * two * &half)
}

/// Exact ground-state energy of the periodic chain from the free-fermion
/// solution (even-parity sector, antiperiodic momenta).
pub fn analytic_chain_energy(d: usize, g: f64) -> f64 {
    let pi = std::f64::consts::PI;
    -(0..d)
        .map(|n| {
            let k = (2 * n + 1) as f64 * pi / d as f64;
            (1.0 + g * g - 2.0 * g * k.cos()).max(0.0).sqrt()
        })
        .sum::<f64>()
}
