//! Tensor trains over chains of two-level sites.
//!
//! A tensor train of `d` sites stores one order-3 core per site, shaped
//! `(r_{j-1}, 2, r_j)` with `r_0 = r_d = 1`. The physical index follows a
//! single global convention: index `0` is spin up (`σ^z = +1`) and index `1`
//! is spin down. Dense expansions are laid out lexicographically with the
//! first site as the most significant bit.
//!
//! Separable states ([`ProductState`]) are the rank-1 special case and are
//! what the Monte Carlo walkers carry around.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::write_atomic;

/// Local Hilbert-space dimension of every site.
pub const SITE_DIM: usize = 2;

/// Largest chain expanded to a dense vector by default.
pub const DENSE_SITE_CAP: usize = 20;

/// One order-3 core, stored row-major as `(left, physical, right)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Core {
    left: usize,
    right: usize,
    data: Vec<f64>,
}

impl Core {
    pub fn new(left: usize, right: usize, data: Vec<f64>) -> Result<Self> {
        if left == 0 || right == 0 {
            return Err(Error::invalid("core bond dimensions must be positive"));
        }
        if data.len() != left * SITE_DIM * right {
            return Err(Error::DimensionMismatch {
                expected: left * SITE_DIM * right,
                found: data.len(),
            });
        }
        Ok(Core { left, right, data })
    }

    pub fn zeros(left: usize, right: usize) -> Self {
        Core {
            left,
            right,
            data: vec![0.0; left * SITE_DIM * right],
        }
    }

    /// Builds a core from its two physical slices, each `left x right`.
    pub fn from_slices(up: &DMatrix<f64>, down: &DMatrix<f64>) -> Result<Self> {
        if up.shape() != down.shape() {
            return Err(Error::invalid("core slices differ in shape"));
        }
        let (left, right) = up.shape();
        let mut core = Core::zeros(left, right);
        for a in 0..left {
            for b in 0..right {
                core.set(a, 0, b, up[(a, b)]);
                core.set(a, 1, b, down[(a, b)]);
            }
        }
        Ok(core)
    }

    pub fn left(&self) -> usize {
        self.left
    }

    pub fn right(&self) -> usize {
        self.right
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[cfg(test)]
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    fn idx(&self, a: usize, i: usize, b: usize) -> usize {
        (a * SITE_DIM + i) * self.right + b
    }

    #[inline]
    pub fn get(&self, a: usize, i: usize, b: usize) -> f64 {
        self.data[self.idx(a, i, b)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, i: usize, b: usize, value: f64) {
        let k = self.idx(a, i, b);
        self.data[k] = value;
    }

    /// The `left x right` matrix obtained by fixing the physical index.
    pub fn slice(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.left, self.right, |a, b| self.get(a, i, b))
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|x| *x *= c);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `out = v · G[:, i, :]`.
    #[inline]
    pub(crate) fn row_times_slice(&self, v: &[f64], i: usize, out: &mut [f64]) {
        out[..self.right].iter_mut().for_each(|x| *x = 0.0);
        for (a, &va) in v[..self.left].iter().enumerate() {
            if va == 0.0 {
                continue;
            }
            let row = &self.data[self.idx(a, i, 0)..self.idx(a, i, 0) + self.right];
            for (o, g) in out.iter_mut().zip(row) {
                *o += va * g;
            }
        }
    }

    /// `out = G[:, i, :] · v`.
    #[inline]
    pub(crate) fn slice_times_col(&self, i: usize, v: &[f64], out: &mut [f64]) {
        for (a, o) in out[..self.left].iter_mut().enumerate() {
            let row = &self.data[self.idx(a, i, 0)..self.idx(a, i, 0) + self.right];
            *o = row.iter().zip(v).map(|(g, x)| g * x).sum();
        }
    }

    /// `out = v · (φ_0 G[:,0,:] + φ_1 G[:,1,:])`, the left transfer step.
    #[inline]
    pub(crate) fn transfer_left(&self, v: &[f64], site: [f64; 2], out: &mut [f64]) {
        out[..self.right].iter_mut().for_each(|x| *x = 0.0);
        for (a, &va) in v[..self.left].iter().enumerate() {
            let base = a * SITE_DIM * self.right;
            let up = &self.data[base..base + self.right];
            let down = &self.data[base + self.right..base + 2 * self.right];
            let (cu, cd) = (va * site[0], va * site[1]);
            for ((o, u), dn) in out.iter_mut().zip(up).zip(down) {
                *o += cu * u + cd * dn;
            }
        }
    }

    /// `out = (φ_0 G[:,0,:] + φ_1 G[:,1,:]) · v`, the right transfer step.
    #[inline]
    pub(crate) fn transfer_right(&self, site: [f64; 2], v: &[f64], out: &mut [f64]) {
        for (a, o) in out[..self.left].iter_mut().enumerate() {
            let base = a * SITE_DIM * self.right;
            let up = &self.data[base..base + self.right];
            let down = &self.data[base + self.right..base + 2 * self.right];
            let mut acc = 0.0;
            for ((u, dn), x) in up.iter().zip(down).zip(v) {
                acc += (site[0] * u + site[1] * dn) * x;
            }
            *o = acc;
        }
    }
}

/// A separable state: one length-2 amplitude vector per site.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductState {
    sites: Vec<[f64; 2]>,
}

impl ProductState {
    pub fn new(sites: Vec<[f64; 2]>) -> Result<Self> {
        for (j, s) in sites.iter().enumerate() {
            if !s[0].is_finite() || !s[1].is_finite() {
                return Err(Error::invalid(format!("site {j} is not finite")));
            }
            if s[0] == 0.0 && s[1] == 0.0 {
                return Err(Error::invalid(format!("site {j} is the zero vector")));
            }
        }
        Ok(ProductState { sites })
    }

    /// Every site in `(1, 1)`.
    pub fn uniform(d: usize) -> Self {
        ProductState {
            sites: vec![[1.0, 1.0]; d],
        }
    }

    /// Every site spin up, `(1, 0)`.
    pub fn all_up(d: usize) -> Self {
        ProductState {
            sites: vec![[1.0, 0.0]; d],
        }
    }

    /// The computational basis state with the given physical indices.
    pub fn basis(indices: &[usize]) -> Result<Self> {
        let sites = indices
            .iter()
            .map(|&i| match i {
                0 => Ok([1.0, 0.0]),
                1 => Ok([0.0, 1.0]),
                _ => Err(Error::invalid(format!("basis index {i} out of range"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ProductState { sites })
    }

    pub fn random<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let sites = (0..d)
            .map(|_| loop {
                let s: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
                if s != [0.0, 0.0] {
                    break s;
                }
            })
            .collect();
        ProductState { sites }
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn site(&self, j: usize) -> [f64; 2] {
        self.sites[j]
    }

    pub fn sites(&self) -> &[[f64; 2]] {
        &self.sites
    }

    pub(crate) fn site_mut(&mut self, j: usize) -> &mut [f64; 2] {
        &mut self.sites[j]
    }

    /// Product of per-site dot products.
    pub fn dot(&self, other: &ProductState) -> Result<f64> {
        check_sites(self.num_sites(), other.num_sites())?;
        Ok(self
            .sites
            .iter()
            .zip(&other.sites)
            .map(|(a, b)| a[0] * b[0] + a[1] * b[1])
            .product())
    }

    /// Rescales every site to unit Euclidean norm and returns the product of
    /// the removed norms.
    pub fn normalize_sites(&mut self) -> f64 {
        let mut scale = 1.0;
        for s in &mut self.sites {
            let n = s[0].hypot(s[1]);
            s[0] /= n;
            s[1] /= n;
            scale *= n;
        }
        scale
    }

    /// Kronecker expansion, lexicographic with site 0 most significant.
    pub fn to_dense(&self) -> Result<Vec<f64>> {
        let d = self.num_sites();
        if d > DENSE_SITE_CAP {
            return Err(Error::TooManySites {
                what: "dense expansion",
                sites: d,
                cap: DENSE_SITE_CAP,
            });
        }
        let mut v = vec![1.0];
        for s in &self.sites {
            v = v.iter().flat_map(|&x| [x * s[0], x * s[1]]).collect();
        }
        Ok(v)
    }
}

/// A tensor train with physical dimension 2 on every site.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorTrain {
    cores: Vec<Core>,
}

impl TensorTrain {
    pub fn new(cores: Vec<Core>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::invalid("tensor train needs at least one core"));
        }
        if cores[0].left != 1 {
            return Err(Error::invalid("first core must have left rank 1"));
        }
        if cores[cores.len() - 1].right != 1 {
            return Err(Error::invalid("last core must have right rank 1"));
        }
        for (j, w) in cores.windows(2).enumerate() {
            if w[0].right != w[1].left {
                return Err(Error::invalid(format!(
                    "bond {} mismatch: core {} has right rank {}, core {} has left rank {}",
                    j + 1,
                    j,
                    w[0].right,
                    j + 1,
                    w[1].left
                )));
            }
        }
        Ok(TensorTrain { cores })
    }

    /// The rank-1 train of a separable state.
    pub fn from_product(phi: &ProductState) -> Self {
        let cores = phi
            .sites()
            .iter()
            .map(|s| Core {
                left: 1,
                right: 1,
                data: vec![s[0], s[1]],
            })
            .collect();
        TensorTrain { cores }
    }

    /// `2^{-d/2} (1,1)^{⊗d}`, the ground state of the transverse-field term.
    pub fn fully_disordered(d: usize) -> Self {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        TensorTrain::from_product(&ProductState {
            sites: vec![[c, c]; d],
        })
    }

    /// Gaussian random cores with the given inner ranks `(r_1, …, r_{d-1})`.
    pub fn random<R: Rng + ?Sized>(d: usize, ranks: &[usize], rng: &mut R) -> Result<Self> {
        let bonds = full_bonds(d, ranks)?;
        let cores = (0..d)
            .map(|j| {
                let (l, r) = (bonds[j], bonds[j + 1]);
                let data = (0..l * SITE_DIM * r)
                    .map(|_| rng.sample(StandardNormal))
                    .collect();
                Core::new(l, r, data)
            })
            .collect::<Result<Vec<_>>>()?;
        TensorTrain::new(cores)
    }

    pub fn num_sites(&self) -> usize {
        self.cores.len()
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    pub fn core(&self, j: usize) -> &Core {
        &self.cores[j]
    }

    #[cfg(test)]
    pub(crate) fn core_mut(&mut self, j: usize) -> &mut Core {
        &mut self.cores[j]
    }

    /// Inner bond dimensions `(r_1, …, r_{d-1})`.
    pub fn ranks(&self) -> Vec<usize> {
        self.cores[..self.cores.len() - 1]
            .iter()
            .map(|c| c.right)
            .collect()
    }

    pub fn max_rank(&self) -> usize {
        self.cores.iter().map(|c| c.right.max(c.left)).max().unwrap_or(1)
    }

    /// Multiplies the represented tensor by `c` (folded into the first core).
    pub fn scale(&mut self, c: f64) {
        self.cores[0].scale(c);
    }

    /// `⟨tt, φ⟩` by chained core-vector contractions, `O(d r²)`.
    pub fn product_overlap(&self, phi: &ProductState) -> Result<f64> {
        check_sites(self.num_sites(), phi.num_sites())?;
        let r = self.max_rank();
        let mut v = vec![0.0; r];
        let mut next = vec![0.0; r];
        v[0] = 1.0;
        for (core, &s) in self.cores.iter().zip(phi.sites()) {
            core.transfer_left(&v, s, &mut next);
            std::mem::swap(&mut v, &mut next);
        }
        Ok(v[0])
    }

    /// `⟨a, b⟩` by transfer-matrix accumulation.
    pub fn overlap(&self, other: &TensorTrain) -> Result<f64> {
        check_sites(self.num_sites(), other.num_sites())?;
        let mut env = DMatrix::from_element(1, 1, 1.0);
        for (a, b) in self.cores.iter().zip(&other.cores) {
            let mut next = DMatrix::zeros(a.right, b.right);
            for i in 0..SITE_DIM {
                next += a.slice(i).transpose() * &env * b.slice(i);
            }
            env = next;
        }
        Ok(env[(0, 0)])
    }

    pub fn norm(&self) -> f64 {
        self.overlap(self).map(|x| x.max(0.0).sqrt()).unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Result<Vec<f64>> {
        self.to_dense_capped(DENSE_SITE_CAP)
    }

    /// Full coefficient vector, refusing chains longer than `cap`.
    pub fn to_dense_capped(&self, cap: usize) -> Result<Vec<f64>> {
        let d = self.num_sites();
        if d > cap {
            return Err(Error::TooManySites {
                what: "dense expansion",
                sites: d,
                cap,
            });
        }
        // rows: prefixes of physical indices, columns: current bond index
        let mut cur = vec![1.0];
        let mut rank = 1;
        for core in &self.cores {
            let prefixes = cur.len() / rank;
            let r = core.right;
            let mut next = vec![0.0; prefixes * SITE_DIM * r];
            for p in 0..prefixes {
                for i in 0..SITE_DIM {
                    let out = &mut next[(p * SITE_DIM + i) * r..(p * SITE_DIM + i + 1) * r];
                    core.row_times_slice(&cur[p * rank..(p + 1) * rank], i, out);
                }
            }
            cur = next;
            rank = r;
        }
        Ok(cur)
    }

    pub fn to_file_format(&self) -> TtFile {
        let mut bonds = vec![1];
        bonds.extend(self.cores.iter().map(|c| c.right));
        TtFile {
            format: TT_FORMAT_NAME.to_string(),
            version: TT_FORMAT_VERSION,
            sites: self.num_sites(),
            phys_dim: SITE_DIM,
            bond_dims: bonds,
            cores: self.cores.iter().map(|c| c.data.clone()).collect(),
        }
    }

    pub fn from_file_format(file: TtFile) -> Result<Self> {
        if file.format != TT_FORMAT_NAME {
            return Err(Error::invalid(format!("unknown format `{}`", file.format)));
        }
        if file.version != TT_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported tensor-train file version {}",
                file.version
            )));
        }
        if file.phys_dim != SITE_DIM {
            return Err(Error::invalid("only physical dimension 2 is supported"));
        }
        if file.bond_dims.len() != file.sites + 1 || file.cores.len() != file.sites {
            return Err(Error::invalid("bond_dims/cores length disagrees with sites"));
        }
        let cores = file
            .cores
            .into_iter()
            .enumerate()
            .map(|(j, data)| Core::new(file.bond_dims[j], file.bond_dims[j + 1], data))
            .collect::<Result<Vec<_>>>()?;
        TensorTrain::new(cores)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file_format())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        TensorTrain::from_file_format(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        TensorTrain::from_json(&std::fs::read_to_string(path)?)
    }
}

pub const TT_FORMAT_NAME: &str = "tensor-train";
pub const TT_FORMAT_VERSION: u32 = 1;

/// On-disk layout of a tensor train (`trial.tt`).
///
/// `bond_dims` lists `(r_0, …, r_d)`; core `j` holds
/// `bond_dims[j] * phys_dim * bond_dims[j+1]` numbers in row-major
/// `(left, physical, right)` order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TtFile {
    pub format: String,
    pub version: u32,
    pub sites: usize,
    pub phys_dim: usize,
    pub bond_dims: Vec<usize>,
    pub cores: Vec<Vec<f64>>,
}

fn check_sites(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `(1, r_1, …, r_{d-1}, 1)` from inner ranks.
pub(crate) fn full_bonds(d: usize, ranks: &[usize]) -> Result<Vec<usize>> {
    if d == 0 {
        return Err(Error::invalid("need at least one site"));
    }
    if ranks.len() != d - 1 {
        return Err(Error::DimensionMismatch {
            expected: d - 1,
            found: ranks.len(),
        });
    }
    if ranks.contains(&0) {
        return Err(Error::invalid("ranks must be positive"));
    }
    let mut bonds = Vec::with_capacity(d + 1);
    bonds.push(1);
    bonds.extend_from_slice(ranks);
    bonds.push(1);
    Ok(bonds)
}
