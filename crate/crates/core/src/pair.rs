//! Two-particle wavefunctions: antisymmetric coefficient matrices, the pair
//! normal form `psi = sum_l lambda_l |phi_{2l-1} phi_{2l}>`, and the explicit
//! matrix product states built from it.
//!
//! Coefficients follow the occupation convention: for `i < j` the dense
//! coefficient of the basis string with ones at `i` and `j` is `c_ij`, so
//! `psi = sum_{i<j} c_ij |phi_i phi_j>` and `sum_l lambda_l^2 = ||psi||^2`.
//!
//! Bond dimensions of the explicit construction, `L = 2k`:
//!
//! ```text
//! L = 2        (1)
//! L = 4        (2, 2, 2)
//! L >= 6       (2, 2, 3, 2, 3, ..., 2, 3, 2, 2)
//! ```

use nalgebra::Matrix2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, DenseState};
use crate::linalg::{self, CMatrix, CVector, Pair, C64, ONE, ZERO};
use crate::mps::{Mps, MpsCore};

/// Default relative cut below which pair amplitudes count as zero.
pub const PAIR_TOL: f64 = 1e-12;

/// Relative spread of singular values treated as one degenerate cluster.
const CLUSTER_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct AntisymMatrix {
    dim: usize,
    // strict upper triangle, row-major
    upper: Vec<C64>,
}

impl AntisymMatrix {
    pub fn zeros(dim: usize) -> Self {
        AntisymMatrix {
            dim,
            upper: vec![ZERO; dim * dim.saturating_sub(1) / 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.dim);
        i * self.dim - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Less => self.upper[self.slot(i, j)],
            Greater => -self.upper[self.slot(j, i)],
            Equal => ZERO,
        }
    }

    /// Sets `c_ij` (and implicitly `c_ji = -c_ij`).
    pub fn set(&mut self, i: usize, j: usize, z: C64) {
        assert!(i != j, "diagonal of an antisymmetric matrix is zero");
        if i < j {
            let k = self.slot(i, j);
            self.upper[k] = z;
        } else {
            let k = self.slot(j, i);
            self.upper[k] = -z;
        }
    }

    pub fn from_full(m: &CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension("coefficient matrix must be square".into()));
        }
        let defect = (m + m.transpose()).norm();
        if defect > 1e-12 * m.norm().max(1.0) {
            return Err(Error::NotAntisymmetric(defect));
        }
        let n = m.nrows();
        let mut c = AntisymMatrix::zeros(n);
        for i in 0..n {
            for j in i + 1..n {
                c.set(i, j, (m[(i, j)] - m[(j, i)]) * 0.5);
            }
        }
        Ok(c)
    }

    pub fn to_full(&self) -> CMatrix {
        CMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    /// Reads `c_ij` off the two-particle sector of a dense state.
    pub fn from_state(state: &DenseState) -> Result<Self> {
        let outside = state.weight_outside_sector(2).sqrt();
        if outside > 1e-12 * state.norm().max(1.0) {
            return Err(Error::NotTwoParticle(outside));
        }
        let l = state.orbitals();
        let mut c = AntisymMatrix::zeros(l);
        for i in 0..l {
            for j in i + 1..l {
                let idx = fock::bit(l, i) | fock::bit(l, j);
                c.set(i, j, state.coeffs()[idx]);
            }
        }
        Ok(c)
    }

    pub fn to_state(&self) -> Result<DenseState> {
        let l = self.dim;
        let mut s = DenseState::zeros(l)?;
        for i in 0..l {
            for j in i + 1..l {
                s.coeffs_mut()[fock::bit(l, i) | fock::bit(l, j)] = self.get(i, j);
            }
        }
        Ok(s)
    }

    /// `sum_{i<j} |c_ij|^2`, the squared norm of the associated state.
    pub fn norm_sqr(&self) -> f64 {
        self.upper.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Independent complex Gaussian entries above the diagonal, normalized so
    /// that the associated state has unit norm.
    pub fn random_gaussian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let mut c = AntisymMatrix::zeros(dim);
        for z in c.upper.iter_mut() {
            *z = linalg::complex_gaussian(rng);
        }
        let n = c.norm_sqr().sqrt();
        if n > 0.0 {
            for z in c.upper.iter_mut() {
                *z /= n;
            }
        }
        c
    }
}

/// Normalized two-particle state with Gaussian coefficients `c_ij`, `i < j`.
pub fn random_two_particle<R: Rng + ?Sized>(orbitals: usize, rng: &mut R) -> Result<DenseState> {
    fock::check_cap(orbitals)?;
    AntisymMatrix::random_gaussian(orbitals, rng).to_state()
}

/// Natural-orbital pairing of a two-particle state.
///
/// Column `j` of `u` describes the new orbital `phi'_j = sum_i u_ij phi_i`.
/// With that convention `u^dagger c conj(u)` is block diagonal with blocks
/// `[[0, lambda_l], [-lambda_l, 0]]`, then zeros.
#[derive(Clone, Debug)]
pub struct PairNormalForm {
    pub u: CMatrix,
    pub lambdas: Vec<f64>,
}

impl PairNormalForm {
    pub fn pairs(&self) -> usize {
        self.lambdas.len()
    }

    pub fn orbitals(&self) -> usize {
        self.u.nrows()
    }

    /// Rank of the one-particle density matrix, `2 * #{lambda > 0}`.
    pub fn gamma_rank(&self) -> usize {
        2 * self.lambdas.iter().filter(|&&l| l > 0.0).count()
    }

    pub fn block_form(&self) -> CMatrix {
        let n = self.orbitals();
        let mut b = CMatrix::zeros(n, n);
        for (l, &lam) in self.lambdas.iter().enumerate() {
            b[(2 * l, 2 * l + 1)] = C64::new(lam, 0.0);
            b[(2 * l + 1, 2 * l)] = C64::new(-lam, 0.0);
        }
        b
    }

    /// `c` expressed in the paired orbitals, `u^dagger c conj(u)`.
    pub fn transformed(&self, c: &AntisymMatrix) -> CMatrix {
        self.u.adjoint() * c.to_full() * self.u.conjugate()
    }

    /// Frobenius distance between the transformed matrix and the block form.
    pub fn residual(&self, c: &AntisymMatrix) -> f64 {
        (self.transformed(c) - self.block_form()).norm()
    }

    /// The coefficient matrix in the original orbitals, `u B u^T`.
    pub fn reconstruct(&self) -> Result<AntisymMatrix> {
        AntisymMatrix::from_full(&(&self.u * self.block_form() * self.u.transpose()))
    }

    /// Maps a state written in the paired orbitals back to the original ones.
    pub fn to_original(&self, state: &DenseState) -> Result<DenseState> {
        fock::rotate_basis(state, &self.u.adjoint())
    }

    /// Maps a state written in the original orbitals to the paired ones.
    pub fn to_paired(&self, state: &DenseState) -> Result<DenseState> {
        fock::rotate_basis(state, &self.u)
    }

    pub fn paired_state(&self) -> Result<PairedState> {
        PairedState::new(self.lambdas.clone(), self.orbitals())
    }
}

#[derive(Serialize, Deserialize)]
struct PairNormalFormJson {
    #[serde(rename = "U")]
    u: Vec<Vec<Pair>>,
    lambdas: Vec<f64>,
}

impl Serialize for PairNormalForm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PairNormalFormJson {
            u: (0..self.u.nrows())
                .map(|i| {
                    (0..self.u.ncols())
                        .map(|j| linalg::to_pair(self.u[(i, j)]))
                        .collect()
                })
                .collect(),
            lambdas: self.lambdas.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PairNormalForm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = PairNormalFormJson::deserialize(d)?;
        let n = raw.u.len();
        if raw.u.iter().any(|row| row.len() != n) {
            return Err(D::Error::custom("U must be square"));
        }
        if 2 * raw.lambdas.len() > n {
            return Err(D::Error::custom("more pairs than orbitals allow"));
        }
        let u = CMatrix::from_fn(n, n, |i, j| linalg::from_pair(raw.u[i][j]));
        Ok(PairNormalForm {
            u,
            lambdas: raw.lambdas,
        })
    }
}

/// Orthonormal basis of `span(q)` minus `span(remove)`, keeping `keep` columns.
fn deflate_basis(q: &CMatrix, remove: &[&CVector], keep: usize) -> CMatrix {
    let mut p = q.clone();
    for v in remove {
        let coeffs = v.adjoint() * &p;
        p -= *v * coeffs;
    }
    if keep == 0 {
        return CMatrix::zeros(q.nrows(), 0);
    }
    let svd = p.svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    CMatrix::from_fn(q.nrows(), keep, |i, j| u[(i, order[j])])
}

/// Picks the normalized projection of the first standard basis vector that
/// has a substantial overlap with `span(q)`; for an already-paired input this
/// returns the basis vector itself, which keeps the rotation at the identity.
fn canonical_vector(q: &CMatrix) -> CVector {
    let weights: Vec<f64> = (0..q.nrows()).map(|i| q.row(i).norm()).collect();
    let max = weights.iter().cloned().fold(0.0, f64::max);
    let i = weights.iter().position(|&w| w >= 0.5 * max).unwrap_or(0);
    let v = q * q.row(i).adjoint();
    let n = v.norm();
    v / C64::new(n, 0.0)
}

/// Pair normal form of an antisymmetric coefficient matrix.
///
/// The left singular subspaces of `c` are invariant under `x -> c conj(x)`;
/// inside each (degenerate) subspace a vector `u1` is chosen and paired with
/// `u2 = conj(c^dagger u1) / lambda`, `lambda = |c^dagger u1|`. Pairs with
/// `lambda <= tol * lambda_max` are dropped and their orbitals completed to an
/// orthonormal basis.
pub fn normal_form(c: &AntisymMatrix, tol: f64) -> PairNormalForm {
    let n = c.dim();
    let cm = c.to_full();
    if n < 2 || cm.norm() == 0.0 {
        return PairNormalForm {
            u: CMatrix::identity(n, n),
            lambdas: Vec::new(),
        };
    }
    let svd = cm.clone().svd(true, false);
    let left = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let smax = sv[0];
    let cut = tol * smax;

    // clusters of near-equal singular values, padded to even size
    let mut clusters: Vec<std::ops::Range<usize>> = Vec::new();
    let mut start = 0;
    while start < n && sv[start] > cut {
        let mut end = start + 1;
        while end < n
            && sv[end] > cut
            && ((sv[end - 1] - sv[end]) <= CLUSTER_TOL * smax || (end - start) % 2 == 1)
        {
            end += 1;
        }
        if (end - start) % 2 == 1 {
            // an odd tail can only come from the cut itself
            end -= 1;
            if end == start {
                break;
            }
        }
        clusters.push(start..end);
        start = end;
    }

    let adj = cm.adjoint();
    let mut pairs: Vec<(f64, CVector, CVector)> = Vec::new();
    for range in clusters {
        let mut q = CMatrix::from_fn(n, range.len(), |i, j| left[(i, order[range.start + j])]);
        while q.ncols() >= 2 {
            let u1 = canonical_vector(&q);
            let w = &adj * &u1;
            let lam = w.norm();
            if lam <= cut {
                break;
            }
            let u2 = w.map(|z| z.conj()) / C64::new(lam, 0.0);
            let keep = q.ncols() - 2;
            q = deflate_basis(&q, &[&u1, &u2], keep);
            pairs.push((lam, u1, u2));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut cols: Vec<CVector> = Vec::with_capacity(n);
    let mut lambdas = Vec::with_capacity(pairs.len());
    for (lam, u1, u2) in pairs {
        lambdas.push(lam);
        cols.push(u1);
        cols.push(u2);
    }
    // complete with projected standard basis vectors, in order
    for i in 0..n {
        if cols.len() == n {
            break;
        }
        let mut v = CVector::zeros(n);
        v[i] = ONE;
        for _ in 0..2 {
            for u in &cols {
                let ov = u.dotc(&v);
                v -= u * ov;
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            cols.push(v / C64::new(norm, 0.0));
        }
    }
    let u = CMatrix::from_columns(&cols);
    PairNormalForm { u, lambdas }
}

/// `prod_i [[a_i, b_i], [0, a_i]] = [[prod a, sum_i b_i prod_{j != i} a_j], [0, prod a]]`.
pub fn matrix_lemma_product(a: &[C64], b: &[C64]) -> Result<Matrix2<C64>> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "sequences of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let m = a.len();
    // prefix[i] = a_0 ... a_{i-1}, suffix[i] = a_i ... a_{m-1}
    let mut prefix = vec![ONE; m + 1];
    for i in 0..m {
        prefix[i + 1] = prefix[i] * a[i];
    }
    let mut suffix = vec![ONE; m + 1];
    for i in (0..m).rev() {
        suffix[i] = suffix[i + 1] * a[i];
    }
    let off: C64 = (0..m).map(|i| b[i] * prefix[i] * suffix[i + 1]).sum();
    Ok(Matrix2::new(prefix[m], off, ZERO, prefix[m]))
}

/// `sum_l lambda_l |phi_{2l-1} phi_{2l}>` on `orbitals` orbitals; orbitals
/// beyond the last pair stay empty.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedState {
    lambdas: Vec<f64>,
    orbitals: usize,
}

impl PairedState {
    pub fn new(lambdas: Vec<f64>, orbitals: usize) -> Result<Self> {
        if 2 * lambdas.len() > orbitals {
            return Err(Error::Dimension(format!(
                "{} pairs do not fit in {} orbitals",
                lambdas.len(),
                orbitals
            )));
        }
        Ok(PairedState { lambdas, orbitals })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn orbitals(&self) -> usize {
        self.orbitals
    }

    pub fn to_dense(&self) -> Result<DenseState> {
        let l = self.orbitals;
        let mut s = DenseState::zeros(l)?;
        for (p, &lam) in self.lambdas.iter().enumerate() {
            s.coeffs_mut()[fock::bit(l, 2 * p) | fock::bit(l, 2 * p + 1)] = C64::new(lam, 0.0);
        }
        Ok(s)
    }
}

fn delta(occupied: bool, s: usize) -> C64 {
    if (s == 1) == occupied {
        ONE
    } else {
        ZERO
    }
}

/// Single-orbital core from a closure `(row, digit, col) -> entry`.
fn site_core(left: usize, right: usize, f: impl Fn(usize, usize, usize) -> C64) -> MpsCore {
    let mut core = MpsCore::zeros(left, 2, right);
    for a in 0..left {
        for s in 0..2 {
            for b in 0..right {
                core.set(a, s, b, f(a, s, b));
            }
        }
    }
    core
}

fn vacuum_core() -> MpsCore {
    site_core(1, 1, |_, s, _| delta(false, s))
}

/// Pair-site MPS with cores `B_1 = (d00, lambda_1 d11)`,
/// `B_l = [[d00, lambda_l d11], [0, d00]]`, `B_k = (lambda_k d11, d00)^T`.
///
/// The pair digit is `2 mu_{2l-1} + mu_{2l}`; amplitudes are padded with
/// zeros up to `L / 2` pairs.
pub fn build_pair_mps(p: &PairedState) -> Result<Mps> {
    if p.orbitals % 2 == 1 {
        return Err(Error::OddLength(p.orbitals));
    }
    let k = p.orbitals / 2;
    if k < 2 {
        return Err(Error::TooFewPairs { needed: 2, got: k });
    }
    let lam = |l: usize| C64::new(p.lambdas.get(l).copied().unwrap_or(0.0), 0.0);
    let d00 = |s: usize| if s == 0 { ONE } else { ZERO };
    let d11 = |s: usize| if s == 3 { ONE } else { ZERO };
    let mut cores = Vec::with_capacity(k);
    for l in 0..k {
        let (left, right) = match l {
            0 => (1, 2),
            _ if l == k - 1 => (2, 1),
            _ => (2, 2),
        };
        let mut core = MpsCore::zeros(left, 4, right);
        for s in 0..4 {
            if l == 0 {
                core.set(0, s, 0, d00(s));
                core.set(0, s, 1, lam(0) * d11(s));
            } else if l == k - 1 {
                core.set(0, s, 0, lam(l) * d11(s));
                core.set(1, s, 0, d00(s));
            } else {
                core.set(0, s, 0, d00(s));
                core.set(0, s, 1, lam(l) * d11(s));
                core.set(1, s, 1, d00(s));
            }
        }
        cores.push(core);
    }
    Mps::new(cores)
}

/// Single-orbital cores of the middle pair `l >= 2`, shared by the finite and
/// the half-infinite constructions.
fn middle_odd(lambda: C64) -> MpsCore {
    // [[d0, lambda d1, 0], [0, 0, d0]]
    site_core(2, 3, move |a, s, b| match (a, b) {
        (0, 0) | (1, 2) => delta(false, s),
        (0, 1) => lambda * delta(true, s),
        _ => ZERO,
    })
}

fn middle_even() -> MpsCore {
    // [[d0, 0], [0, d1], [0, d0]]
    site_core(3, 2, |a, s, b| match (a, b) {
        (0, 0) | (2, 1) => delta(false, s),
        (1, 1) => delta(true, s),
        _ => ZERO,
    })
}

fn first_core() -> MpsCore {
    site_core(1, 2, |_, s, b| delta(b == 1, s))
}

fn second_core(lambda1: C64) -> MpsCore {
    // diag(d0, lambda_1 d1)
    site_core(2, 2, move |a, s, b| match (a, b) {
        (0, 0) => delta(false, s),
        (1, 1) => lambda1 * delta(true, s),
        _ => ZERO,
    })
}

/// Explicit single-orbital MPS of a paired state.
///
/// For `k` pairs on `L = 2k` orbitals the bond dimensions are
/// `(2, 2, 3, 2, ..., 2, 3, 2, 2)`, reducing to `(2, 2, 2)` for `k = 2` and
/// `(1)` for a single determinant. Surplus orbitals get `delta_0` cores.
pub fn build_explicit_mps(p: &PairedState) -> Result<Mps> {
    let l = p.orbitals;
    if l < 2 {
        return Err(Error::Dimension(format!("need at least 2 orbitals, got {l}")));
    }
    let k = p.lambdas.len();
    if k == 0 {
        return Err(Error::TooFewPairs { needed: 1, got: 0 });
    }
    let lam = |i: usize| C64::new(p.lambdas[i], 0.0);
    let mut cores = Vec::with_capacity(l);
    if k == 1 {
        cores.push(site_core(1, 1, |_, s, _| lam(0) * delta(true, s)));
        cores.push(site_core(1, 1, |_, s, _| delta(true, s)));
    } else {
        cores.push(first_core());
        cores.push(second_core(lam(0)));
        for pair in 1..k - 1 {
            cores.push(middle_odd(lam(pair)));
            cores.push(middle_even());
        }
        // [[lambda_k d1, 0], [0, d0]] and (d1, d0)^T
        let lk = lam(k - 1);
        cores.push(site_core(2, 2, move |a, s, b| match (a, b) {
            (0, 0) => lk * delta(true, s),
            (1, 1) => delta(false, s),
            _ => ZERO,
        }));
        cores.push(site_core(2, 1, |a, s, _| delta(a == 0, s)));
    }
    while cores.len() < l {
        cores.push(vacuum_core());
    }
    Mps::new(cores)
}

/// Bond dimensions of the explicit construction on `L = 2k` orbitals.
pub fn optimal_bond_dims(orbitals: usize) -> Vec<usize> {
    match orbitals {
        0 | 1 => Vec::new(),
        2 => vec![1],
        3 => vec![1, 1],
        l => {
            let mut r = Vec::with_capacity(l - 1);
            r.push(2);
            for i in 0..l - 4 {
                r.push(if i % 2 == 0 { 2 } else { 3 });
            }
            r.push(2);
            r.push(2);
            r
        }
    }
}

/// Explicit MPS of a two-particle state in its own natural-orbital basis,
/// together with the pairing rotation.
///
/// `pnf.to_original(mps.to_dense())` reproduces `state`.
pub fn build_bd3_from_dense(state: &DenseState, tol: f64) -> Result<(Mps, PairNormalForm)> {
    let c = AntisymMatrix::from_state(state)?;
    let nf = normal_form(&c, tol);
    if nf.lambdas.is_empty() {
        return Err(Error::ZeroState);
    }
    let mps = build_explicit_mps(&nf.paired_state()?)?;
    Ok((mps, nf))
}

/// Length-`len` truncation of the half-infinite pair MPS, closed on the right
/// with `(0, ..., 0, 1)^T`. Every core but the last depends only on the
/// amplitudes up to its own pair, so prefixes agree across truncations.
///
/// Represents `sum_{l <= len/2} lambda_l |phi_{2l-1} phi_{2l}>` for any
/// `len >= 2`; missing amplitudes count as zero.
pub fn tail_truncation(lambdas: &[f64], len: usize) -> Result<Mps> {
    if len < 2 {
        return Err(Error::Dimension(format!(
            "truncation length must be at least 2, got {len}"
        )));
    }
    let lam = |pair: usize| C64::new(lambdas.get(pair).copied().unwrap_or(0.0), 0.0);
    let mut cores: Vec<MpsCore> = (0..len)
        .map(|i| match i {
            0 => first_core(),
            1 => second_core(lam(0)),
            _ if i % 2 == 0 => middle_odd(lam(i / 2)),
            _ => middle_even(),
        })
        .collect();
    let last = cores.pop().expect("len >= 2");
    let r = last.right();
    let closed = site_core(last.left(), 1, |a, s, _| last.get(a, s, r - 1));
    cores.push(closed);
    Mps::new(cores)
}

/// [`tail_truncation`] restricted to even lengths.
pub fn build_tail_cores(lambdas: &[f64], len: usize) -> Result<Mps> {
    if len % 2 == 1 {
        return Err(Error::OddLength(len));
    }
    tail_truncation(lambdas, len)
}
