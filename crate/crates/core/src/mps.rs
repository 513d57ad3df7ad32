//! Finite matrix product states (tensor trains) over occupation strings.
//!
//! A core is an order-3 tensor of shape `(r_left, d, r_right)` stored
//! row-major; `d = 2` for single orbitals and `d = 4` for orbital pairs. The
//! coefficient of a basis string is the product of the selected matrices
//! `A_1[mu_1] A_2[mu_2] ... A_L[mu_L]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, DenseState, OccIndex};
use crate::linalg::{self, CMatrix, Pair, C64, ONE, ZERO};

/// Default relative threshold on singular values when counting ranks.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct MpsCore {
    left: usize,
    phys: usize,
    right: usize,
    data: Vec<C64>,
}

impl MpsCore {
    pub fn zeros(left: usize, phys: usize, right: usize) -> Self {
        MpsCore {
            left,
            phys,
            right,
            data: vec![ZERO; left * phys * right],
        }
    }

    pub fn from_data(left: usize, phys: usize, right: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != left * phys * right {
            return Err(Error::Dimension(format!(
                "core ({left},{phys},{right}) needs {} entries, got {}",
                left * phys * right,
                data.len()
            )));
        }
        Ok(MpsCore {
            left,
            phys,
            right,
            data,
        })
    }

    /// Builds a core from its per-digit matrices `A[s]`.
    pub fn from_matrices(mats: &[CMatrix]) -> Result<Self> {
        let (left, right) = mats
            .first()
            .map(|m| (m.nrows(), m.ncols()))
            .ok_or_else(|| Error::Dimension("core needs at least one slice".into()))?;
        let mut core = MpsCore::zeros(left, mats.len(), right);
        for (s, m) in mats.iter().enumerate() {
            if m.nrows() != left || m.ncols() != right {
                return Err(Error::Dimension("core slices differ in shape".into()));
            }
            for a in 0..left {
                for b in 0..right {
                    core.set(a, s, b, m[(a, b)]);
                }
            }
        }
        Ok(core)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.left, self.phys, self.right)
    }

    pub fn left(&self) -> usize {
        self.left
    }

    pub fn right(&self) -> usize {
        self.right
    }

    pub fn phys(&self) -> usize {
        self.phys
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, a: usize, s: usize, b: usize) -> C64 {
        self.data[(a * self.phys + s) * self.right + b]
    }

    #[inline]
    pub fn set(&mut self, a: usize, s: usize, b: usize, z: C64) {
        self.data[(a * self.phys + s) * self.right + b] = z;
    }

    /// The `r_left x r_right` matrix selected by digit `s`.
    pub fn matrix(&self, s: usize) -> CMatrix {
        CMatrix::from_fn(self.left, self.right, |a, b| self.get(a, s, b))
    }

    /// `(r_left * d) x r_right` reshaping.
    pub(crate) fn as_left_matrix(&self) -> CMatrix {
        CMatrix::from_row_slice(self.left * self.phys, self.right, &self.data)
    }

    /// `r_left x (d * r_right)` reshaping.
    pub(crate) fn as_right_matrix(&self) -> CMatrix {
        CMatrix::from_row_slice(self.left, self.phys * self.right, &self.data)
    }

    pub(crate) fn from_left_matrix(m: &CMatrix, phys: usize) -> Self {
        let left = m.nrows() / phys;
        let right = m.ncols();
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..right {
                data.push(m[(i, j)]);
            }
        }
        MpsCore {
            left,
            phys,
            right,
            data,
        }
    }

    pub(crate) fn from_right_matrix(m: &CMatrix, phys: usize) -> Self {
        let left = m.nrows();
        let right = m.ncols() / phys;
        let mut data = Vec::with_capacity(m.len());
        for i in 0..left {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        MpsCore {
            left,
            phys,
            right,
            data,
        }
    }

    /// `sum_s A[s]^dagger A[s]`.
    pub fn left_gram(&self) -> CMatrix {
        let m = self.as_left_matrix();
        m.adjoint() * m
    }

    /// Copy embedded into larger bond dimensions, zero padded.
    pub fn padded(&self, left: usize, right: usize) -> Result<Self> {
        if left < self.left || right < self.right {
            return Err(Error::BondDims(format!(
                "cannot pad ({},{}) down to ({left},{right})",
                self.left, self.right
            )));
        }
        let mut out = MpsCore::zeros(left, self.phys, right);
        for a in 0..self.left {
            for s in 0..self.phys {
                for b in 0..self.right {
                    out.set(a, s, b, self.get(a, s, b));
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mps {
    cores: Vec<MpsCore>,
}

impl Mps {
    /// Validates the bond chain `r_0 = 1, ..., r_L = 1`.
    pub fn new(cores: Vec<MpsCore>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::Dimension("an MPS needs at least one core".into()));
        }
        if cores[0].left != 1 || cores[cores.len() - 1].right != 1 {
            return Err(Error::Dimension(
                "boundary bond dimensions must be 1".into(),
            ));
        }
        for (i, w) in cores.windows(2).enumerate() {
            if w[0].right != w[1].left {
                return Err(Error::Dimension(format!(
                    "shape chain broken between sites {i} and {}: {} vs {}",
                    i + 1,
                    w[0].right,
                    w[1].left
                )));
            }
        }
        Ok(Mps { cores })
    }

    pub fn cores(&self) -> &[MpsCore] {
        &self.cores
    }

    pub fn into_cores(self) -> Vec<MpsCore> {
        self.cores
    }

    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    /// `(r_1, ..., r_{L-1})`.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.cores[..self.cores.len() - 1]
            .iter()
            .map(|c| c.right)
            .collect()
    }

    pub fn phys_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.phys).collect()
    }

    /// Coefficient of a digit string (one digit per site).
    pub fn evaluate_digits(&self, digits: &[usize]) -> Result<C64> {
        if digits.len() != self.cores.len() {
            return Err(Error::Dimension(format!(
                "{} digits for {} sites",
                digits.len(),
                self.cores.len()
            )));
        }
        let mut row = vec![ONE];
        for (core, &s) in self.cores.iter().zip(digits) {
            if s >= core.phys {
                return Err(Error::Dimension(format!("digit {s} out of range")));
            }
            let mut next = vec![ZERO; core.right];
            for (a, &x) in row.iter().enumerate() {
                if x == ZERO {
                    continue;
                }
                for (b, slot) in next.iter_mut().enumerate() {
                    *slot += x * core.get(a, s, b);
                }
            }
            row = next;
        }
        Ok(row[0])
    }

    /// Coefficient `C_mu` of a single-orbital MPS.
    pub fn evaluate(&self, mu: &OccIndex) -> Result<C64> {
        if self.cores.iter().any(|c| c.phys != 2) {
            return Err(Error::Dimension(
                "occupation strings need single-orbital cores".into(),
            ));
        }
        let digits: Vec<usize> = mu.bits().into_iter().map(usize::from).collect();
        self.evaluate_digits(&digits)
    }

    /// Total number of orbitals (pair sites count twice).
    pub fn orbitals(&self) -> usize {
        self.cores
            .iter()
            .map(|c| c.phys.trailing_zeros() as usize)
            .sum()
    }

    /// Full coefficient vector by one left-to-right contraction.
    ///
    /// Every physical dimension must be a power of two; digits are read as
    /// big-endian bit groups, which keeps the `mu_1`-first ordering for pair
    /// sites as well.
    pub fn to_dense(&self) -> Result<DenseState> {
        if self.cores.iter().any(|c| !c.phys.is_power_of_two()) {
            return Err(Error::Dimension("physical dimensions must be powers of 2".into()));
        }
        let orbitals = self.orbitals();
        fock::check_cap(orbitals)?;
        // rows: left configurations, cols: current bond
        let mut block: Vec<C64> = vec![ONE];
        let mut rows = 1usize;
        for core in &self.cores {
            let (rl, d, rr) = core.shape();
            let mut next = vec![ZERO; rows * d * rr];
            for x in 0..rows {
                for a in 0..rl {
                    let w = block[x * rl + a];
                    if w == ZERO {
                        continue;
                    }
                    for s in 0..d {
                        let base = (x * d + s) * rr;
                        for b in 0..rr {
                            next[base + b] += w * core.get(a, s, b);
                        }
                    }
                }
            }
            block = next;
            rows *= d;
        }
        DenseState::from_coeffs(orbitals, block)
    }

    /// `<psi, psi>` from transfer matrices, without forming the dense vector.
    pub fn norm_sqr(&self) -> f64 {
        self.inner(self).expect("same shape").re
    }

    /// `<self, other>` from transfer matrices; both must have the same
    /// physical dimensions site by site.
    pub fn inner(&self, other: &Mps) -> Result<C64> {
        if self.phys_dims() != other.phys_dims() {
            return Err(Error::Dimension(format!(
                "physical dimensions {:?} and {:?} differ",
                self.phys_dims(),
                other.phys_dims()
            )));
        }
        let mut env = CMatrix::from_element(1, 1, ONE);
        for (a, b) in self.cores.iter().zip(&other.cores) {
            let mut next = CMatrix::zeros(a.right, b.right);
            for s in 0..a.phys {
                next += a.matrix(s).adjoint() * &env * b.matrix(s);
            }
            env = next;
        }
        Ok(env[(0, 0)])
    }

    /// Bond dimensions equal to the sizes of the stored cores but with each
    /// cut also bounded by `min(d^k, d^(L-k))`.
    pub fn max_bond_dims(phys: &[usize]) -> Vec<usize> {
        let l = phys.len();
        (1..l)
            .map(|k| {
                let left: usize = phys[..k].iter().product();
                let right: usize = phys[k..].iter().product();
                left.min(right)
            })
            .collect()
    }

    /// Zero-pads every bond up to `bond_dims`.
    pub fn padded(&self, bond_dims: &[usize]) -> Result<Mps> {
        if bond_dims.len() + 1 != self.cores.len() {
            return Err(Error::BondDims(format!(
                "{} bond dimensions for {} sites",
                bond_dims.len(),
                self.cores.len()
            )));
        }
        let mut dims = vec![1];
        dims.extend_from_slice(bond_dims);
        dims.push(1);
        let cores = self
            .cores
            .iter()
            .enumerate()
            .map(|(i, c)| c.padded(dims[i], dims[i + 1]))
            .collect::<Result<Vec<_>>>()?;
        Mps::new(cores)
    }
}

/// Left-canonical form: every core except the last satisfies
/// `sum_s A[s]^dagger A[s] = I`; the norm ends up in the last core.
pub fn left_canonicalize(mps: &Mps) -> Mps {
    let mut cores = mps.cores.clone();
    let n = cores.len();
    for i in 0..n - 1 {
        let phys = cores[i].phys;
        let m = cores[i].as_left_matrix();
        let qr = m.qr();
        let q = qr.q();
        let r = qr.r();
        cores[i] = MpsCore::from_left_matrix(&q, phys);
        let next = &cores[i + 1];
        let nphys = next.phys;
        let merged = r * next.as_right_matrix();
        cores[i + 1] = MpsCore::from_right_matrix(&merged, nphys);
    }
    Mps { cores }
}

/// Right-canonical form: every core except the first satisfies
/// `sum_s A[s] A[s]^dagger = I`.
pub fn right_canonicalize(mps: &Mps) -> Mps {
    let mut cores = mps.cores.clone();
    for i in (1..cores.len()).rev() {
        let phys = cores[i].phys;
        let m = cores[i].as_right_matrix();
        let qr = m.adjoint().qr();
        let q = qr.q();
        let r = qr.r();
        cores[i] = MpsCore::from_right_matrix(&q.adjoint(), phys);
        let prev = &cores[i - 1];
        let pphys = prev.phys;
        let merged = prev.as_left_matrix() * r.adjoint();
        cores[i - 1] = MpsCore::from_left_matrix(&merged, pphys);
    }
    Mps { cores }
}

/// Sequential-SVD tensor-train factorization, left to right.
///
/// At every cut the singular values above `tol * sigma_max` are kept (and at
/// most `max_rank` of them); the resulting cores are left-canonical.
pub fn from_dense(state: &DenseState, max_rank: Option<usize>, tol: f64) -> Result<Mps> {
    let l = state.orbitals();
    if state.norm_sqr() == 0.0 {
        return Err(Error::ZeroState);
    }
    let mut cores = Vec::with_capacity(l);
    // remainder: r_prev x 2^(L-i)
    let mut rem = CMatrix::from_row_slice(1, 1 << l, state.coeffs());
    for _ in 0..l - 1 {
        let r_prev = rem.nrows();
        let rest = rem.ncols() / 2;
        let m = CMatrix::from_row_slice(r_prev * 2, rest, rem.transpose().as_slice());
        let svd = m.svd(true, true);
        let u = svd.u.expect("requested U");
        let vt = svd.v_t.expect("requested V^T");
        let sv = &svd.singular_values;
        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
        let values: Vec<f64> = order.iter().map(|&k| sv[k]).collect();
        let mut keep = linalg::numerical_rank(&values, tol).max(1);
        if let Some(cap) = max_rank {
            keep = keep.min(cap.max(1));
        }
        let core = CMatrix::from_fn(r_prev * 2, keep, |a, b| u[(a, order[b])]);
        cores.push(MpsCore::from_left_matrix(&core, 2));
        rem = CMatrix::from_fn(keep, rest, |a, b| vt[(order[a], b)] * values[a]);
    }
    let last = CMatrix::from_fn(rem.nrows() * 2, 1, |row, _| rem[(row / 2, row % 2)]);
    cores.push(MpsCore::from_left_matrix(&last, 2));
    Mps::new(cores)
}

/// Minimal bond dimensions read off the unfoldings of a dense state.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RankReport {
    pub ranks: Vec<usize>,
    pub singular_values: Vec<Vec<f64>>,
    pub tol: f64,
}

impl RankReport {
    pub fn max_rank(&self) -> usize {
        self.ranks.iter().copied().max().unwrap_or(0)
    }
}

/// The `2^k x 2^(L-k)` unfolding with rows indexed by `mu_1..mu_k`.
pub fn unfolding(state: &DenseState, k: usize) -> CMatrix {
    let l = state.orbitals();
    let cols = 1usize << (l - k);
    CMatrix::from_row_slice(1 << k, cols, state.coeffs())
}

pub fn unfolding_ranks(state: &DenseState, tol: f64) -> RankReport {
    let l = state.orbitals();
    let mut ranks = Vec::with_capacity(l.saturating_sub(1));
    let mut svs = Vec::with_capacity(l.saturating_sub(1));
    for k in 1..l {
        let s = linalg::singular_values(&unfolding(state, k));
        ranks.push(linalg::numerical_rank(&s, tol));
        svs.push(s);
    }
    RankReport {
        ranks,
        singular_values: svs,
        tol,
    }
}

#[derive(Serialize, Deserialize)]
struct CoreJson {
    shape: [usize; 3],
    data: Vec<Pair>,
}

#[derive(Serialize, Deserialize)]
struct MpsJson {
    #[serde(rename = "L")]
    sites: usize,
    cores: Vec<CoreJson>,
}

impl Serialize for Mps {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MpsJson {
            sites: self.cores.len(),
            cores: self
                .cores
                .iter()
                .map(|c| CoreJson {
                    shape: [c.left, c.phys, c.right],
                    data: c.data.iter().map(|&z| linalg::to_pair(z)).collect(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mps {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = MpsJson::deserialize(d)?;
        if raw.sites != raw.cores.len() {
            return Err(D::Error::custom("L does not match the number of cores"));
        }
        let cores = raw
            .cores
            .into_iter()
            .map(|c| {
                let [l, p, r] = c.shape;
                MpsCore::from_data(l, p, r, c.data.into_iter().map(linalg::from_pair).collect())
            })
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        Mps::new(cores).map_err(D::Error::custom)
    }
}
