//! Occupation-number representation of a finite fermionic Fock space.
//!
//! Basis states are binary strings `(mu_1, ..., mu_L)`; the string is read as
//! an integer with `mu_1` as the **most significant** bit, so orbital `p`
//! (zero-based in this API) lives at bit `L - 1 - p`. Creation operators carry
//! the Jordan-Wigner string `(-1)^(number of occupied orbitals q < p)`, which
//! makes the increasing-order Slater determinant `a+_{i1} ... a+_{iN} |vac>`
//! have coefficient `+1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, Pair, C64, ONE, ZERO};

/// Largest orbital count for which dense `2^L` vectors are built.
pub const DENSE_CAP: usize = 14;

pub(crate) fn check_cap(orbitals: usize) -> Result<()> {
    if orbitals > DENSE_CAP {
        return Err(Error::DenseCapExceeded {
            orbitals,
            cap: DENSE_CAP,
        });
    }
    Ok(())
}

#[inline]
pub(crate) fn bit(orbitals: usize, p: usize) -> usize {
    1 << (orbitals - 1 - p)
}

/// Sign and target of `a+_p` acting on basis state `index`, or `None` if the
/// orbital is already occupied.
#[inline]
pub fn create_on_basis(orbitals: usize, index: usize, p: usize) -> Option<(usize, f64)> {
    let b = bit(orbitals, p);
    if index & b != 0 {
        return None;
    }
    let before = (index >> (orbitals - p)).count_ones();
    let sign = if before.is_multiple_of(2) { 1.0 } else { -1.0 };
    Some((index | b, sign))
}

/// Sign and target of `a_p` acting on basis state `index`, or `None` if the
/// orbital is empty.
#[inline]
pub fn annihilate_on_basis(orbitals: usize, index: usize, p: usize) -> Option<(usize, f64)> {
    let b = bit(orbitals, p);
    if index & b == 0 {
        return None;
    }
    let before = (index >> (orbitals - p)).count_ones();
    let sign = if before.is_multiple_of(2) { 1.0 } else { -1.0 };
    Some((index & !b, sign))
}

/// A basis label `(mu_1, ..., mu_L)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct OccIndex {
    orbitals: usize,
    index: usize,
}

impl OccIndex {
    pub fn new(orbitals: usize, index: usize) -> Result<Self> {
        if orbitals >= usize::BITS as usize || index >> orbitals != 0 {
            return Err(Error::Dimension(format!(
                "index {index} does not fit in {orbitals} orbitals"
            )));
        }
        Ok(OccIndex { orbitals, index })
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let mut index = 0usize;
        for &b in bits {
            if b > 1 {
                return Err(Error::Dimension(format!("occupation {b} is not 0 or 1")));
            }
            index = (index << 1) | b as usize;
        }
        Ok(OccIndex {
            orbitals: bits.len(),
            index,
        })
    }

    pub fn vacuum(orbitals: usize) -> Self {
        OccIndex { orbitals, index: 0 }
    }

    pub fn bits(&self) -> Vec<u8> {
        (0..self.orbitals).map(|p| self.occupation(p)).collect()
    }

    pub fn occupation(&self, p: usize) -> u8 {
        ((self.index >> (self.orbitals - 1 - p)) & 1) as u8
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn orbitals(&self) -> usize {
        self.orbitals
    }

    pub fn particle_number(&self) -> usize {
        self.index.count_ones() as usize
    }

    /// Occupied orbitals in increasing order.
    pub fn occupied(&self) -> Vec<usize> {
        (0..self.orbitals)
            .filter(|&p| self.occupation(p) == 1)
            .collect()
    }
}

/// Coefficient vector `C_mu` over the whole Fock space.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    orbitals: usize,
    coeffs: Vec<C64>,
}

impl DenseState {
    pub fn zeros(orbitals: usize) -> Result<Self> {
        check_cap(orbitals)?;
        Ok(DenseState {
            orbitals,
            coeffs: vec![ZERO; 1 << orbitals],
        })
    }

    pub fn vacuum(orbitals: usize) -> Result<Self> {
        Self::basis(OccIndex::vacuum(orbitals))
    }

    pub fn basis(mu: OccIndex) -> Result<Self> {
        let mut s = Self::zeros(mu.orbitals())?;
        s.coeffs[mu.index()] = ONE;
        Ok(s)
    }

    pub fn from_coeffs(orbitals: usize, coeffs: Vec<C64>) -> Result<Self> {
        check_cap(orbitals)?;
        if coeffs.len() != 1 << orbitals {
            return Err(Error::Dimension(format!(
                "{} coefficients for {} orbitals",
                coeffs.len(),
                orbitals
            )));
        }
        Ok(DenseState { orbitals, coeffs })
    }

    pub fn orbitals(&self) -> usize {
        self.orbitals
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<C64> {
        self.coeffs
    }

    pub fn coeff(&self, mu: OccIndex) -> C64 {
        self.coeffs[mu.index()]
    }

    pub fn norm_sqr(&self) -> f64 {
        linalg::norm_sqr(&self.coeffs)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroState);
        }
        Ok(self.scaled(C64::new(1.0 / n, 0.0)))
    }

    pub fn scaled(&self, factor: C64) -> Self {
        DenseState {
            orbitals: self.orbitals,
            coeffs: self.coeffs.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn inner(&self, other: &DenseState) -> C64 {
        linalg::inner(&self.coeffs, &other.coeffs)
    }

    pub fn distance(&self, other: &DenseState) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Projection onto the `n`-particle sector.
    pub fn sector(&self, n: usize) -> DenseState {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                if i.count_ones() as usize == n {
                    z
                } else {
                    ZERO
                }
            })
            .collect();
        DenseState {
            orbitals: self.orbitals,
            coeffs,
        }
    }

    /// Squared norm of the part outside the `n`-particle sector.
    pub fn weight_outside_sector(&self, n: usize) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(i, _)| i.count_ones() as usize != n)
            .map(|(_, z)| z.norm_sqr())
            .sum()
    }

    /// `||(N - n) psi||`.
    pub fn number_leakage(&self, n: usize) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let d = i.count_ones() as f64 - n as f64;
                d * d * z.norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }

    fn check_orbital(&self, p: usize) -> Result<()> {
        if p >= self.orbitals {
            return Err(Error::OrbitalOutOfRange {
                index: p,
                orbitals: self.orbitals,
            });
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct DenseStateJson {
    #[serde(rename = "L")]
    orbitals: usize,
    coeffs: Vec<Pair>,
}

impl Serialize for DenseState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DenseStateJson {
            orbitals: self.orbitals,
            coeffs: self.coeffs.iter().map(|&z| linalg::to_pair(z)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DenseState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = DenseStateJson::deserialize(d)?;
        DenseState::from_coeffs(
            raw.orbitals,
            raw.coeffs.into_iter().map(linalg::from_pair).collect(),
        )
        .map_err(serde::de::Error::custom)
    }
}

pub fn apply_creation(state: &DenseState, p: usize) -> Result<DenseState> {
    state.check_orbital(p)?;
    let l = state.orbitals;
    let mut out = vec![ZERO; state.coeffs.len()];
    for (i, &z) in state.coeffs.iter().enumerate() {
        if z == ZERO {
            continue;
        }
        if let Some((j, sign)) = create_on_basis(l, i, p) {
            out[j] += z * sign;
        }
    }
    Ok(DenseState {
        orbitals: l,
        coeffs: out,
    })
}

pub fn apply_annihilation(state: &DenseState, p: usize) -> Result<DenseState> {
    state.check_orbital(p)?;
    let l = state.orbitals;
    let mut out = vec![ZERO; state.coeffs.len()];
    for (i, &z) in state.coeffs.iter().enumerate() {
        if z == ZERO {
            continue;
        }
        if let Some((j, sign)) = annihilate_on_basis(l, i, p) {
            out[j] += z * sign;
        }
    }
    Ok(DenseState {
        orbitals: l,
        coeffs: out,
    })
}

/// `a+_{i1} ... a+_{iN} |vac>` for strictly increasing `orbitals`.
pub fn slater(orbitals: &[usize], total: usize) -> Result<DenseState> {
    if orbitals.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::UnsortedOrbitals(orbitals.to_vec()));
    }
    let mut state = DenseState::vacuum(total)?;
    for &p in orbitals.iter().rev() {
        state = apply_creation(&state, p)?;
    }
    Ok(state)
}

/// Dense `2^L x 2^L` matrix of `a+_p`.
pub fn creation_matrix(orbitals: usize, p: usize) -> Result<CMatrix> {
    check_cap(orbitals)?;
    if p >= orbitals {
        return Err(Error::OrbitalOutOfRange { index: p, orbitals });
    }
    let dim = 1 << orbitals;
    let mut m = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        if let Some((j, sign)) = create_on_basis(orbitals, i, p) {
            m[(j, i)] = C64::new(sign, 0.0);
        }
    }
    Ok(m)
}

/// Dense `2^L x 2^L` matrix of `a_p`.
pub fn annihilation_matrix(orbitals: usize, p: usize) -> Result<CMatrix> {
    check_cap(orbitals)?;
    if p >= orbitals {
        return Err(Error::OrbitalOutOfRange { index: p, orbitals });
    }
    let dim = 1 << orbitals;
    let mut m = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        if let Some((j, sign)) = annihilate_on_basis(orbitals, i, p) {
            m[(j, i)] = C64::new(sign, 0.0);
        }
    }
    Ok(m)
}

/// One-particle reduced density matrix.
///
/// Entry `(j, i)` holds `<psi, a+_i a_j psi>`, i.e. `gamma[(j, i)] = <phi_j, gamma phi_i>`.
#[derive(Clone, Debug)]
pub struct OneParticleRdm {
    pub gamma: CMatrix,
}

impl OneParticleRdm {
    pub fn trace(&self) -> f64 {
        self.gamma.trace().re
    }

    /// Occupation numbers, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigh(&self.gamma).0
    }

    /// Number of occupation numbers above `tol` times the largest one.
    pub fn rank(&self, tol: f64) -> usize {
        let ev = self.eigenvalues();
        let max = ev.iter().cloned().fold(0.0, f64::max);
        if max <= 0.0 {
            return 0;
        }
        ev.iter().filter(|&&x| x > tol * max).count()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.gamma - self.gamma.adjoint()).norm()
    }
}

pub fn rdm(state: &DenseState) -> OneParticleRdm {
    let l = state.orbitals;
    let norm = state.norm_sqr();
    if (norm - 1.0).abs() > 1e-10 {
        log::warn!("rdm of a state with squared norm {norm:.6e}");
    }
    let mut gamma = CMatrix::zeros(l, l);
    for (x, &cx) in state.coeffs.iter().enumerate() {
        if cx == ZERO {
            continue;
        }
        for j in 0..l {
            let Some((y, s1)) = annihilate_on_basis(l, x, j) else {
                continue;
            };
            for i in 0..l {
                if let Some((z, s2)) = create_on_basis(l, y, i) {
                    gamma[(j, i)] += state.coeffs[z].conj() * cx * (s1 * s2);
                }
            }
        }
    }
    OneParticleRdm { gamma }
}

fn minor_det(u: &CMatrix, rows: &[usize], cols: &[usize]) -> C64 {
    match rows.len() {
        0 => ONE,
        1 => u[(rows[0], cols[0])],
        2 => {
            u[(rows[0], cols[0])] * u[(rows[1], cols[1])]
                - u[(rows[0], cols[1])] * u[(rows[1], cols[0])]
        }
        n => CMatrix::from_fn(n, n, |a, b| u[(rows[a], cols[b])]).determinant(),
    }
}

/// Re-expresses `state` in the rotated orbitals `phi'_j = sum_i U_ij phi_i`.
///
/// On each particle-number sector the new coefficients are
/// `C'_J = sum_I conj(det U[I, J]) C_I`; for two particles this is the
/// congruence `c' = U^dagger c conj(U)` (plain `U^T c U` when `U` is real).
/// Sectors with no weight are skipped.
pub fn rotate_basis(state: &DenseState, u: &CMatrix) -> Result<DenseState> {
    let l = state.orbitals;
    if u.nrows() != l || u.ncols() != l {
        return Err(Error::Dimension(format!(
            "rotation is {}x{}, state has {} orbitals",
            u.nrows(),
            u.ncols(),
            l
        )));
    }
    linalg::check_unitary(u, 1e-10)?;
    let mut out = vec![ZERO; state.coeffs.len()];
    for n in 0..=l {
        let members: Vec<usize> = (0..state.coeffs.len())
            .filter(|i| i.count_ones() as usize == n)
            .collect();
        if members.iter().all(|&i| state.coeffs[i] == ZERO) {
            continue;
        }
        let occupied: Vec<Vec<usize>> = members
            .iter()
            .map(|&i| OccIndex { orbitals: l, index: i }.occupied())
            .collect();
        for (jj, &j) in members.iter().enumerate() {
            let mut acc = ZERO;
            for (ii, &i) in members.iter().enumerate() {
                let c = state.coeffs[i];
                if c == ZERO {
                    continue;
                }
                acc += minor_det(u, &occupied[ii], &occupied[jj]).conj() * c;
            }
            out[j] = acc;
        }
    }
    Ok(DenseState {
        orbitals: l,
        coeffs: out,
    })
}

/// Expectation value of `N` (no normalization applied).
pub fn particle_number_expectation(state: &DenseState) -> f64 {
    state
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, z)| i.count_ones() as f64 * z.norm_sqr())
        .sum()
}
