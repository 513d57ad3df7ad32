//! Particle-number-conserving two-body Hamiltonians
//! `H = sum h_pq a+_p a_q + 1/2 sum v_pqrs a+_p a+_q a_s a_r + E_core`
//! with physicist-ordered integrals `v_pqrs = <pq|rs>`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, DenseState};
use crate::linalg::{self, CMatrix, Pair, C64, ZERO};

/// Relative tolerance for the integral symmetry checks.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct TwoBodyHamiltonian {
    orbitals: usize,
    h: CMatrix,
    v: Vec<C64>,
    core_energy: f64,
}

#[inline]
fn idx4(l: usize, p: usize, q: usize, r: usize, s: usize) -> usize {
    ((p * l + q) * l + r) * l + s
}

impl TwoBodyHamiltonian {
    /// Validates `h = h^dagger`, `v_pqrs = v_qpsr` and `v_pqrs = conj(v_rspq)`.
    pub fn new(h: CMatrix, v: Vec<C64>, core_energy: f64) -> Result<Self> {
        let l = h.nrows();
        if !h.is_square() {
            return Err(Error::Dimension("one-electron integrals must be square".into()));
        }
        if v.len() != l.pow(4) {
            return Err(Error::Dimension(format!(
                "expected {} two-electron integrals, got {}",
                l.pow(4),
                v.len()
            )));
        }
        let ham = TwoBodyHamiltonian {
            orbitals: l,
            h,
            v,
            core_energy,
        };
        ham.check_symmetry()?;
        Ok(ham)
    }

    fn check_symmetry(&self) -> Result<()> {
        let l = self.orbitals;
        let scale_h = self.h.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let dh = (&self.h - self.h.adjoint()).camax();
        if dh > SYMMETRY_TOL * scale_h {
            return Err(Error::Symmetry(format!("h is not Hermitian (deviation {dh:.3e})")));
        }
        let scale_v = self.v.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let (mut swap, mut herm) = (0.0f64, 0.0f64);
        for p in 0..l {
            for q in 0..l {
                for r in 0..l {
                    for s in 0..l {
                        let x = self.v(p, q, r, s);
                        swap = swap.max((x - self.v(q, p, s, r)).norm());
                        herm = herm.max((x - self.v(r, s, p, q).conj()).norm());
                    }
                }
            }
        }
        if swap > SYMMETRY_TOL * scale_v {
            return Err(Error::Symmetry(format!(
                "v_pqrs != v_qpsr (deviation {swap:.3e})"
            )));
        }
        if herm > SYMMETRY_TOL * scale_v {
            return Err(Error::Symmetry(format!(
                "v_pqrs != conj(v_rspq) (deviation {herm:.3e})"
            )));
        }
        Ok(())
    }

    pub fn orbitals(&self) -> usize {
        self.orbitals
    }

    pub fn h(&self) -> &CMatrix {
        &self.h
    }

    pub fn v(&self, p: usize, q: usize, r: usize, s: usize) -> C64 {
        self.v[idx4(self.orbitals, p, q, r, s)]
    }

    pub fn v_data(&self) -> &[C64] {
        &self.v
    }

    pub fn core_energy(&self) -> f64 {
        self.core_energy
    }

    /// Random integrals: Gaussian Hermitian `h`, Gaussian `v` projected onto
    /// the symmetric subspace by averaging over the two symmetries.
    pub fn random<R: Rng + ?Sized>(orbitals: usize, rng: &mut R) -> Self {
        let l = orbitals;
        let g = linalg::random_complex_matrix(rng, l, l);
        let h = (&g + g.adjoint()) * C64::new(0.5, 0.0);
        let raw: Vec<C64> = (0..l.pow(4)).map(|_| linalg::complex_gaussian(rng)).collect();
        let mut v = vec![ZERO; raw.len()];
        for p in 0..l {
            for q in 0..l {
                for r in 0..l {
                    for s in 0..l {
                        v[idx4(l, p, q, r, s)] = (raw[idx4(l, p, q, r, s)]
                            + raw[idx4(l, q, p, s, r)]
                            + raw[idx4(l, r, s, p, q)].conj()
                            + raw[idx4(l, s, r, q, p)].conj())
                            * 0.25;
                    }
                }
            }
        }
        TwoBodyHamiltonian {
            orbitals: l,
            h,
            v,
            core_energy: 0.0,
        }
    }

    /// Integrals in the orbitals `phi'_j = sum_i u_ij phi_i`:
    /// `h' = u^dagger h u`,
    /// `v'_abcd = sum conj(u_pa) conj(u_qb) v_pqrs u_rc u_sd`.
    pub fn rotate(&self, u: &CMatrix) -> Result<Self> {
        let l = self.orbitals;
        linalg::check_unitary(u, 1e-10)?;
        if u.nrows() != l {
            return Err(Error::Dimension(format!(
                "rotation is {}x{}, Hamiltonian has {l} orbitals",
                u.nrows(),
                u.ncols()
            )));
        }
        let h = u.adjoint() * &self.h * u;
        // one index at a time; `slot` picks which of the four is transformed
        let transform = |src: &[C64], slot: usize, conj: bool| -> Vec<C64> {
            let mut out = vec![ZERO; src.len()];
            let stride = l.pow(3 - slot as u32);
            for (flat, o) in out.iter_mut().enumerate() {
                let new = (flat / stride) % l;
                let base = flat - new * stride;
                let mut acc = ZERO;
                for old in 0..l {
                    let w = if conj { u[(old, new)].conj() } else { u[(old, new)] };
                    acc += w * src[base + old * stride];
                }
                *o = acc;
            }
            out
        };
        let v = transform(&self.v, 0, true);
        let v = transform(&v, 1, true);
        let v = transform(&v, 2, false);
        let v = transform(&v, 3, false);
        let mut out = TwoBodyHamiltonian {
            orbitals: l,
            h,
            v,
            core_energy: self.core_energy,
        };
        out.symmetrize();
        Ok(out)
    }

    /// Removes rounding-level asymmetry left by transformations.
    fn symmetrize(&mut self) {
        let l = self.orbitals;
        self.h = (&self.h + self.h.adjoint()) * C64::new(0.5, 0.0);
        let raw = self.v.clone();
        for p in 0..l {
            for q in 0..l {
                for r in 0..l {
                    for s in 0..l {
                        self.v[idx4(l, p, q, r, s)] = (raw[idx4(l, p, q, r, s)]
                            + raw[idx4(l, q, p, s, r)]
                            + raw[idx4(l, r, s, p, q)].conj()
                            + raw[idx4(l, s, r, q, p)].conj())
                            * 0.25;
                    }
                }
            }
        }
    }

    /// Dense `2^L x 2^L` matrix over the full Fock space.
    pub fn assemble_dense(&self) -> Result<CMatrix> {
        let l = self.orbitals;
        fock::check_cap(l)?;
        let dim = 1usize << l;
        let mut m = CMatrix::zeros(dim, dim);
        for x in 0..dim {
            m[(x, x)] += C64::new(self.core_energy, 0.0);
            for q in 0..l {
                let Some((x1, s1)) = fock::annihilate_on_basis(l, x, q) else {
                    continue;
                };
                for p in 0..l {
                    let h = self.h[(p, q)];
                    if h == ZERO {
                        continue;
                    }
                    if let Some((y, s2)) = fock::create_on_basis(l, x1, p) {
                        m[(y, x)] += h * (s1 * s2);
                    }
                }
            }
            // a+_p a+_q a_s a_r
            for r in 0..l {
                let Some((x1, s1)) = fock::annihilate_on_basis(l, x, r) else {
                    continue;
                };
                for s in 0..l {
                    let Some((x2, s2)) = fock::annihilate_on_basis(l, x1, s) else {
                        continue;
                    };
                    for q in 0..l {
                        let Some((x3, s3)) = fock::create_on_basis(l, x2, q) else {
                            continue;
                        };
                        for p in 0..l {
                            let Some((y, s4)) = fock::create_on_basis(l, x3, p) else {
                                continue;
                            };
                            let w = self.v(p, q, r, s);
                            m[(y, x)] += w * (0.5 * s1 * s2 * s3 * s4);
                        }
                    }
                }
            }
        }
        Ok(m)
    }
}

/// `-|psi><psi|` for a normalized copy of `psi`.
pub fn parent_hamiltonian(psi: &DenseState) -> Result<CMatrix> {
    let psi = psi.normalized()?;
    let c = nalgebra::DVector::from_column_slice(psi.coeffs());
    Ok(-(&c * c.adjoint()))
}

/// Diagonal of the number operator, `N(mu)` per basis index.
pub fn number_diagonal(orbitals: usize) -> Vec<f64> {
    (0..1usize << orbitals)
        .map(|x| x.count_ones() as f64)
        .collect()
}

/// Basis indices of the `n`-particle sector in increasing order.
pub fn sector_indices(orbitals: usize, n: usize) -> Vec<usize> {
    (0..1usize << orbitals)
        .filter(|x| x.count_ones() as usize == n)
        .collect()
}

/// Orbital count of a dense Fock-space operator.
pub fn operator_orbitals(h: &CMatrix) -> Result<usize> {
    let dim = h.nrows();
    if !h.is_square() || !dim.is_power_of_two() {
        return Err(Error::Dimension(format!(
            "operator of shape {}x{} is not over a Fock space",
            h.nrows(),
            h.ncols()
        )));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// Lowest `count` eigenvalues of `h` restricted to the `n`-particle sector,
/// with eigenvectors embedded back into the full space.
pub fn sector_eigen(h: &CMatrix, n: usize, count: usize) -> Result<(Vec<f64>, Vec<DenseState>)> {
    let l = operator_orbitals(h)?;
    let idx = sector_indices(l, n);
    if count > idx.len() {
        return Err(Error::TooManyLevels {
            requested: count,
            available: idx.len(),
        });
    }
    let sub = CMatrix::from_fn(idx.len(), idx.len(), |i, j| h[(idx[i], idx[j])]);
    let (vals, vecs) = linalg::hermitian_eigh(&sub);
    let mut states = Vec::with_capacity(count);
    for k in 0..count {
        let mut s = DenseState::zeros(l)?;
        for (i, &x) in idx.iter().enumerate() {
            s.coeffs_mut()[x] = vecs[(i, k)];
        }
        states.push(s);
    }
    Ok((vals[..count].to_vec(), states))
}

/// Lowest `count` eigenvalues of `h` in the `n`-particle sector, ascending.
pub fn fci_levels(h: &CMatrix, n: usize, count: usize) -> Result<Vec<f64>> {
    sector_eigen(h, n, count).map(|(v, _)| v)
}

/// Upper bound on the spectral range: twice the largest absolute row sum.
pub fn spectral_range_bound(h: &CMatrix) -> f64 {
    2.0 * (0..h.nrows())
        .map(|i| h.row(i).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `<psi, H psi> / <psi, psi>`.
pub fn expectation(h: &CMatrix, psi: &DenseState) -> f64 {
    let c = nalgebra::DVector::from_column_slice(psi.coeffs());
    let num = c.dotc(&(h * &c)).re;
    num / psi.norm_sqr()
}

#[derive(Serialize, Deserialize)]
struct HamiltonianJson {
    #[serde(rename = "L")]
    orbitals: usize,
    h: Vec<Pair>,
    v: Vec<Pair>,
    #[serde(default)]
    core_energy: f64,
}

impl Serialize for TwoBodyHamiltonian {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let l = self.orbitals;
        let mut h = Vec::with_capacity(l * l);
        for p in 0..l {
            for q in 0..l {
                h.push(linalg::to_pair(self.h[(p, q)]));
            }
        }
        HamiltonianJson {
            orbitals: l,
            h,
            v: self.v.iter().map(|&z| linalg::to_pair(z)).collect(),
            core_energy: self.core_energy,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TwoBodyHamiltonian {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = HamiltonianJson::deserialize(d)?;
        let l = raw.orbitals;
        if raw.h.len() != l * l {
            return Err(D::Error::custom(format!(
                "h must have {} entries, got {}",
                l * l,
                raw.h.len()
            )));
        }
        let h = CMatrix::from_row_iterator(l, l, raw.h.into_iter().map(linalg::from_pair));
        let v = raw.v.into_iter().map(linalg::from_pair).collect();
        TwoBodyHamiltonian::new(h, v, raw.core_energy).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{annihilation_matrix, creation_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// The same operator built from dense creation/annihilation matrices.
    fn oracle_dense(ham: &TwoBodyHamiltonian) -> CMatrix {
        let l = ham.orbitals();
        let dim = 1 << l;
        let cr: Vec<CMatrix> = (0..l).map(|p| creation_matrix(l, p).unwrap()).collect();
        let an: Vec<CMatrix> = (0..l).map(|p| annihilation_matrix(l, p).unwrap()).collect();
        let mut m = CMatrix::identity(dim, dim) * C64::new(ham.core_energy(), 0.0);
        for p in 0..l {
            for q in 0..l {
                m += &cr[p] * &an[q] * ham.h()[(p, q)];
            }
        }
        for p in 0..l {
            for q in 0..l {
                for r in 0..l {
                    for s in 0..l {
                        m += &cr[p] * &cr[q] * &an[s] * &an[r] * (ham.v(p, q, r, s) * 0.5);
                    }
                }
            }
        }
        m
    }

    #[test]
    fn assembly_matches_operator_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ham = TwoBodyHamiltonian::random(4, &mut rng);
        let a = ham.assemble_dense().unwrap();
        assert!((&a - oracle_dense(&ham)).norm() < 1e-12);
        assert!((&a - a.adjoint()).norm() < 1e-10);
    }

    #[test]
    fn commutes_with_number_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ham = TwoBodyHamiltonian::random(6, &mut rng);
        let a = ham.assemble_dense().unwrap();
        let nd = number_diagonal(6);
        let mut comm = 0.0f64;
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                comm = comm.max((a[(i, j)] * (nd[j] - nd[i])).norm());
            }
        }
        assert!(comm < 1e-10);
    }

    #[test]
    fn non_interacting_is_diagonal() {
        let eps = [-1.0, 0.5, 2.0];
        let h = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            3,
            eps.iter().map(|&e| C64::new(e, 0.0)),
        ));
        let ham = TwoBodyHamiltonian::new(h, vec![ZERO; 81], 0.0).unwrap();
        let a = ham.assemble_dense().unwrap();
        for x in 0..8usize {
            let expected: f64 = (0..3).filter(|&p| (x >> (2 - p)) & 1 == 1).map(|p| eps[p]).sum();
            assert!((a[(x, x)].re - expected).abs() < 1e-15);
        }
        assert!((a.clone() - CMatrix::from_diagonal(&a.diagonal())).norm() == 0.0);
        assert_eq!(fci_levels(&a, 2, 3).unwrap(), vec![-0.5, 1.0, 2.5]);
    }

    #[test]
    fn parent_projector_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = crate::pair::random_two_particle(6, &mut rng).unwrap();
        let h = parent_hamiltonian(&psi).unwrap();
        let levels = fci_levels(&h, 2, 2).unwrap();
        assert!((levels[0] + 1.0).abs() < 1e-12);
        assert!(levels[1].abs() < 1e-12);
    }

    #[test]
    fn sector_solve_agrees_with_full_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ham = TwoBodyHamiltonian::random(6, &mut rng);
        let a = ham.assemble_dense().unwrap();
        let sector = fci_levels(&a, 2, 5).unwrap();
        let (vals, vecs) = linalg::hermitian_eigh(&a);
        let nd = number_diagonal(6);
        let mut filtered: Vec<f64> = (0..vals.len())
            .filter(|&k| {
                let n: f64 = (0..vals.len()).map(|x| vecs[(x, k)].norm_sqr() * nd[x]).sum();
                (n - 2.0).abs() < 1e-6
            })
            .map(|k| vals[k])
            .collect();
        filtered.truncate(5);
        for (a, b) in sector.iter().zip(&filtered) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(matches!(
            fci_levels(&a, 2, 16),
            Err(Error::TooManyLevels { requested: 16, available: 15 })
        ));
    }

    #[test]
    fn rotation_preserves_spectrum_and_matches_state_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ham = TwoBodyHamiltonian::random(5, &mut rng);
        let u = linalg::haar_unitary(&mut rng, 5);
        let rot = ham.rotate(&u).unwrap();
        let a = ham.assemble_dense().unwrap();
        let b = rot.assemble_dense().unwrap();
        for n in 0..=5 {
            let count = linalg::binomial(5, n);
            let ea = fci_levels(&a, n, count).unwrap();
            let eb = fci_levels(&b, n, count).unwrap();
            for (x, y) in ea.iter().zip(&eb) {
                assert!((x - y).abs() < 1e-9);
            }
        }
        // a state and the Hamiltonian rotated together keep their energy
        let psi = crate::pair::random_two_particle(5, &mut rng).unwrap();
        let psi_rot = fock::rotate_basis(&psi, &u).unwrap();
        assert!((expectation(&a, &psi) - expectation(&b, &psi_rot)).abs() < 1e-10);
    }

    #[test]
    fn symmetry_violation_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ham = TwoBodyHamiltonian::random(3, &mut rng);
        let mut v = ham.v_data().to_vec();
        v[idx4(3, 0, 1, 2, 0)] += C64::new(0.1, 0.0);
        assert!(matches!(
            TwoBodyHamiltonian::new(ham.h().clone(), v, 0.0),
            Err(Error::Symmetry(_))
        ));
        let mut h = ham.h().clone();
        h[(0, 1)] += C64::new(0.0, 1.0);
        assert!(TwoBodyHamiltonian::new(h, ham.v_data().to_vec(), 0.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ham = TwoBodyHamiltonian::random(3, &mut rng);
        let text = serde_json::to_string(&ham).unwrap();
        let back: TwoBodyHamiltonian = serde_json::from_str(&text).unwrap();
        assert_eq!(back, ham);
    }
}
