//! Unfolding-rank diagnostics for two-particle states: the bordered structure
//! of the sequential unfoldings, the lower-bound checks on rotated states, and
//! the empirical rank law for generic coefficients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, DenseState};
use crate::linalg::{self, CMatrix, C64};
use crate::mps::{self, DEFAULT_RANK_TOL};
use crate::pair::{self, AntisymMatrix, PAIR_TOL};

/// How a rank-two unfolding splits between its blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnfoldingCase {
    /// Both border vectors vanish and the single-single block has rank 2.
    BordersVanish,
    /// Both border vectors are nonzero and the single-single block vanishes.
    BordersOnly,
    /// Anything else, in particular every unfolding of rank other than 2.
    Other,
}

/// The two-particle unfolding at cut `n`:
///
/// ```text
///             | right pairs | right singles | right empty
/// left empty  |    v1^T     |       0       |     0
/// left single |     0       |       D       |     0
/// left pairs  |     0       |       0       |     v2
/// ```
///
/// `D[i][j] = c_{i, n+j}`; `v1` lists `c_rs` for `n <= r < s` and `v2` lists
/// `c_rs` for `r < s < n`, both row-major over `r < s` (0-based orbitals).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StructuredUnfolding {
    pub n: usize,
    pub orbitals: usize,
    #[serde(skip)]
    pub d: CMatrix,
    #[serde(skip)]
    pub v1: Vec<C64>,
    #[serde(skip)]
    pub v2: Vec<C64>,
    pub rank_d: usize,
    pub v1_nonzero: bool,
    pub v2_nonzero: bool,
    pub rank: usize,
    pub case: UnfoldingCase,
    pub tol: f64,
}

fn pairs_in(range: std::ops::Range<usize>) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for r in range.clone() {
        for s in r + 1..range.end {
            v.push((r, s));
        }
    }
    v
}

impl StructuredUnfolding {
    /// Reassembles the bordered matrix in the row/column order of the table above.
    pub fn assemble(&self) -> CMatrix {
        let (n, l) = (self.n, self.orbitals);
        let (p1, p2) = (self.v1.len(), self.v2.len());
        let rows = 1 + n + p2;
        let cols = p1 + (l - n) + 1;
        let mut m = CMatrix::zeros(rows, cols);
        for (j, &z) in self.v1.iter().enumerate() {
            m[(0, j)] = z;
        }
        for i in 0..n {
            for j in 0..l - n {
                m[(1 + i, p1 + j)] = self.d[(i, j)];
            }
        }
        for (i, &z) in self.v2.iter().enumerate() {
            m[(1 + n + i, cols - 1)] = z;
        }
        m
    }

    /// The same rows and columns picked out of the raw `2^n x 2^(L-n)` unfolding.
    pub fn raw_block(state: &DenseState, n: usize) -> CMatrix {
        let l = state.orbitals();
        let raw = mps::unfolding(state, n);
        let left_bit = |i: usize| 1usize << (n - 1 - i);
        let right_bit = |j: usize| 1usize << (l - 1 - j);
        let mut rows = vec![0usize];
        rows.extend((0..n).map(left_bit));
        rows.extend(pairs_in(0..n).into_iter().map(|(r, s)| left_bit(r) | left_bit(s)));
        let mut cols: Vec<usize> = pairs_in(n..l)
            .into_iter()
            .map(|(r, s)| right_bit(r) | right_bit(s))
            .collect();
        cols.extend((n..l).map(right_bit));
        cols.push(0);
        CMatrix::from_fn(rows.len(), cols.len(), |i, j| raw[(rows[i], cols[j])])
    }
}

/// Splits the unfolding at cut `n` (`1 <= n <= L-1`) into its blocks.
///
/// The blocks occupy disjoint rows and columns, so the singular values of the
/// whole unfolding are those of `D` together with `|v1|` and `|v2|`; ranks
/// are counted against the largest of them.
pub fn structured_unfolding(c: &AntisymMatrix, n: usize, tol: f64) -> Result<StructuredUnfolding> {
    let l = c.dim();
    if n == 0 || n >= l {
        return Err(Error::Dimension(format!("cut {n} outside 1..{}", l.saturating_sub(1))));
    }
    let d = CMatrix::from_fn(n, l - n, |i, j| c.get(i, n + j));
    let v1: Vec<C64> = pairs_in(n..l).into_iter().map(|(r, s)| c.get(r, s)).collect();
    let v2: Vec<C64> = pairs_in(0..n).into_iter().map(|(r, s)| c.get(r, s)).collect();
    let sd = linalg::singular_values(&d);
    let n1 = linalg::norm_sqr(&v1).sqrt();
    let n2 = linalg::norm_sqr(&v2).sqrt();
    let scale = sd.first().copied().unwrap_or(0.0).max(n1).max(n2);
    let cut = tol * scale;
    let rank_d = if scale == 0.0 { 0 } else { sd.iter().filter(|&&s| s > cut).count() };
    let v1_nonzero = scale > 0.0 && n1 > cut;
    let v2_nonzero = scale > 0.0 && n2 > cut;
    let rank = rank_d + v1_nonzero as usize + v2_nonzero as usize;
    let case = match (rank, rank_d, v1_nonzero, v2_nonzero) {
        (2, 2, false, false) => UnfoldingCase::BordersVanish,
        (2, 0, true, true) => UnfoldingCase::BordersOnly,
        _ => UnfoldingCase::Other,
    };
    Ok(StructuredUnfolding {
        n,
        orbitals: l,
        d,
        v1,
        v2,
        rank_d,
        v1_nonzero,
        v2_nonzero,
        rank,
        case,
        tol,
    })
}

/// Ranks of all cuts computed from the block structure.
pub fn structured_ranks(c: &AntisymMatrix, tol: f64) -> Result<Vec<usize>> {
    (1..c.dim())
        .map(|n| structured_unfolding(c, n, tol).map(|s| s.rank))
        .collect()
}

/// The lower-bound statements checked against one rank vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LowerBoundVerdict {
    pub ranks: Vec<usize>,
    /// `r_j >= 2` at every cut.
    pub all_at_least_two: bool,
    /// `r_1 = r_{L-1} = 2`.
    pub boundary_two: bool,
    /// `max(r_j, r_{j+1}) >= 3` for every consecutive pair with `2 <= j <= L-3`.
    pub consecutive_three: bool,
    pub l1: usize,
    pub is_optimal_vector: bool,
}

impl LowerBoundVerdict {
    pub fn from_ranks(ranks: &[usize]) -> Self {
        let l = ranks.len() + 1;
        let all_at_least_two = ranks.iter().all(|&r| r >= 2);
        let boundary_two = !ranks.is_empty() && ranks[0] == 2 && ranks[ranks.len() - 1] == 2;
        // 1-based cuts j, j+1 with 2 <= j <= L-3 are 0-based positions 1..=L-4
        let consecutive_three = (1..l.saturating_sub(3))
            .all(|j| ranks[j].max(ranks[j + 1]) >= 3);
        LowerBoundVerdict {
            ranks: ranks.to_vec(),
            all_at_least_two,
            boundary_two,
            consecutive_three,
            l1: ranks.iter().sum(),
            is_optimal_vector: ranks == pair::optimal_bond_dims(l).as_slice(),
        }
    }

    pub fn holds(&self) -> bool {
        self.all_at_least_two && self.boundary_two && self.consecutive_three
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RotationTrial {
    /// `identity`, `natural` or `haar`.
    pub rotation: String,
    /// Seed of the Haar sample; absent for the deterministic rotations.
    pub seed: Option<u64>,
    pub verdict: LowerBoundVerdict,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LowerBoundReport {
    #[serde(rename = "L")]
    pub orbitals: usize,
    pub seed: u64,
    pub tol: f64,
    pub optimal_vector: Vec<usize>,
    pub optimal_l1: usize,
    pub trials: Vec<RotationTrial>,
    /// Number of trials breaking any of the lower-bound statements.
    pub violations: usize,
    pub min_l1: usize,
    /// The natural-orbital rotation reaches the optimal vector, and every
    /// trial attaining the minimal l1 norm has exactly that vector.
    pub minimum_is_optimal_vector: bool,
    /// The statements are only claimed for even `L`.
    pub even_length: bool,
}

/// Per-trial seed derived from the run seed.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_add(trial as u64)
}

/// Rotates a full-rank two-particle state by the identity, its natural-orbital
/// pairing and `trials` Haar-random unitaries, and checks the lower bounds on
/// each resulting rank vector.
pub fn verify_lower_bound(
    state: &DenseState,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<LowerBoundReport> {
    let l = state.orbitals();
    let c = AntisymMatrix::from_state(state)?;
    let nf = pair::normal_form(&c, PAIR_TOL);
    let rank = nf.gamma_rank();
    if rank < l {
        return Err(Error::DeficientRdm { rank, expected: l });
    }
    let psi = state.normalized()?;
    let verdict_for = |u: &CMatrix| -> Result<LowerBoundVerdict> {
        let rotated = fock::rotate_basis(&psi, u)?;
        Ok(LowerBoundVerdict::from_ranks(&mps::unfolding_ranks(&rotated, tol).ranks))
    };

    let mut out = vec![
        RotationTrial {
            rotation: "identity".into(),
            seed: None,
            verdict: verdict_for(&CMatrix::identity(l, l))?,
        },
        RotationTrial {
            rotation: "natural".into(),
            seed: None,
            verdict: verdict_for(&nf.u)?,
        },
    ];
    let haar: Vec<RotationTrial> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = trial_seed(seed, t);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let u = linalg::haar_unitary(&mut rng, l);
            verdict_for(&u).map(|verdict| RotationTrial {
                rotation: "haar".into(),
                seed: Some(s),
                verdict,
            })
        })
        .collect::<Result<_>>()?;
    out.extend(haar);

    let optimal_vector = pair::optimal_bond_dims(l);
    let optimal_l1 = optimal_vector.iter().sum();
    let violations = out.iter().filter(|t| !t.verdict.holds()).count();
    let min_l1 = out.iter().map(|t| t.verdict.l1).min().unwrap_or(0);
    let minimum_is_optimal_vector = out[1].verdict.is_optimal_vector
        && out
            .iter()
            .filter(|t| t.verdict.l1 == min_l1)
            .all(|t| t.verdict.is_optimal_vector);
    Ok(LowerBoundReport {
        orbitals: l,
        seed,
        tol,
        optimal_vector,
        optimal_l1,
        trials: out,
        violations,
        min_l1,
        minimum_is_optimal_vector,
        even_length: l.is_multiple_of(2),
    })
}

/// `2 + min(k, L-k)` for cuts `k = 1..L-1`.
pub fn generic_rank_vector(orbitals: usize) -> Vec<usize> {
    (1..orbitals).map(|k| 2 + k.min(orbitals - k)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenericTrial {
    pub trial: usize,
    pub seed: u64,
    pub ranks: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RankDeviation {
    pub trial: usize,
    pub seed: u64,
    /// 1-based cut position.
    pub cut: usize,
    pub rank: usize,
    pub expected: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenericRankReport {
    #[serde(rename = "L")]
    pub orbitals: usize,
    pub seed: u64,
    pub tol: f64,
    /// `2 + min(k, L-k)`.
    pub law: Vec<usize>,
    /// Most frequent rank per cut (smallest on ties).
    pub mode: Vec<usize>,
    /// Per cut, how many trials agree with the law.
    pub agreement: Vec<usize>,
    pub trials: Vec<GenericTrial>,
    /// Disagreements at interior cuts `2..=L-2`.
    pub interior_deviations: Vec<RankDeviation>,
}

/// Unfolding ranks of `trials` Gaussian two-particle states. Trial `t` uses
/// seed [`trial_seed`]`(seed, t)`, so each deviation can be replayed alone.
pub fn generic_rank_law(orbitals: usize, trials: usize, seed: u64, tol: f64) -> Result<GenericRankReport> {
    if orbitals < 2 {
        return Err(Error::Dimension(format!("need at least 2 orbitals, got {orbitals}")));
    }
    fock::check_cap(orbitals)?;
    let rows: Vec<GenericTrial> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = trial_seed(seed, t);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let psi = pair::random_two_particle(orbitals, &mut rng)?;
            Ok(GenericTrial {
                trial: t,
                seed: s,
                ranks: mps::unfolding_ranks(&psi, tol).ranks,
            })
        })
        .collect::<Result<_>>()?;
    let law = generic_rank_vector(orbitals);
    let cuts = orbitals - 1;
    let mut mode = Vec::with_capacity(cuts);
    let mut agreement = Vec::with_capacity(cuts);
    for k in 0..cuts {
        let mut counts = std::collections::BTreeMap::new();
        for row in &rows {
            *counts.entry(row.ranks[k]).or_insert(0usize) += 1;
        }
        let best = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&r, _)| r)
            .unwrap_or(0);
        mode.push(best);
        agreement.push(counts.get(&law[k]).copied().unwrap_or(0));
    }
    let mut interior_deviations = Vec::new();
    for row in &rows {
        for k in 1..cuts.saturating_sub(1) {
            if row.ranks[k] != law[k] {
                log::warn!(
                    "trial {} (seed {}) has rank {} at cut {}, law gives {}",
                    row.trial,
                    row.seed,
                    row.ranks[k],
                    k + 1,
                    law[k]
                );
                interior_deviations.push(RankDeviation {
                    trial: row.trial,
                    seed: row.seed,
                    cut: k + 1,
                    rank: row.ranks[k],
                    expected: law[k],
                });
            }
        }
    }
    Ok(GenericRankReport {
        orbitals,
        seed,
        tol,
        law,
        mode,
        agreement,
        trials: rows,
        interior_deviations,
    })
}

/// Default rank tolerance re-exported for callers of this module.
pub const RANK_TOL: f64 = DEFAULT_RANK_TOL;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ZERO;
    use crate::pair::PairedState;

    #[test]
    fn normal_form_state_cut_three() {
        let lam = [0.7, 0.5, 0.3];
        let psi = PairedState::new(lam.to_vec(), 6).unwrap().to_dense().unwrap();
        let c = AntisymMatrix::from_state(&psi).unwrap();
        let su = structured_unfolding(&c, 3, RANK_TOL).unwrap();
        // the pair (2,3) straddles the cut
        assert_eq!(su.rank_d, 1);
        assert_eq!(su.d[(2, 0)], C64::new(0.5, 0.0));
        // right pairs in order (3,4), (3,5), (4,5)
        assert_eq!(su.v1, vec![ZERO, ZERO, C64::new(0.3, 0.0)]);
        assert_eq!(su.v2[0], C64::new(0.7, 0.0));
        assert!(su.v2[1..].iter().all(|z| *z == ZERO));
        assert_eq!(su.rank, 3);
        let raw = mps::unfolding_ranks(&psi, RANK_TOL).ranks;
        assert_eq!(raw[2], 3);
    }

    #[test]
    fn first_cut_block_is_one_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = AntisymMatrix::random_gaussian(6, &mut rng);
        let su = structured_unfolding(&c, 1, RANK_TOL).unwrap();
        assert_eq!(su.d.nrows(), 1);
        assert!(su.rank_d <= 1);
        assert!(su.v2.is_empty());
    }

    #[test]
    fn reassembly_matches_raw_unfolding() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = AntisymMatrix::random_gaussian(8, &mut rng);
        let psi = c.to_state().unwrap();
        let raw_ranks = mps::unfolding_ranks(&psi, RANK_TOL).ranks;
        for n in 1..8 {
            let su = structured_unfolding(&c, n, RANK_TOL).unwrap();
            assert_eq!(su.assemble(), StructuredUnfolding::raw_block(&psi, n));
            assert_eq!(su.rank, raw_ranks[n - 1]);
        }
        assert!(structured_unfolding(&c, 0, RANK_TOL).is_err());
        assert!(structured_unfolding(&c, 8, RANK_TOL).is_err());
    }

    #[test]
    fn verdict_from_vectors() {
        let v = LowerBoundVerdict::from_ranks(&[2, 2, 3, 2, 3, 2, 2]);
        assert!(v.holds() && v.is_optimal_vector);
        assert_eq!(v.l1, 16);
        let bad = LowerBoundVerdict::from_ranks(&[2, 2, 2, 3, 3, 2, 2]);
        assert!(!bad.consecutive_three);
        assert!(!bad.is_optimal_vector);
        let four = LowerBoundVerdict::from_ranks(&[2, 2, 2]);
        assert!(four.holds() && four.is_optimal_vector && four.l1 == 6);
    }

    #[test]
    fn lower_bound_on_random_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = pair::random_two_particle(8, &mut rng).unwrap();
        let report = verify_lower_bound(&psi, 20, 11, RANK_TOL).unwrap();
        assert_eq!(report.trials.len(), 22);
        assert_eq!(report.violations, 0);
        assert_eq!(report.optimal_l1, 16);
        assert_eq!(report.min_l1, 16);
        assert!(report.minimum_is_optimal_vector);
        assert_eq!(report.trials[0].verdict.ranks, vec![2, 4, 5, 6, 5, 4, 2]);
    }

    #[test]
    fn lower_bound_rejects_deficient_state() {
        let psi = PairedState::new(vec![0.8, 0.0, 0.6], 8).unwrap().to_dense().unwrap();
        assert!(matches!(
            verify_lower_bound(&psi, 2, 0, RANK_TOL),
            Err(Error::DeficientRdm { rank: 4, expected: 8 })
        ));
    }

    #[test]
    fn generic_law_small() {
        let r = generic_rank_law(4, 10, 5, RANK_TOL).unwrap();
        assert_eq!(r.law, vec![3, 4, 3]);
        assert_eq!(r.mode, vec![2, 4, 2]);
        assert!(r.interior_deviations.is_empty());
        let r = generic_rank_law(8, 5, 5, RANK_TOL).unwrap();
        assert_eq!(r.mode.iter().max(), Some(&6));
        // replay one trial from its logged seed
        let t = &r.trials[3];
        let mut rng = ChaCha8Rng::seed_from_u64(t.seed);
        let psi = pair::random_two_particle(8, &mut rng).unwrap();
        assert_eq!(mps::unfolding_ranks(&psi, RANK_TOL).ranks, t.ranks);
    }

    #[test]
    fn report_is_deterministic() {
        let a = generic_rank_law(6, 8, 42, RANK_TOL).unwrap();
        let b = generic_rank_law(6, 8, 42, RANK_TOL).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
