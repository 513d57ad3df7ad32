use bond3::fock::{self, DenseState};
use bond3::linalg::{self, CMatrix, C64};
use bond3::mps;
use bond3::pair::{self, AntisymMatrix, PairedState, PAIR_TOL};
use bond3::rank;
use nalgebra::Matrix2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two-particle state from its coefficient matrix by direct enumeration of
/// the basis: the amplitude of |..1_i..1_j..> (i < j) is c_ij.
fn state_from_matrix(c: &CMatrix) -> DenseState {
    let l = c.nrows();
    let mut coeffs = vec![C64::new(0.0, 0.0); 1 << l];
    for i in 0..l {
        for j in i + 1..l {
            coeffs[(1 << (l - 1 - i)) | (1 << (l - 1 - j))] = c[(i, j)];
        }
    }
    DenseState::from_coeffs(l, coeffs).unwrap()
}

fn random_antisym(l: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = linalg::random_complex_matrix(&mut rng, l, l);
    &g - g.transpose()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normal_form_reconstructs(l in 2usize..=10, seed in any::<u64>()) {
        let c = random_antisym(l, seed);
        let a = AntisymMatrix::from_full(&c).unwrap();
        let nf = pair::normal_form(&a, PAIR_TOL);
        prop_assert!(linalg::unitarity_defect(&nf.u) < 1e-12);
        prop_assert_eq!(nf.pairs(), l / 2);
        prop_assert!(nf.lambdas.windows(2).all(|w| w[0] >= w[1]));
        let back = nf.reconstruct().unwrap().to_full();
        prop_assert!((back - &c).norm() <= 1e-10 * c.norm());
        // block form: U^dagger c conj(U)
        let blocks = nf.u.adjoint() * &c * nf.u.map(|z| z.conj());
        prop_assert!((blocks - nf.block_form()).norm() <= 1e-10 * c.norm());
    }

    #[test]
    fn pair_amplitudes_are_singular_values(l in 2usize..=9, seed in any::<u64>()) {
        let c = random_antisym(l, seed);
        let nf = pair::normal_form(&AntisymMatrix::from_full(&c).unwrap(), PAIR_TOL);
        let mut sv = linalg::singular_values(&c);
        sv.sort_by(|a, b| b.total_cmp(a));
        for (k, lam) in nf.lambdas.iter().enumerate() {
            prop_assert!((lam - sv[2 * k]).abs() <= 1e-10 * sv[0]);
            prop_assert!((lam - sv[2 * k + 1]).abs() <= 1e-10 * sv[0]);
        }
    }

    #[test]
    fn explicit_mps_of_dense_state(l in 2usize..=10, seed in any::<u64>()) {
        let psi = state_from_matrix(&random_antisym(l, seed)).normalized().unwrap();
        let (m, nf) = pair::build_bd3_from_dense(&psi, PAIR_TOL).unwrap();
        let rebuilt = nf.to_original(&m.to_dense().unwrap()).unwrap();
        prop_assert!(rebuilt.distance(&psi) <= 1e-10);
        let even = l - l % 2;
        let mut want = pair::optimal_bond_dims(even);
        want.resize(l - 1, 1);
        prop_assert_eq!(m.bond_dims(), want);
    }

    #[test]
    fn structured_ranks_equal_svd_ranks(l in 3usize..=9, seed in any::<u64>()) {
        // a rotated paired state with a few vanishing amplitudes exercises all cases
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = l / 2;
        let lam: Vec<f64> = (0..k).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.1..1.0) }).collect();
        prop_assume!(lam.iter().any(|&x| x > 0.0));
        let paired = PairedState::new(lam, l).unwrap().to_dense().unwrap();
        let u = if rng.random_bool(0.5) { CMatrix::identity(l, l) } else { linalg::haar_unitary(&mut rng, l) };
        let psi = fock::rotate_basis(&paired, &u).unwrap();
        let c = AntisymMatrix::from_state(&psi).unwrap();
        let structured = rank::structured_ranks(&c, 1e-10).unwrap();
        prop_assert_eq!(structured, mps::unfolding_ranks(&psi, 1e-10).ranks);
    }

    #[test]
    fn matrix_lemma_against_iterated_product(m in 0usize..=20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<C64> = (0..m).map(|_| linalg::complex_gaussian(&mut rng)).collect();
        let b: Vec<C64> = (0..m).map(|_| linalg::complex_gaussian(&mut rng)).collect();
        let mut prod = Matrix2::<C64>::identity();
        for i in 0..m {
            prod *= Matrix2::new(a[i], b[i], C64::new(0.0, 0.0), a[i]);
        }
        let closed = pair::matrix_lemma_product(&a, &b).unwrap();
        prop_assert!((closed - prod).norm() <= 1e-12 * prod.norm().max(f64::MIN_POSITIVE));
    }

    #[test]
    fn tail_prefixes_agree_bitwise(k in 1usize..=8, extra in 1usize..=4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lam: Vec<f64> = (0..k + extra).map(|_| rng.random_range(-1.0..1.0)).collect();
        let short = pair::build_tail_cores(&lam, 2 * k).unwrap();
        let long = pair::build_tail_cores(&lam, 2 * (k + extra)).unwrap();
        for i in 0..2 * k - 1 {
            let (x, y) = (&short.cores()[i], &long.cores()[i]);
            prop_assert_eq!(x.shape(), y.shape());
            prop_assert!(x.data().iter().zip(y.data()).all(|(p, q)| p.re.to_bits() == q.re.to_bits() && p.im.to_bits() == q.im.to_bits()));
        }
        prop_assert!(short.bond_dims().iter().all(|&d| d <= 3));
    }
}

#[test]
fn paired_state_amplitudes_by_enumeration() {
    let lam = [0.8, 0.5, 0.3];
    let psi = PairedState::new(lam.to_vec(), 7).unwrap().to_dense().unwrap();
    let mut c = CMatrix::zeros(7, 7);
    for (k, &x) in lam.iter().enumerate() {
        c[(2 * k, 2 * k + 1)] = C64::new(x, 0.0);
        c[(2 * k + 1, 2 * k)] = C64::new(-x, 0.0);
    }
    assert!(psi.distance(&state_from_matrix(&c)) < 1e-15);
}

#[test]
fn rotation_acts_as_congruence() {
    let l = 6;
    let c = random_antisym(l, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let u = linalg::haar_unitary(&mut rng, l);
    let rotated = fock::rotate_basis(&state_from_matrix(&c), &u).unwrap();
    let want = u.adjoint() * &c * u.map(|z| z.conj());
    assert!(rotated.distance(&state_from_matrix(&want)) < 1e-12 * c.norm());
}

#[test]
fn slater_pairs_have_rank_two_density() {
    let psi = fock::slater(&[1, 4], 6).unwrap();
    let nf = pair::normal_form(&AntisymMatrix::from_state(&psi).unwrap(), PAIR_TOL);
    assert_eq!(nf.gamma_rank(), 2);
    assert_eq!(fock::rdm(&psi).rank(1e-10), 2);
    assert_eq!(mps::unfolding_ranks(&psi, 1e-10).ranks, vec![1; 5]);
    let paired = nf.to_paired(&psi).unwrap();
    assert_eq!(mps::unfolding_ranks(&paired, 1e-10).ranks, vec![1; 5]);
}
