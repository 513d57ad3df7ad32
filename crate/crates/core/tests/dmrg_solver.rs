use bond3::dmrg::{self, DmrgConfig, Method};
use bond3::fcidump::FcidumpData;
use bond3::hamiltonian::TwoBodyHamiltonian;
use bond3::linalg::{self, CMatrix, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Ascending spectrum of `h` restricted to determinants with `n` particles.
fn sector_spectrum(h: &CMatrix, n: usize) -> Vec<f64> {
    let idx: Vec<usize> = (0..h.nrows()).filter(|x| x.count_ones() as usize == n).collect();
    let block = CMatrix::from_fn(idx.len(), idx.len(), |a, b| h[(idx[a], idx[b])]);
    let mut ev: Vec<f64> = block.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[test]
fn full_bond_dimension_reproduces_every_sector() {
    let l = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let h = TwoBodyHamiltonian::random(l, &mut rng).assemble_dense().unwrap();
    for n in 1..l {
        let run = dmrg::dmrg_minimize(&h, &[32; 4], n, &DmrgConfig::default()).unwrap();
        let want = sector_spectrum(&h, n)[0];
        assert!((run.energy - want).abs() < 1e-8, "N={n}: {} vs {want}", run.energy);
        assert!(run.leakage < 1e-6);
    }
}

#[test]
fn excited_levels_at_full_bond_dimension() {
    let l = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let h = TwoBodyHamiltonian::random(l, &mut rng).assemble_dense().unwrap();
    let res = dmrg::excited_levels(&h, &[4; 3], 2, 3, &DmrgConfig::default()).unwrap();
    let want = sector_spectrum(&h, 2);
    for (lvl, w) in res.report.levels.iter().zip(&want) {
        assert!((lvl.energy - w).abs() < 1e-8);
        assert!((lvl.fci - w).abs() < 1e-10);
    }
    assert_eq!(res.report.method, Method::QcDmrg);
}

#[test]
fn bond_dimension_one_is_exact_without_interaction() {
    // with v = 0 the ground state is the determinant of the N lowest orbitals
    let l = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let g = linalg::random_complex_matrix(&mut rng, l, l);
    let h = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    let ham = TwoBodyHamiltonian::new(h.clone(), vec![C64::new(0.0, 0.0); l.pow(4)], 0.3).unwrap();
    let mut orb: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
    orb.sort_by(f64::total_cmp);
    let n = 3;
    let want = 0.3 + orb[..n].iter().sum::<f64>();
    let res = dmrg::mode_optimize(&ham, &[1; 5], n, 1, &DmrgConfig::default()).unwrap();
    assert_eq!(res.report.method, Method::HartreeFock);
    assert!((res.levels[0].energy - want).abs() < 1e-8, "{} vs {want}", res.levels[0].energy);
}

#[test]
fn mode_optimization_history_is_monotone() {
    let l = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let ham = TwoBodyHamiltonian::random(l, &mut rng);
    let res = dmrg::mode_optimize(&ham, &dmrg::theorem1_bond_dims(l), 2, 1, &DmrgConfig::default()).unwrap();
    let hist = &res.levels[0].history;
    let scale = hist[0].abs().max(1.0);
    assert!(hist.windows(2).all(|w| w[1] <= w[0] + 1e-12 * scale));
    let want = sector_spectrum(&ham.assemble_dense().unwrap(), 2)[0];
    assert!((res.levels[0].energy - want).abs() < 1e-8);
}

#[test]
fn fcidump_minimal_basis_two_electrons() {
    // two spatial orbitals, chemist integrals with all 8-fold duplicates omitted
    let text = "&FCI NORB=2,NELEC=2,MS2=0,\n ORBSYM=1,1,\n ISYM=1,\n&END\n\
        0.6746 1 1 1 1\n0.6636 2 2 1 1\n0.1813 2 1 2 1\n0.6975 2 2 2 2\n\
        -1.2528 1 1 0 0\n-0.4756 2 2 0 0\n0.7151 0 0 0 0\n";
    let ham = FcidumpData::parse(text).unwrap().to_hamiltonian().unwrap();
    let h = ham.assemble_dense().unwrap();
    let want = sector_spectrum(&h, 2)[0];
    let res = dmrg::excited_levels(&h, &dmrg::theorem1_bond_dims(4), 2, 1, &DmrgConfig::default()).unwrap();
    assert!((res.report.levels[0].energy - want).abs() < 1e-8);
    // closed shell |1a 1b> energy: 2 h11 + (11|11) + core
    let closed = 2.0 * -1.2528 + 0.6746 + 0.7151;
    assert!(want < closed);
    let det = h[(0b1100, 0b1100)].re;
    assert!((det - closed).abs() < 1e-12);
}
