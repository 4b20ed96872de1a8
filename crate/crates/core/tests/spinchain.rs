use parastat::linalg::{max_abs, C64};
use parastat::rmatrix::{builtin, make_lambda_c, Builtin, RMatrix};
use parastat::spinchain::*;
use proptest::prelude::*;

fn local(kind: Builtin, m: usize) -> (RMatrix, LocalOps) {
    let r = builtin(kind, m, None).unwrap();
    let ops = build_local_ops(&r).unwrap();
    (r, ops)
}

#[test]
fn local_algebra_for_every_finite_builtin() {
    for (kind, m) in [
        (Builtin::Ex1, 2),
        (Builtin::Ex2, 2),
        (Builtin::Ex3, 3),
        (Builtin::Ex4, 3),
        (Builtin::Ex4, 4),
        (Builtin::Fermion, 1),
    ] {
        let (_, ops) = local(kind, m);
        let rep = local_algebra(&ops);
        assert!(rep.max_residual() < 1e-10, "{kind} m={m}: {rep:?}");
        let cross = crossing_relations(&ops);
        assert!(cross.max_residual() < 1e-10, "{kind} m={m}: {cross:?}");
        assert!(cross_site_commutator(&ops, 2).unwrap() == 0.0);
    }
}

#[test]
fn local_dimensions() {
    assert_eq!(local(Builtin::Ex3, 4).1.dim(), 5);
    assert_eq!(local(Builtin::Ex4, 3).1.dim(), 5);
    assert_eq!(local(Builtin::Fermion, 1).1.dim(), 2);
}

#[test]
fn ex4_local_matrices_follow_lambda_and_c() {
    let m = 3;
    let lc = make_lambda_c(m).unwrap();
    let r = builtin(Builtin::Ex4, m, Some(&lc)).unwrap();
    let ops = build_local_ops(&r).unwrap();
    // basis: |0⟩, |1,j⟩ (rows 1..=m, ordered by j), |2⟩ (row m+1)
    let top = m + 1;
    // y⁺_i|1,j⟩ ∝ c_ij|2⟩ and x⁺_i|1,j⟩ ∝ c_ji|2⟩ with one common scale
    let scale = ops.y_plus[0][(top, 1 + m - 1)] / lc.c[(0, m - 1)];
    for i in 0..m {
        for j in 0..m {
            let y = ops.y_plus[i][(top, 1 + j)];
            let x = ops.x_plus[i][(top, 1 + j)];
            assert!((y - scale * lc.c[(i, j)]).norm() < 1e-12, "y({i},{j})");
            assert!((x - scale * lc.c[(j, i)]).norm() < 1e-12, "x({i},{j})");
            let yd = ops.y_minus[i][(1 + j, top)];
            let xd = ops.x_minus[i][(1 + j, top)];
            assert!((yd - lc.lambda[(i, j)] / scale).norm() < 1e-12);
            assert!((xd - lc.lambda[(j, i)] / scale).norm() < 1e-12);
        }
    }
}

#[test]
fn fermion_strings_are_jordan_wigner() {
    let (_, ops) = local(Builtin::Fermion, 1);
    // S = T = diag(1, −1) in the (|0⟩, |1⟩) basis
    for op in [ops.s(0, 0), ops.t(0, 0)] {
        assert!((op[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-14);
        assert!((op[(1, 1)] + C64::new(1.0, 0.0)).norm() < 1e-14);
    }
    let spec = SpinChainSpec::uniform(2, 0.7, 0.0).unwrap();
    let chain = build_chain(&spec, &ops).unwrap();
    let ev = exact_diagonalize(&chain.h_spin).unwrap();
    let expect = [-0.7, 0.0, 0.0, 0.7];
    for (z, e) in ev.iter().zip(expect) {
        assert!((z - C64::new(e, 0.0)).norm() < 1e-12);
    }
}

#[test]
fn single_site_hamiltonian_is_chemical_potential() {
    let (r, ops) = local(Builtin::Ex4, 3);
    let spec = SpinChainSpec::new(1, vec![], vec![0.4]).unwrap();
    let chain = build_chain(&spec, &ops).unwrap();
    let expect = &ops.n_local * C64::new(-0.4, 0.0);
    assert!(max_abs(&(dense(&chain.h_spin) - &expect)) < 1e-14);
    assert!(max_abs(&(dense(&chain.h_para) - &expect)) < 1e-12);
    assert!(verify_mpo_crs(&chain, &r).unwrap().max_residual() < 1e-12);
    // a single-site string is the local operator itself
    assert!(max_abs(&(dense(chain.psi_plus(0, 1)) - &ops.y_plus[1])) == 0.0);
}

#[test]
fn chain_identities() {
    for (kind, m, sites) in [(Builtin::Fermion, 1, 4), (Builtin::Ex3, 2, 3), (Builtin::Ex4, 3, 3), (Builtin::Ex1, 2, 2)] {
        let (r, ops) = local(kind, m);
        let spec = SpinChainSpec::new(sites, vec![0.9, -0.6, 0.35][..sites - 1].to_vec(), vec![0.2, -0.3, 0.5, 0.1][..sites].to_vec()).unwrap();
        let chain = build_chain(&spec, &ops).unwrap();
        assert!(csr_max_abs_diff(&chain.h_spin, &chain.h_para) < 1e-10, "{kind}");
        let cr = verify_mpo_crs(&chain, &r).unwrap();
        assert!(cr.max_residual() < 1e-10, "{kind}: {cr:?}");
        let charge = charge_conservation(&chain);
        assert!(charge.hamiltonian < 1e-12 && charge.ladder < 1e-12, "{kind}: {charge:?}");
        let spectrum = spectrum_crosscheck(&chain, &ops).unwrap();
        assert!(spectrum.multiset_match, "{kind}: gap {}", spectrum.max_eigenvalue_gap);
    }
}

#[test]
fn ex3_two_sites_prediction() {
    let (_, ops) = local(Builtin::Ex3, 2);
    let chain = build_chain(&SpinChainSpec::uniform(2, 1.0, 0.0).unwrap(), &ops).unwrap();
    let rep = spectrum_crosscheck(&chain, &ops).unwrap();
    let expect = [-1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0];
    assert_eq!(rep.predicted.len(), 9);
    for (p, e) in rep.predicted.iter().zip(expect) {
        assert!((p - e).abs() < 1e-14);
    }
    assert!(rep.multiset_match);
}

#[test]
fn thermal_occupations() {
    for (kind, m) in [(Builtin::Fermion, 1), (Builtin::Ex3, 2), (Builtin::Ex4, 3)] {
        let (_, ops) = local(kind, m);
        let chain = build_chain(&SpinChainSpec::new(2, vec![0.8], vec![0.1, -0.2]).unwrap(), &ops).unwrap();
        for beta in [0.0, 1.0, 4.0] {
            let rep = thermal_crosscheck(&chain, &ops, beta).unwrap();
            assert!(rep.max_error() < 1e-10, "{kind} beta={beta}: {rep:?}");
        }
    }
}

#[test]
fn ex4_spectrum_is_real() {
    let (_, ops) = local(Builtin::Ex4, 3);
    let rep = pt_reality(&ops, 3, 3, 5).unwrap();
    assert!(rep.max_relative_imag < 1e-8, "{rep:?}");
}

#[test]
fn out_of_range_site() {
    let (_, ops) = local(Builtin::Ex3, 2);
    let spec = SpinChainSpec::uniform(2, 1.0, 0.0).unwrap();
    assert!(mpo_jwt(&spec, &ops, 2, 0, true).is_err());
    assert!(mpo_jwt(&spec, &ops, 1, 2, false).is_err());
    assert!(mpo_jwt(&spec, &ops, 1, 1, false).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_ex3_chains_factorize(j0 in -1.0f64..1.0, j1 in -1.0f64..1.0, mu in proptest::collection::vec(-1.0f64..1.0, 3)) {
        let (_, ops) = local(Builtin::Ex3, 2);
        let spec = SpinChainSpec::new(3, vec![j0, j1], mu).unwrap();
        let chain = build_chain(&spec, &ops).unwrap();
        prop_assert!(csr_max_abs_diff(&chain.h_spin, &chain.h_para) < 1e-10);
        prop_assert!(spectrum_crosscheck(&chain, &ops).unwrap().multiset_match);
    }
}
