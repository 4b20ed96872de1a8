use parastat::bilinears::*;
use parastat::fockspace::{build_multimode, full_gram_matrix, FockOperators};
use parastat::linalg::{eigenvalues, max_abs};
use parastat::rmatrix::{builtin, Builtin};
use proptest::prelude::*;

fn setup(kind: Builtin, m: usize, modes: usize) -> (FockOperators, BilinearSet) {
    let r = builtin(kind, m, None).unwrap();
    let ops = FockOperators::new(build_multimode(&r, modes, None).unwrap());
    let bil = build_bilinears(&ops);
    (ops, bil)
}

/// Eigenvalues rounded to integers with multiplicities.
fn integer_spectrum(m: &parastat::linalg::CMat) -> Vec<(i64, usize)> {
    let mut out: Vec<(i64, usize)> = Vec::new();
    for z in eigenvalues(m).unwrap() {
        let k = z.re.round();
        assert!((z.re - k).abs() < 1e-9 && z.im.abs() < 1e-9, "{z}");
        match out.last_mut() {
            Some((v, c)) if *v == k as i64 => *c += 1,
            _ => out.push((k as i64, 1)),
        }
    }
    out
}

#[test]
fn gl_n_ex3_three_modes() {
    let (ops, bil) = setup(Builtin::Ex3, 2, 3);
    assert!(!ops.basis.truncated());
    let rep = verify_gl_n(&bil);
    assert!(rep.max_residual < 1e-10, "{rep:?}");
    let ladder = verify_ladder(&ops, &bil);
    assert!(ladder.max_residual() < 1e-10, "{ladder:?}");
}

#[test]
fn gl_n_ex4_two_modes() {
    let (ops, bil) = setup(Builtin::Ex4, 3, 2);
    assert!(verify_gl_n(&bil).max_residual < 1e-10);
    assert!(verify_ladder(&ops, &bil).max_residual() < 1e-10);
}

#[test]
fn number_spectra() {
    let (_, bil) = setup(Builtin::Fermion, 1, 2);
    assert_eq!(integer_spectrum(bil.number(0)), vec![(0, 2), (1, 2)]);

    // n̂_1 = 1 on (1,0) and (1,1): m + m·m states
    let (_, bil) = setup(Builtin::Ex3, 2, 2);
    assert_eq!(integer_spectrum(bil.number(0)), vec![(0, 3), (1, 6)]);

    let (_, bil) = setup(Builtin::Ex4, 3, 1);
    assert_eq!(integer_spectrum(bil.total_number()), vec![(0, 1), (1, 3), (2, 1)]);
}

#[test]
fn disjoint_polynomials_commute() {
    let (_, bil) = setup(Builtin::Ex3, 2, 3);
    let mono = parastat::linalg::commutator(bil.number(0), bil.number(1));
    assert_eq!(max_abs(&mono), 0.0);
    let rep = locality_check(&bil, &[0], &[1, 2], 2, 4, 11).unwrap();
    assert!(rep.max_residual < 1e-10, "{rep:?}");
    assert_eq!(rep.seed, 11);
}

#[test]
fn hermitian_builtins_have_adjoint_pairs() {
    for (kind, m) in [(Builtin::Ex1, 2), (Builtin::Ex2, 2), (Builtin::Ex3, 2), (Builtin::Fermion, 1)] {
        let r = builtin(kind, m, None).unwrap();
        assert!(r.is_hermitian(1e-14));
        let ops = FockOperators::new(build_multimode(&r, 2, None).unwrap());
        let bil = build_bilinears(&ops);
        let gram = full_gram_matrix(&ops.basis).unwrap();
        assert!(adjointness_residual(&bil, &gram) < 1e-10, "{kind}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn locality_holds_for_any_seed(seed in any::<u64>()) {
        let (_, bil) = setup(Builtin::Ex1, 2, 2);
        let rep = locality_check(&bil, &[1], &[0], 3, 2, seed).unwrap();
        prop_assert!(rep.max_residual < 1e-10);
    }
}
