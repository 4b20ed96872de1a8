use parastat::fockspace::exclusion_statistics;
use parastat::linalg::{max_abs, max_abs_diff, rank, CMat, C64};
use parastat::rmatrix::*;
use parastat::tensor::{symmetrize, symmetrize_appended};
use proptest::prelude::*;

const FINITE: [Builtin; 5] = [Builtin::Ex1, Builtin::Ex2, Builtin::Ex3, Builtin::Ex4, Builtin::Fermion];

fn all_perms(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in all_perms(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// A reduced word found by removing descents in an order driven by `choices`.
fn other_reduced_word(perm: &[usize], choices: &[usize]) -> Vec<usize> {
    let mut work = perm.to_vec();
    let mut swaps = Vec::new();
    let mut c = choices.iter().cycle();
    loop {
        let descents: Vec<usize> = (0..work.len().saturating_sub(1)).filter(|&k| work[k] > work[k + 1]).collect();
        if descents.is_empty() {
            break;
        }
        let k = descents[c.next().copied().unwrap_or(0) % descents.len()];
        work.swap(k, k + 1);
        swaps.push(k);
    }
    swaps.reverse();
    swaps
}

fn inversions(perm: &[usize]) -> usize {
    (0..perm.len()).flat_map(|i| (i + 1..perm.len()).map(move |j| (i, j))).filter(|&(i, j)| perm[i] > perm[j]).count()
}

#[test]
fn symmetrizer_matches_naive_group_average() {
    for kind in Builtin::ALL {
        let r = builtin(kind, 2, None).unwrap();
        for n in 1..=4 {
            let rep = sn_generators(&r, n).unwrap();
            let perms = all_perms(n);
            let mut naive = CMat::zeros(rep.dim(), rep.dim());
            for p in &perms {
                naive += rep.permutation_matrix(p).unwrap();
            }
            naive /= C64::new(perms.len() as f64, 0.0);
            let p = symmetrizer(&rep);
            assert!(max_abs_diff(&p, &naive) < 1e-12, "{kind} n={n}");
            assert!(max_abs_diff(&(&p * &p), &p) < 1e-10, "{kind} n={n}");
        }
    }
}

#[test]
fn symmetrizer_rank_is_nullity_of_stacked_system() {
    for kind in Builtin::ALL {
        for m in [2, 3] {
            let r = builtin(kind, m, None).unwrap();
            for n in 2..=3 {
                let rep = sn_generators(&r, n).unwrap();
                let dim = rep.dim();
                let mut stacked = CMat::zeros(dim * (n - 1), dim);
                for j in 0..n - 1 {
                    let block = CMat::identity(dim, dim) - rep.generator_dense(j);
                    stacked.view_mut((j * dim, 0), (dim, dim)).copy_from(&block);
                }
                let nullity = dim - rank(&stacked, 1e-8, 1.0);
                let p_rank = rank(&symmetrizer(&rep), 1e-8, 1.0);
                assert_eq!(p_rank, nullity, "{kind} m={m} n={n}");
                assert_eq!(p_rank, exclusion_statistics(&r, n).unwrap()[n], "{kind} m={m} n={n}");
            }
        }
    }
}

#[test]
fn spot_examples() {
    let ex3 = builtin(Builtin::Ex3, 2, None).unwrap();
    let g = sn_generators(&ex3, 2).unwrap().generator_dense(0);
    assert_eq!(max_abs_diff(&g, &(-CMat::identity(4, 4))), 0.0);
    let p = symmetrizer(&sn_generators(&builtin(Builtin::Ex3, 5, None).unwrap(), 2).unwrap());
    assert_eq!(max_abs(&p), 0.0);
    let p = symmetrizer(&sn_generators(&builtin(Builtin::Ex1, 3, None).unwrap(), 2).unwrap());
    assert_eq!(rank(&p, 1e-8, 1.0), 3);
    let p = symmetrizer(&sn_generators(&builtin(Builtin::Ex4, 3, None).unwrap(), 1).unwrap());
    assert_eq!(max_abs_diff(&p, &CMat::identity(3, 3)), 0.0);
}

#[test]
fn direct_product_series_is_power() {
    for kind in FINITE {
        let r = builtin(kind, 2, None).unwrap();
        let single = exclusion_statistics(&r, 4).unwrap();
        let prod = direct_product(&r, 2).unwrap();
        assert!(ybe_check(&prod, 1e-12).passed());
        let d = exclusion_statistics(&prod, 4).unwrap();
        for n in 0..=4 {
            let expected: usize = (0..=n).map(|k| single[k] * single[n - k]).sum();
            assert_eq!(d[n], expected, "{kind} n={n}");
        }
    }
}

#[test]
fn json_file_errors() {
    assert!(RMatrix::from_json_str(r#"{"m": 2, "data": [1.0]}"#, false).is_err());
    assert!(RMatrix::from_json_str(r#"{"m": 1, "data": [1.0, 0.0]}"#, true).is_ok());
    assert!(RMatrix::from_json_str(r#"{"m": 1, "data": [0.5, 0.0]}"#, true).is_err());
    assert!(RMatrix::from_json_str("not json", false).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reduced_words_agree(
        kind in 0usize..5,
        m in 2usize..4,
        perm in Just((0..4).collect::<Vec<usize>>()).prop_shuffle(),
        choices in proptest::collection::vec(0usize..6, 1..8),
    ) {
        let r = builtin(FINITE[kind], m, None).unwrap();
        let rep = sn_generators(&r, 4).unwrap();
        let word = other_reduced_word(&perm, &choices);
        prop_assert_eq!(word.len(), inversions(&perm));
        let a = rep.permutation_matrix(&perm).unwrap();
        let b = rep.word_matrix(&word);
        prop_assert!(max_abs_diff(&a, &b) < 1e-10);
    }

    #[test]
    fn symmetrized_tensors_are_invariant(
        kind in 0usize..5,
        m in 2usize..4,
        re in proptest::collection::vec(-1.0f64..1.0, 27),
        im in proptest::collection::vec(-1.0f64..1.0, 27),
    ) {
        let r = builtin(FINITE[kind], m, None).unwrap();
        let n = 3;
        let len = m.pow(n as u32);
        let v: Vec<C64> = re.iter().zip(&im).take(len).map(|(&a, &b)| C64::new(a, b)).collect();
        let p = symmetrize(&r, &v, n);
        for j in 0..n - 1 {
            let q = r.apply_pair(&p, n, j);
            prop_assert!(q.iter().zip(&p).all(|(x, y)| (x - y).norm() < 1e-12));
        }
        // symmetric on the first two slots already: one appended level suffices
        let mut head = v.clone();
        for k in 0..m {
            let slice: Vec<C64> = (0..m * m).map(|ab| v[ab * m + k]).collect();
            let s = symmetrize(&r, &slice, 2);
            for (ab, z) in s.into_iter().enumerate() {
                head[ab * m + k] = z;
            }
        }
        let full = symmetrize(&r, &head, n);
        let appended = symmetrize_appended(&r, &head, n);
        prop_assert!(full.iter().zip(&appended).all(|(x, y)| (x - y).norm() < 1e-12));
    }

    #[test]
    fn lambda_c_constraints_hold(m in 2usize..9) {
        let lc = make_lambda_c(m).unwrap();
        let res = lc.residuals();
        prop_assert!(lc.validate(1e-12).is_ok(), "{:?}", res);
        let r = builtin(Builtin::Ex4, m, Some(&lc)).unwrap();
        prop_assert!(ybe_check(&r, 1e-12).passed());
        prop_assert!(ybe_check(&negate(&r), 1e-12).passed());
    }

    #[test]
    fn negate_twice_is_identity(kind in 0usize..5, m in 2usize..5) {
        let r = builtin(FINITE[kind], m, None).unwrap();
        let back = negate(&negate(&r));
        prop_assert_eq!(back.fingerprint(), r.fingerprint());
        prop_assert_eq!(back.origin(), r.origin());
    }
}
