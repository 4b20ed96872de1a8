//! Contracted bilinears `ê_ab = Σ_i ψ⁺_{a,i} ψ⁻_{b,i}` on a multi-mode Fock
//! space, and checks of the gl_N structure they generate. Mode indices are
//! 0-based.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fockspace::{max_abs_on_columns, FockOperators};
use crate::linalg::{commutator, max_abs, max_abs_diff, CMat, C64};

#[derive(Clone, Debug)]
pub struct BilinearSet {
    modes: usize,
    /// `ê_ab` at `a * modes + b`.
    matrices: Vec<CMat>,
    total_number: CMat,
}

impl BilinearSet {
    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn e(&self, a: usize, b: usize) -> &CMat {
        &self.matrices[a * self.modes + b]
    }

    pub fn number(&self, a: usize) -> &CMat {
        self.e(a, a)
    }

    pub fn total_number(&self) -> &CMat {
        &self.total_number
    }

    pub fn dim(&self) -> usize {
        self.total_number.nrows()
    }

    fn check_modes(&self, set: &[usize]) -> Result<()> {
        match set.iter().find(|&&a| a >= self.modes) {
            Some(a) => Err(Error::Index(format!("mode {a} out of range for {} modes", self.modes))),
            None => Ok(()),
        }
    }
}

pub fn build_bilinears(ops: &FockOperators) -> BilinearSet {
    let modes = ops.basis.modes();
    let m = ops.basis.internal_dim();
    let dim = ops.dim();
    let matrices: Vec<CMat> = (0..modes * modes)
        .into_par_iter()
        .map(|k| {
            let (a, b) = (k / modes, k % modes);
            let mut e = CMat::zeros(dim, dim);
            for i in 0..m {
                e += ops.plus(a, i) * ops.minus(b, i);
            }
            e
        })
        .collect();
    let mut total_number = CMat::zeros(dim, dim);
    for a in 0..modes {
        total_number += &matrices[a * modes + a];
    }
    BilinearSet { modes, matrices, total_number }
}

#[derive(Clone, Debug, Serialize)]
pub struct GlReport {
    pub max_residual: f64,
    /// `(a, b, c, d)` of the worst commutator.
    pub worst: (usize, usize, usize, usize),
}

/// `[ê_ab, ê_cd] = δ_bc ê_ad − δ_ad ê_cb` for all index quadruples.
pub fn verify_gl_n(bil: &BilinearSet) -> GlReport {
    let n = bil.modes;
    let (max_residual, worst) = (0..n.pow(4))
        .into_par_iter()
        .map(|k| {
            let (a, b, c, d) = (k / n.pow(3), (k / n.pow(2)) % n, (k / n) % n, k % n);
            let mut res = commutator(bil.e(a, b), bil.e(c, d));
            if b == c {
                res -= bil.e(a, d);
            }
            if a == d {
                res += bil.e(c, b);
            }
            (max_abs(&res), (a, b, c, d))
        })
        .reduce(|| (0.0, (0, 0, 0, 0)), |x, y| if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x });
    GlReport { max_residual, worst }
}

#[derive(Clone, Debug, Serialize)]
pub struct LadderReport {
    /// `[ê_ab, ψ⁺_{c,j}] − δ_bc ψ⁺_{a,j}`
    pub raise: f64,
    /// `[ê_ab, ψ⁻_{c,j}] + δ_ac ψ⁻_{b,j}`
    pub lower: f64,
    /// `[n̂, ψ±] ∓ ψ±`
    pub total_number: f64,
    /// Columns left out because the truncated tower cuts the product.
    pub truncated: bool,
}

impl LadderReport {
    pub fn max_residual(&self) -> f64 {
        self.raise.max(self.lower).max(self.total_number)
    }
}

/// Commutators of the bilinears with the single-particle operators. On a
/// truncated space only columns with headroom for one extra particle count.
pub fn verify_ladder(ops: &FockOperators, bil: &BilinearSet) -> LadderReport {
    let n = bil.modes;
    let m = ops.basis.internal_dim();
    let cols = ops.safe_columns(1);
    let mut report = LadderReport { raise: 0.0, lower: 0.0, total_number: 0.0, truncated: ops.basis.truncated() };
    for c in 0..n {
        for j in 0..m {
            let (p, q) = (ops.plus(c, j), ops.minus(c, j));
            for a in 0..n {
                for b in 0..n {
                    let mut up = commutator(bil.e(a, b), p);
                    if b == c {
                        up -= ops.plus(a, j);
                    }
                    report.raise = report.raise.max(max_abs_on_columns(&up, &cols));
                    let mut down = commutator(bil.e(a, b), q);
                    if a == c {
                        down += ops.minus(b, j);
                    }
                    report.lower = report.lower.max(max_abs_on_columns(&down, &cols));
                }
            }
            let up = commutator(bil.total_number(), p) - p;
            let down = commutator(bil.total_number(), q) + q;
            report.total_number =
                report.total_number.max(max_abs_on_columns(&up, &cols)).max(max_abs_on_columns(&down, &cols));
        }
    }
    report
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalityReport {
    pub max_residual: f64,
    pub seed: u64,
    pub degree: usize,
    pub terms: usize,
}

/// A random polynomial in `{ê_ab : a, b ∈ set}`: `terms` monomials of degree
/// 1..=degree with complex Gaussian-like coefficients.
fn random_polynomial(bil: &BilinearSet, set: &[usize], degree: usize, terms: usize, rng: &mut ChaCha8Rng) -> CMat {
    let dim = bil.dim();
    let mut out = CMat::zeros(dim, dim);
    for _ in 0..terms {
        let deg = rng.gen_range(1..=degree.max(1));
        let mut mono = CMat::identity(dim, dim);
        for _ in 0..deg {
            let a = set[rng.gen_range(0..set.len())];
            let b = set[rng.gen_range(0..set.len())];
            mono = mono * bil.e(a, b);
        }
        let coeff = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        out += mono * coeff;
    }
    out
}

/// Commutators of random polynomials supported on two disjoint mode sets.
pub fn locality_check(
    bil: &BilinearSet,
    s1: &[usize],
    s2: &[usize],
    degree: usize,
    trials: usize,
    seed: u64,
) -> Result<LocalityReport> {
    bil.check_modes(s1)?;
    bil.check_modes(s2)?;
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::Invalid("locality check needs two non-empty mode sets".into()));
    }
    let a: BTreeSet<_> = s1.iter().collect();
    if s2.iter().any(|x| a.contains(x)) {
        return Err(Error::Invalid(format!("mode sets {s1:?} and {s2:?} overlap")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms = 3;
    let mut max_residual: f64 = 0.0;
    for _ in 0..trials {
        let p = random_polynomial(bil, s1, degree, terms, &mut rng);
        let q = random_polynomial(bil, s2, degree, terms, &mut rng);
        max_residual = max_residual.max(max_abs(&commutator(&p, &q)));
    }
    Ok(LocalityReport { max_residual, seed, degree, terms })
}

/// `max |ê_ab† G − G ê_ba|` over all pairs, where `G` is the Gram matrix of the
/// basis. Zero means `ê_ba` is the adjoint of `ê_ab` in the Fock inner product.
pub fn adjointness_residual(bil: &BilinearSet, gram: &CMat) -> f64 {
    let n = bil.modes;
    (0..n * n)
        .map(|k| {
            let (a, b) = (k / n, k % n);
            max_abs_diff(&(bil.e(a, b).adjoint() * gram), &(gram * bil.e(b, a)))
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::build_multimode;
    use crate::rmatrix::{builtin, Builtin};

    fn bilinears(kind: Builtin, m: usize, modes: usize) -> (FockOperators, BilinearSet) {
        let r = builtin(kind, m, None).unwrap();
        let ops = FockOperators::new(build_multimode(&r, modes, None).unwrap());
        let bil = build_bilinears(&ops);
        (ops, bil)
    }

    #[test]
    fn fermion_number_ops_are_projectors() {
        let (_, bil) = bilinears(Builtin::Fermion, 1, 2);
        for a in 0..2 {
            let n = bil.number(a);
            assert!(max_abs_diff(&(n * n), n) < 1e-14);
        }
        assert!(verify_gl_n(&bil).max_residual < 1e-14);
    }

    #[test]
    fn single_mode_gl1_is_trivial() {
        let (_, bil) = bilinears(Builtin::Ex4, 3, 1);
        assert_eq!(verify_gl_n(&bil).max_residual, 0.0);
    }

    #[test]
    fn overlapping_sets_rejected() {
        let (_, bil) = bilinears(Builtin::Ex3, 2, 2);
        assert!(locality_check(&bil, &[0], &[0, 1], 2, 1, 7).is_err());
        assert!(locality_check(&bil, &[0], &[2], 2, 1, 7).is_err());
        assert!(locality_check(&bil, &[0], &[1], 1, 2, 7).unwrap().max_residual < 1e-12);
    }
}
