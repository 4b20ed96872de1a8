//! R-matrices: rank-4 tensors `R^{ab}_{cd}` solving the constant Yang-Baxter
//! equation with `R^2 = 1`.
//!
//! Index convention used everywhere in the crate (0-based): the pair `(a, b)`
//! flattens to `a * m + b`, and the m²×m² matrix form has row `(a, b)` and
//! column `(c, d)`, so that `R (v_c ⊗ v_d) = Σ R^{ab}_{cd} v_a ⊗ v_b`.
//! Tensors on n slots are flat vectors with slot 0 most significant.

use std::fmt;

use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{checked_pow, max_abs_diff, real, CMat, C64, ONE, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Builtin {
    Ex1,
    Ex2,
    Ex3,
    Ex4,
    Fermion,
    Boson,
}

impl Builtin {
    pub const ALL: [Builtin; 6] =
        [Builtin::Ex1, Builtin::Ex2, Builtin::Ex3, Builtin::Ex4, Builtin::Fermion, Builtin::Boson];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Ex1 => "ex1",
            Builtin::Ex2 => "ex2",
            Builtin::Ex3 => "ex3",
            Builtin::Ex4 => "ex4",
            Builtin::Fermion => "fermion",
            Builtin::Boson => "boson",
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Builtin::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Invalid(format!("unknown built-in R-matrix '{s}'")))
    }
}

/// Where an R-matrix came from, when it is a (possibly negated) built-in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub kind: Builtin,
    pub negated: bool,
}

#[derive(Clone, Debug)]
pub struct RMatrix {
    m: usize,
    data: Vec<C64>,
    nonzeros: Vec<(usize, usize, C64)>,
    by_column: Vec<Vec<(usize, C64)>>,
    origin: Option<Origin>,
}

impl PartialEq for RMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m && self.data == other.data
    }
}

impl RMatrix {
    /// Build from m⁴ entries in lexicographic `(a, b, c, d)` order.
    pub fn from_entries(m: usize, data: Vec<C64>) -> Result<Self> {
        if m == 0 {
            return Err(Error::Shape("internal dimension must be positive".into()));
        }
        let expected = m.checked_pow(4).ok_or_else(|| Error::Shape("m too large".into()))?;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "expected {expected} entries for m = {m}, got {}",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Shape("non-finite entry".into()));
        }
        let mm = m * m;
        let nonzeros: Vec<(usize, usize, C64)> = data
            .iter()
            .enumerate()
            .filter(|(_, z)| **z != ZERO)
            .map(|(k, z)| (k / mm, k % mm, *z))
            .collect();
        let mut by_column = vec![Vec::new(); mm];
        for &(row, col, val) in &nonzeros {
            by_column[col].push((row, val));
        }
        Ok(RMatrix { m, data, nonzeros, by_column, origin: None })
    }

    pub fn from_fn(m: usize, f: impl Fn(usize, usize, usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(m.pow(4));
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    for d in 0..m {
                        data.push(f(a, b, c, d));
                    }
                }
            }
        }
        Self::from_entries(m, data).expect("from_fn produces a well-shaped tensor")
    }

    pub fn from_matrix(mat: &CMat) -> Result<Self> {
        let mm = mat.nrows();
        let m = (mm as f64).sqrt().round() as usize;
        if m * m != mm || !mat.is_square() {
            return Err(Error::Shape(format!("{}x{} is not m²×m²", mat.nrows(), mat.ncols())));
        }
        let data = (0..mm * mm).map(|k| mat[(k / mm, k % mm)]).collect();
        Self::from_entries(m, data)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn origin(&self) -> Option<Origin> {
        self.origin
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    /// Nonzero entries as `(row, col, value)` of the matrix form.
    pub fn nonzeros(&self) -> &[(usize, usize, C64)] {
        &self.nonzeros
    }

    /// Nonzero `(row, value)` pairs of column `(c, d)` of the matrix form.
    pub fn column(&self, col: usize) -> &[(usize, C64)] {
        &self.by_column[col]
    }

    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> C64 {
        let m = self.m;
        self.data[((a * m + b) * m + c) * m + d]
    }

    pub fn matrix(&self) -> CMat {
        let mm = self.m * self.m;
        CMat::from_row_slice(mm, mm, &self.data)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let mat = self.matrix();
        max_abs_diff(&mat, &mat.adjoint()) <= tol
    }

    /// Hash of `m` and the entries, stable across runs and platforms.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.m as u64).to_le_bytes());
        for z in &self.data {
            // `+ 0.0` folds -0.0 into 0.0
            h.update((z.re + 0.0).to_le_bytes());
            h.update((z.im + 0.0).to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Apply R to slots `j, j+1` of an n-slot tensor.
    pub fn apply_pair(&self, v: &[C64], n: usize, j: usize) -> Vec<C64> {
        let mut out = vec![ZERO; v.len()];
        self.apply_pair_into(v, n, j, &mut out);
        out
    }

    /// `out += R_{j,j+1} v`.
    pub fn apply_pair_into(&self, v: &[C64], n: usize, j: usize, out: &mut [C64]) {
        assert!(j + 1 < n, "pair ({j}, {}) outside {n} slots", j + 1);
        let mm = self.m * self.m;
        let right = self.m.pow((n - j - 2) as u32);
        let left = v.len() / (mm * right);
        debug_assert_eq!(left * mm * right, v.len());
        for l in 0..left {
            let base = l * mm;
            for &(row, col, val) in &self.nonzeros {
                let o = (base + row) * right;
                let i = (base + col) * right;
                for r in 0..right {
                    out[o + r] += val * v[i + r];
                }
            }
        }
    }

    pub fn to_file(&self) -> RMatrixFile {
        RMatrixFile { m: self.m, data: self.data.iter().flat_map(|z| [z.re, z.im]).collect() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("plain data serializes")
    }

    /// Parse the JSON file format; runs [`ybe_check`] unless `validate` is false.
    pub fn from_json_str(s: &str, validate: bool) -> Result<Self> {
        let file: RMatrixFile = serde_json::from_str(s)?;
        let r = file.into_rmatrix()?;
        if validate {
            let report = ybe_check(&r, DEFAULT_YBE_TOL);
            if !report.passed() {
                return Err(Error::Constraint {
                    what: "R-matrix fails the Yang-Baxter check".into(),
                    residuals: vec![report.involution_residual, report.braid_residual],
                });
            }
        }
        Ok(r)
    }
}

/// On-disk form: `{"m": m, "data": [re, im, ...]}` with m⁴ complex entries.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RMatrixFile {
    pub m: usize,
    pub data: Vec<f64>,
}

impl RMatrixFile {
    pub fn into_rmatrix(self) -> Result<RMatrix> {
        if self.data.len() % 2 != 0 {
            return Err(Error::Shape("data must hold (re, im) pairs".into()));
        }
        let data = self.data.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect();
        RMatrix::from_entries(self.m, data)
    }
}

pub const DEFAULT_YBE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct YbeReport {
    pub involutive: bool,
    pub braid: bool,
    pub involution_residual: f64,
    pub braid_residual: f64,
    pub max_residual: f64,
}

impl YbeReport {
    pub fn passed(&self) -> bool {
        self.involutive && self.braid
    }
}

/// Check `M² = I` and `R₁₂R₂₃R₁₂ = R₂₃R₁₂R₂₃` on V⊗V⊗V.
pub fn ybe_check(r: &RMatrix, tol: f64) -> YbeReport {
    let m = r.m();
    let mm = m * m;
    let mut inv = 0.0f64;
    for col in 0..mm {
        let mut e = vec![ZERO; mm];
        e[col] = ONE;
        let w = r.apply_pair(&r.apply_pair(&e, 2, 0), 2, 0);
        for (k, z) in w.iter().enumerate() {
            let target = if k == col { ONE } else { ZERO };
            inv = inv.max((z - target).norm());
        }
    }
    let d3 = mm * m;
    let mut braid = 0.0f64;
    for col in 0..d3 {
        let mut e = vec![ZERO; d3];
        e[col] = ONE;
        let lhs = r.apply_pair(&r.apply_pair(&r.apply_pair(&e, 3, 0), 3, 1), 3, 0);
        let rhs = r.apply_pair(&r.apply_pair(&r.apply_pair(&e, 3, 1), 3, 0), 3, 1);
        for (x, y) in lhs.iter().zip(&rhs) {
            braid = braid.max((x - y).norm());
        }
    }
    YbeReport {
        involutive: inv <= tol,
        braid: braid <= tol,
        involution_residual: inv,
        braid_residual: braid,
        max_residual: inv.max(braid),
    }
}

/// Parameters of the fourth built-in family, `R^{ab}_{cd} = λ_ab c_cd − δ_ac δ_bd`.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaC {
    pub lambda: CMat,
    pub c: CMat,
}

#[derive(Clone, Debug)]
pub struct LambdaCResiduals {
    /// `max |λ c λᵀ cᵀ − I|`
    pub product: f64,
    /// `|Tr(λ cᵀ) − 2|`
    pub trace: f64,
}

impl LambdaC {
    pub fn new(lambda: CMat, c: CMat) -> Result<Self> {
        if !lambda.is_square() || lambda.shape() != c.shape() || lambda.nrows() == 0 {
            return Err(Error::Shape(format!(
                "lambda {:?} and c {:?} must be equal square shapes",
                lambda.shape(),
                c.shape()
            )));
        }
        Ok(LambdaC { lambda, c })
    }

    pub fn m(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn residuals(&self) -> LambdaCResiduals {
        let m = self.m();
        let prod = &self.lambda * &self.c * self.lambda.transpose() * self.c.transpose();
        let product = max_abs_diff(&prod, &CMat::identity(m, m));
        let trace = ((&self.lambda * self.c.transpose()).trace() - real(2.0)).norm();
        LambdaCResiduals { product, trace }
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let res = self.residuals();
        if res.product > tol || res.trace > tol {
            return Err(Error::Constraint {
                what: "lambda c lambda^T c^T = 1 and Tr(lambda c^T) = 2".into(),
                residuals: vec![res.product, res.trace],
            });
        }
        Ok(())
    }

    /// λ and c both Hermitian, which makes the spin-chain model PT symmetric.
    pub fn is_pt_symmetric(&self, tol: f64) -> bool {
        max_abs_diff(&self.lambda, &self.lambda.adjoint()) <= tol
            && max_abs_diff(&self.c, &self.c.adjoint()) <= tol
    }
}

/// Anti-diagonal solution `λ_{a,a'} = 1`, `c_{a,a'} = t_a` with `a' = m−1−a`,
/// `t_a t_{a'} = 1`, `Σ t_a = 2` and `|t_a| = 1`.
pub fn make_lambda_c(m: usize) -> Result<LambdaC> {
    if m < 2 {
        return Err(Error::Constraint {
            what: format!("no lambda/c pair exists for m = {m} (needs t² = 1 and t = 2)"),
            residuals: vec![],
        });
    }
    let pairs = m / 2;
    let mut t = vec![ONE; m];
    // Each pair contributes 2 cos θ, the middle slot (odd m) contributes 1.
    let per_pair = if m % 2 == 1 { 1.0 / pairs as f64 } else { 2.0 / pairs as f64 };
    let theta = (per_pair / 2.0).clamp(-1.0, 1.0).acos();
    for a in 0..pairs {
        t[a] = C64::from_polar(1.0, theta);
        t[m - 1 - a] = C64::from_polar(1.0, -theta);
    }
    let mut lambda = CMat::zeros(m, m);
    let mut c = CMat::zeros(m, m);
    for a in 0..m {
        lambda[(a, m - 1 - a)] = ONE;
        c[(a, m - 1 - a)] = t[a];
    }
    let lc = LambdaC { lambda, c };
    lc.validate(1e-12)?;
    Ok(lc)
}

fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// Built-in R-matrices. `fermion` and `boson` are `∓SWAP`, i.e. `∓1` at m = 1.
/// `ex4` uses `make_lambda_c(m)` when no parameters are given.
pub fn builtin(kind: Builtin, m: usize, params: Option<&LambdaC>) -> Result<RMatrix> {
    if m == 0 {
        return Err(Error::Shape("internal dimension must be positive".into()));
    }
    let mut r = match kind {
        Builtin::Ex1 | Builtin::Fermion => {
            RMatrix::from_fn(m, |a, b, c, d| real(-delta(a, d) * delta(b, c)))
        }
        Builtin::Boson => RMatrix::from_fn(m, |a, b, c, d| real(delta(a, d) * delta(b, c))),
        Builtin::Ex2 => RMatrix::from_fn(m, |a, b, c, d| {
            let sign = if a == b { -1.0 } else { 1.0 };
            real(sign * delta(a, d) * delta(b, c))
        }),
        Builtin::Ex3 => RMatrix::from_fn(m, |a, b, c, d| real(-delta(a, c) * delta(b, d))),
        Builtin::Ex4 => {
            let owned;
            let lc = match params {
                Some(p) => {
                    if p.m() != m {
                        return Err(Error::Shape(format!(
                            "lambda/c are {}x{}, expected m = {m}",
                            p.m(),
                            p.m()
                        )));
                    }
                    p.validate(1e-10)?;
                    p
                }
                None => {
                    owned = make_lambda_c(m)?;
                    &owned
                }
            };
            RMatrix::from_fn(m, |a, b, c, d| {
                lc.lambda[(a, b)] * lc.c[(c, d)] - real(delta(a, c) * delta(b, d))
            })
        }
    };
    r.origin = Some(Origin { kind, negated: false });
    let report = ybe_check(&r, DEFAULT_YBE_TOL);
    if !report.passed() {
        return Err(Error::Constraint {
            what: format!("built-in {kind} fails the Yang-Baxter check"),
            residuals: vec![report.involution_residual, report.braid_residual],
        });
    }
    Ok(r)
}

pub fn negate(r: &RMatrix) -> RMatrix {
    let data = r.data.iter().map(|z| -z).collect();
    let mut out = RMatrix::from_entries(r.m, data).expect("same shape");
    out.origin = r.origin.map(|o| Origin { negated: !o.negated, ..o });
    out
}

/// `(Π⊠R)^{AB}_{CD} = δ_ad δ_bc R^{ij}_{kl}` over `modes` modes, with the
/// collective index `A = a * m + i`.
pub fn direct_product(r: &RMatrix, modes: usize) -> Result<RMatrix> {
    if modes == 0 {
        return Err(Error::Invalid("mode count must be positive".into()));
    }
    if modes == 1 {
        let mut out = r.clone();
        out.origin = r.origin;
        return Ok(out);
    }
    let m = r.m();
    let big = modes * m;
    let mut data = vec![ZERO; big.pow(4)];
    let idx = |a: usize, b: usize, c: usize, d: usize| ((a * big + b) * big + c) * big + d;
    for &(row, col, val) in r.nonzeros() {
        let (i, j) = (row / m, row % m);
        let (k, l) = (col / m, col % m);
        for a in 0..modes {
            for b in 0..modes {
                // d = a, c = b
                data[idx(a * m + i, b * m + j, b * m + k, a * m + l)] = val;
            }
        }
    }
    RMatrix::from_entries(big, data)
}

/// The operators `R_{j,j+1}` on n-fold tensor products.
#[derive(Clone, Debug)]
pub struct SnRep {
    r: RMatrix,
    n: usize,
    dim: usize,
    generators: Vec<CsrMatrix<C64>>,
}

impl SnRep {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rmatrix(&self) -> &RMatrix {
        &self.r
    }

    pub fn generators(&self) -> &[CsrMatrix<C64>] {
        &self.generators
    }

    pub fn generator_dense(&self, j: usize) -> CMat {
        csr_to_dense(&self.generators[j])
    }

    /// Apply the generator acting on slots `j, j+1` to a tensor.
    pub fn apply(&self, j: usize, v: &[C64]) -> Vec<C64> {
        self.r.apply_pair(v, self.n, j)
    }

    /// `ρ(w_1 w_2 … w_k) = R_{w_1} R_{w_2} ⋯ R_{w_k}` applied to `v`.
    pub fn apply_word(&self, word: &[usize], v: &[C64]) -> Vec<C64> {
        word.iter().rev().fold(v.to_vec(), |acc, &j| self.apply(j, &acc))
    }

    /// Dense `ρ(word)`.
    pub fn word_matrix(&self, word: &[usize]) -> CMat {
        let mut out = CMat::zeros(self.dim, self.dim);
        for col in 0..self.dim {
            let mut e = vec![ZERO; self.dim];
            e[col] = ONE;
            let w = self.apply_word(word, &e);
            for (row, z) in w.into_iter().enumerate() {
                out[(row, col)] = z;
            }
        }
        out
    }

    /// Dense `ρ(σ)` via the bubble-sort reduced word of `perm`.
    pub fn permutation_matrix(&self, perm: &[usize]) -> Result<CMat> {
        if perm.len() != self.n {
            return Err(Error::Shape(format!("permutation of {} points on {} slots", perm.len(), self.n)));
        }
        Ok(self.word_matrix(&bubble_sort_word(perm)?))
    }
}

pub fn csr_to_dense(a: &CsrMatrix<C64>) -> CMat {
    let mut out = CMat::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        out[(i, j)] += *v;
    }
    out
}

pub fn sn_generators(r: &RMatrix, n: usize) -> Result<SnRep> {
    if n == 0 {
        return Err(Error::Invalid("particle count must be positive".into()));
    }
    let dim = checked_pow(r.m(), n)?;
    let m = r.m();
    let mm = m * m;
    let mut generators = Vec::with_capacity(n.saturating_sub(1));
    for j in 0..n.saturating_sub(1) {
        let right = m.pow((n - j - 2) as u32);
        let left = dim / (mm * right);
        let mut coo = CooMatrix::new(dim, dim);
        for l in 0..left {
            for &(row, col, val) in r.nonzeros() {
                for x in 0..right {
                    coo.push((l * mm + row) * right + x, (l * mm + col) * right + x, val);
                }
            }
        }
        generators.push(CsrMatrix::from(&coo));
    }
    Ok(SnRep { r: r.clone(), n, dim, generators })
}

/// Reduced word of adjacent transpositions for `perm` (image list, `perm[k]` is
/// where slot k is sent), found by bubble sort. Composition convention: the
/// returned word `w` satisfies `ρ(perm) = R_{w_1} ⋯ R_{w_k}`.
pub fn bubble_sort_word(perm: &[usize]) -> Result<Vec<usize>> {
    let n = perm.len();
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::Invalid(format!("{perm:?} is not a permutation")));
        }
        seen[p] = true;
    }
    let mut work = perm.to_vec();
    let mut swaps = Vec::new();
    for pass in 0..n {
        for k in 0..n.saturating_sub(pass + 1) {
            if work[k] > work[k + 1] {
                work.swap(k, k + 1);
                swaps.push(k);
            }
        }
    }
    // Sorting applied s_{k1}, s_{k2}, ... on the right, so perm = s_{kr} ⋯ s_{k1}.
    swaps.reverse();
    Ok(swaps)
}

/// `P_n = (1/n!) Σ_σ ρ(σ)`, assembled through the coset factorisation
/// `P_n = L_n ⋯ L_2` with `L_k = (1/k)(1 + R_{k-1} + R_{k-2}R_{k-1} + …)`.
pub fn symmetrizer(rep: &SnRep) -> CMat {
    let dim = rep.dim();
    let mut out = CMat::zeros(dim, dim);
    for col in 0..dim {
        let mut e = vec![ZERO; dim];
        e[col] = ONE;
        let v = crate::tensor::symmetrize(rep.rmatrix(), &e, rep.n());
        for (row, z) in v.into_iter().enumerate() {
            out[(row, col)] = z;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_pass_ybe() {
        for kind in Builtin::ALL {
            for m in [1, 2, 3] {
                if kind == Builtin::Ex4 && m == 1 {
                    assert!(builtin(kind, m, None).is_err());
                    continue;
                }
                let r = builtin(kind, m, None).unwrap();
                let rep = ybe_check(&r, 1e-12);
                assert!(rep.passed(), "{kind} m={m}: {rep:?}");
            }
        }
    }

    #[test]
    fn ex1_is_minus_swap() {
        let r = builtin(Builtin::Ex1, 3, None).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    for d in 0..3 {
                        let want = if a == d && b == c { -1.0 } else { 0.0 };
                        assert_eq!(r.get(a, b, c, d), real(want));
                    }
                }
            }
        }
    }

    #[test]
    fn lambda_c_m3_phases() {
        let lc = make_lambda_c(3).unwrap();
        let t: Vec<C64> = (0..3).map(|a| lc.lambda[(a, 2 - a)] * lc.c[(a, 2 - a)]).collect();
        let w = C64::from_polar(1.0, std::f64::consts::FRAC_PI_3);
        assert!((t[0] - w).norm() < 1e-14);
        assert!((t[1] - ONE).norm() < 1e-14);
        assert!((t[2] - w.conj()).norm() < 1e-14);
        assert!(lc.is_pt_symmetric(1e-14));
    }

    #[test]
    fn lambda_c_many_m() {
        for m in 2..=8 {
            let r = make_lambda_c(m).unwrap().residuals();
            assert!(r.product < 1e-12 && r.trace < 1e-12, "m={m}");
        }
    }

    #[test]
    fn perturbed_ex4_not_involutive() {
        let r = builtin(Builtin::Ex4, 3, None).unwrap();
        let mut data = r.entries().to_vec();
        data[5] += real(1e-3);
        let bad = RMatrix::from_entries(3, data).unwrap();
        assert!(!ybe_check(&bad, 1e-10).involutive);
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(RMatrix::from_entries(2, vec![ZERO; 15]), Err(Error::Shape(_))));
        assert!(RMatrix::from_json_str(r#"{"m":1,"data":[1.0]}"#, false).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let r = builtin(Builtin::Ex4, 2, None).unwrap();
        let back = RMatrix::from_json_str(&r.to_json(), true).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.fingerprint(), r.fingerprint());
    }

    #[test]
    fn negate_fermion_is_boson() {
        let f = builtin(Builtin::Fermion, 1, None).unwrap();
        let b = builtin(Builtin::Boson, 1, None).unwrap();
        assert_eq!(negate(&f), b);
        assert_eq!(negate(&f).origin().unwrap().negated, true);
    }

    #[test]
    fn direct_product_of_fermion_is_minus_swap() {
        let f = builtin(Builtin::Fermion, 1, None).unwrap();
        let p = direct_product(&f, 2).unwrap();
        assert_eq!(p, builtin(Builtin::Ex1, 2, None).unwrap());
    }

    #[test]
    fn bubble_sort_word_reproduces_permutation() {
        // Acting on slot labels with the boson SWAP rep must realise the permutation.
        let b = builtin(Builtin::Boson, 3, None).unwrap();
        let rep = sn_generators(&b, 3).unwrap();
        let perm = [2, 0, 1];
        let p = rep.permutation_matrix(&perm).unwrap();
        // e_0 ⊗ e_1 ⊗ e_2 : slot k carries value k; it must land in slot perm[k].
        let col = 0 * 9 + 1 * 3 + 2;
        let mut target = [0usize; 3];
        for k in 0..3 {
            target[perm[k]] = k;
        }
        let row = target[0] * 9 + target[1] * 3 + target[2];
        assert_eq!(p[(row, col)], ONE);
    }
}
