//! Small dense helpers shared by the modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Default cap on any matrix dimension, overridable via `PARASTAT_BUDGET_DIM`.
pub const DEFAULT_BUDGET_DIM: usize = 20_000;

pub fn budget_dim() -> usize {
    std::env::var("PARASTAT_BUDGET_DIM")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_BUDGET_DIM)
}

pub fn check_budget(dim: usize) -> Result<()> {
    let budget = budget_dim();
    if dim > budget {
        Err(Error::Resource { dim, budget })
    } else {
        Ok(())
    }
}

/// `base^exp`, or a resource error when it overflows or exceeds the budget.
pub fn checked_pow(base: usize, exp: usize) -> Result<usize> {
    let budget = budget_dim();
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base).ok_or(Error::Resource { dim: usize::MAX, budget })?;
        if acc > budget {
            return Err(Error::Resource { dim: acc, budget });
        }
    }
    Ok(acc)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    m.is_square() && hermitian_deviation(m) <= tol
}

pub fn hermitian_deviation(m: &CMat) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

/// Singular values sorted descending.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank: singular values above `rel_tol * max(σ_max, scale)`.
/// Without the `scale` floor a numerically zero matrix would count its
/// round-off as rank; projectors use `scale = 1`.
pub fn rank(m: &CMat, rel_tol: f64, scale: f64) -> usize {
    let s = singular_values(m);
    let top = s.first().copied().unwrap_or(0.0).max(scale);
    if top <= f64::MIN_POSITIVE {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * top).count()
}

/// Orthonormal basis of the column space by Gram-Schmidt with column
/// pivoting and one reorthogonalization pass. A direction is kept while the
/// largest remaining residual norm exceeds `rel_tol * max(largest column
/// norm, scale)`. `scale` guards against promoting pure round-off when the
/// whole matrix is numerically zero.
///
/// nalgebra's complex SVD can return inaccurate left vectors for tall
/// matrices, so it is not used here.
pub fn range_basis(m: &CMat, rel_tol: f64, scale: f64) -> CMat {
    let rows = m.nrows();
    let mut residual: Vec<DVector<C64>> = m.column_iter().map(|c| c.into_owned()).collect();
    let top = residual.iter().map(|c| c.norm()).fold(0.0, f64::max).max(scale);
    let cut = rel_tol * top;
    let mut basis: Vec<DVector<C64>> = Vec::new();
    while basis.len() < rows {
        let Some((pick, norm)) = residual
            .iter()
            .map(|c| c.norm())
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        else {
            break;
        };
        if norm <= cut || norm <= f64::MIN_POSITIVE {
            break;
        }
        let mut q = residual.swap_remove(pick);
        for _ in 0..2 {
            for b in &basis {
                let overlap = b.dotc(&q);
                q.axpy(-overlap, b, ONE);
            }
        }
        let qn = q.norm();
        if qn <= cut {
            continue;
        }
        q.unscale_mut(qn);
        for c in residual.iter_mut() {
            let overlap = q.dotc(c);
            c.axpy(-overlap, &q, ONE);
        }
        basis.push(q);
    }
    let mut out = CMat::zeros(rows, basis.len());
    for (k, b) in basis.iter().enumerate() {
        out.set_column(k, b);
    }
    out
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
/// Ties are broken by the solver's output order, which is deterministic.
pub fn hermitian_eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vecs)
}

/// All eigenvalues sorted by real part (then imaginary part).
/// Hermitian input goes through the symmetric solver; anything else through
/// faer's general eigensolver (nalgebra's complex Schur can stall on these).
pub fn eigenvalues(m: &CMat) -> Result<Vec<C64>> {
    if !m.is_square() {
        return Err(Error::Shape(format!("eigenvalues of a {}x{} matrix", m.nrows(), m.ncols())));
    }
    let scale = max_abs(m).max(1.0);
    let mut vals: Vec<C64> = if hermitian_deviation(m) <= 1e-13 * scale {
        let herm = (m + m.adjoint()).scale(0.5);
        hermitian_eigh(&herm).0.into_iter().map(|x| C64::new(x, 0.0)).collect()
    } else {
        let n = m.nrows();
        let fm = faer::Mat::<faer::c64>::from_fn(n, n, |i, j| {
            let z = m[(i, j)];
            faer::c64::new(z.re, z.im)
        });
        fm.eigenvalues()
            .map_err(|e| Error::Unsupported(format!("eigenvalue iteration did not converge: {e:?}")))?
            .into_iter()
            .map(|z| C64::new(z.re, z.im))
            .collect()
    };
    vals.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(vals)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}
