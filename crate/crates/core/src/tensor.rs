//! Tensor-level kernels on flat n-slot coefficient vectors (slot 0 most
//! significant). These implement the symmetrizer by coset recursion and the
//! normal-ordering recursions used for annihilation operators.

use std::collections::HashMap;

use crate::linalg::{C64, ZERO};
use crate::rmatrix::RMatrix;

/// Sparse tensor: `(flat index, value)` sorted by index.
pub type Sparse = Vec<(usize, C64)>;

/// `L_k` on the first k slots of an n-slot tensor:
/// `(1/k)(v + R_{k-2} v + R_{k-3} R_{k-2} v + … )` with 0-based pair indices.
pub fn symmetrize_level(r: &RMatrix, v: &[C64], n: usize, k: usize) -> Vec<C64> {
    let mut acc = v.to_vec();
    let mut w = v.to_vec();
    for j in (0..k.saturating_sub(1)).rev() {
        w = r.apply_pair(&w, n, j);
        for (a, x) in acc.iter_mut().zip(&w) {
            *a += x;
        }
    }
    let s = 1.0 / k as f64;
    acc.iter_mut().for_each(|a| *a *= s);
    acc
}

/// Full symmetrizer `P_n v`.
pub fn symmetrize(r: &RMatrix, v: &[C64], n: usize) -> Vec<C64> {
    let mut out = v.to_vec();
    for k in 2..=n {
        out = symmetrize_level(r, &out, n, k);
    }
    out
}

/// `P_n v` for `v` already R-symmetric on its first n−1 slots.
pub fn symmetrize_appended(r: &RMatrix, v: &[C64], n: usize) -> Vec<C64> {
    if n < 2 {
        return v.to_vec();
    }
    symmetrize_level(r, v, n, n)
}

/// `P_n v` for `v` already R-symmetric on its last n−1 slots:
/// `(1/n)(v + R_0 v + R_1 R_0 v + …)`.
pub fn symmetrize_prepended(r: &RMatrix, v: &[C64], n: usize) -> Vec<C64> {
    let mut acc = v.to_vec();
    let mut w = v.to_vec();
    for j in 0..n.saturating_sub(1) {
        w = r.apply_pair(&w, n, j);
        for (a, x) in acc.iter_mut().zip(&w) {
            *a += x;
        }
    }
    let s = 1.0 / n.max(1) as f64;
    acc.iter_mut().for_each(|a| *a *= s);
    acc
}

/// `e_a ⊗ v` for an n-slot tensor `v` over dimension `dim`.
pub fn prepend(a: usize, v: &[C64], dim: usize) -> Vec<C64> {
    let mut out = vec![ZERO; v.len() * dim];
    out[a * v.len()..(a + 1) * v.len()].copy_from_slice(v);
    out
}

/// `v ⊗ e_a`.
pub fn append(v: &[C64], a: usize, dim: usize) -> Vec<C64> {
    let mut out = vec![ZERO; v.len() * dim];
    for (k, z) in v.iter().enumerate() {
        out[k * dim + a] = *z;
    }
    out
}

/// Annihilation from the left on an n-slot tensor `psi`. Returns the tensor
/// `F[A, rest]` (n slots, first slot the annihilated index) such that
/// `ψ⁻_A Σ psi[B…] ψ⁺_{B1}⋯ψ⁺_{Bn}|0⟩ = Σ F[A, rest] ψ⁺_{rest}|0⟩`.
/// Recursion: `F_n = psi + R_{0,1} (stack_B F_{n-1}(psi[B, ·]))`, `F_1 = psi`.
pub fn annihilate_left(r: &RMatrix, psi: &[C64], n: usize) -> Vec<C64> {
    let dim = r.m();
    if n <= 1 {
        return psi.to_vec();
    }
    let block = psi.len() / dim;
    let mut stacked = Vec::with_capacity(psi.len());
    for b in 0..dim {
        stacked.extend(annihilate_left(r, &psi[b * block..(b + 1) * block], n - 1));
    }
    let mut out = psi.to_vec();
    r.apply_pair_into(&stacked, n, 0, &mut out);
    out
}

/// Right-end annihilation used for the local `x⁻` operators. Returns `G[i, rest]`
/// (n slots) such that `x⁻_i` maps the state with coefficients `psi` to the
/// (n−1)-particle state with coefficients `G[i, ·]`.
/// Recursion: `G_n[i, y] = psi[y, i] + Σ R^{y_{n-1} i}_{l j} G_{n-1}(psi[…, j])[l, y_1…y_{n-2}]`.
pub fn annihilate_right(r: &RMatrix, psi: &[C64], n: usize) -> Vec<C64> {
    let dim = r.m();
    if n <= 1 {
        return psi.to_vec();
    }
    let head = psi.len() / dim; // dim^(n-1)
    let inner = head / dim; // dim^(n-2)

    // First term: move the last slot to the front.
    let mut out = move_last_to_front(psi, dim);

    // sub[j] = G_{n-1}(psi[…, j]) with layout [l][y_1..y_{n-2}].
    // Q[y_1..y_{n-2}, l, j] = sub[j][l, y].
    let mut q = vec![ZERO; psi.len()];
    for j in 0..dim {
        let slice: Vec<C64> = (0..head).map(|k| psi[k * dim + j]).collect();
        let sub = annihilate_right(r, &slice, n - 1);
        for l in 0..dim {
            for y in 0..inner {
                q[(y * dim + l) * dim + j] = sub[l * inner + y];
            }
        }
    }
    let t = r.apply_pair(&q, n, n - 2);
    let moved = move_last_to_front(&t, dim);
    for (o, x) in out.iter_mut().zip(moved) {
        *o += x;
    }
    out
}

/// `[y_1..y_{n-1}, i] -> [i, y_1..y_{n-1}]`.
pub fn move_last_to_front(v: &[C64], dim: usize) -> Vec<C64> {
    let head = v.len() / dim;
    let mut out = vec![ZERO; v.len()];
    for y in 0..head {
        for i in 0..dim {
            out[i * head + y] = v[y * dim + i];
        }
    }
    out
}

/// `R_{j,j+1} v` for a sparse n-slot tensor.
pub fn apply_pair_sparse(r: &RMatrix, v: &[(usize, C64)], n: usize, j: usize) -> Sparse {
    let mut acc = HashMap::with_capacity(v.len() * 2);
    add_pair_sparse(r, v, n, j, &mut acc);
    collect_sparse(acc)
}

fn add_pair_sparse(r: &RMatrix, v: &[(usize, C64)], n: usize, j: usize, acc: &mut HashMap<usize, C64>) {
    let mm = r.m() * r.m();
    let stride = r.m().pow((n - j - 2) as u32);
    for &(idx, val) in v {
        let pair = (idx / stride) % mm;
        let base = idx - pair * stride;
        for &(row, rv) in r.column(pair) {
            *acc.entry(base + row * stride).or_insert(ZERO) += rv * val;
        }
    }
}

fn collect_sparse(acc: HashMap<usize, C64>) -> Sparse {
    let mut out: Sparse = acc.into_iter().filter(|(_, z)| *z != ZERO).collect();
    out.sort_unstable_by_key(|&(i, _)| i);
    out
}

/// Sparse counterpart of [`symmetrize_level`].
pub fn symmetrize_level_sparse(r: &RMatrix, v: &[(usize, C64)], n: usize, k: usize) -> Sparse {
    let mut acc: HashMap<usize, C64> = v.iter().copied().collect();
    let mut w = v.to_vec();
    for j in (0..k.saturating_sub(1)).rev() {
        w = apply_pair_sparse(r, &w, n, j);
        for &(i, z) in &w {
            *acc.entry(i).or_insert(ZERO) += z;
        }
    }
    let s = 1.0 / k as f64;
    acc.values_mut().for_each(|z| *z *= s);
    collect_sparse(acc)
}

/// Sparse counterpart of [`symmetrize_appended`].
pub fn symmetrize_appended_sparse(r: &RMatrix, v: &[(usize, C64)], n: usize) -> Sparse {
    if n < 2 {
        return v.to_vec();
    }
    symmetrize_level_sparse(r, v, n, n)
}

pub fn to_dense(v: &[(usize, C64)], len: usize) -> Vec<C64> {
    let mut out = vec![ZERO; len];
    for &(i, z) in v {
        out[i] = z;
    }
    out
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(v: &[C64]) -> f64 {
    v.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use crate::rmatrix::{builtin, Builtin};

    #[test]
    fn fermion_pair_antisymmetrizes() {
        let r = builtin(Builtin::Ex1, 2, None).unwrap();
        let mut v = vec![ZERO; 4];
        v[1] = ONE; // e0 ⊗ e1
        let p = symmetrize(&r, &v, 2);
        assert!((p[1] - C64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((p[2] + C64::new(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn annihilate_single_particle() {
        let r = builtin(Builtin::Ex3, 3, None).unwrap();
        let v = vec![ONE, C64::new(2.0, 0.0), ZERO];
        assert_eq!(annihilate_left(&r, &v, 1), v);
        assert_eq!(annihilate_right(&r, &v, 1), v);
    }

    #[test]
    fn move_last_to_front_permutes() {
        let v: Vec<C64> = (0..6).map(|k| C64::new(k as f64, 0.0)).collect();
        // layout [y in 0..3][i in 0..2]
        let out = move_last_to_front(&v, 2);
        assert_eq!(out[0 * 3 + 2], v[2 * 2]);
        assert_eq!(out[1 * 3 + 1], v[1 * 2 + 1]);
    }
}
