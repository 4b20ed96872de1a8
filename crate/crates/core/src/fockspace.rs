//! The paraparticle state space: R-symmetric coefficient tensors per particle
//! number, creation/annihilation matrices, the dual pairing, and the map from
//! first-quantized wavefunctions to Fock states.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use nalgebra::DVector;
use petgraph::unionfind::UnionFind;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{checked_pow, max_abs, range_basis, CMat, C64, ONE, ZERO};
use crate::rmatrix::{direct_product, RMatrix};
use crate::tensor::{self, Sparse};

/// Relative singular-value cutoff used for every rank decision.
pub const RANK_TOL: f64 = 1e-8;

/// `(n, occupation per mode, α)`; `α` counts within the occupation block.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct BasisLabel {
    pub n: usize,
    pub occupation: Vec<usize>,
    pub alpha: usize,
}

/// Orthonormal R-symmetric tensors with a common mode occupation, stored on
/// the flat indices where they can be nonzero.
#[derive(Clone, Debug)]
pub struct Block {
    pub occupation: Vec<usize>,
    /// Flat tensor indices, ascending.
    pub support: Vec<usize>,
    /// Column k is basis tensor k restricted to `support`.
    pub coeffs: CMat,
}

impl Block {
    pub fn len(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.ncols() == 0
    }

    pub fn sparse_vector(&self, k: usize) -> Sparse {
        self.support.iter().enumerate().map(|(i, &idx)| (idx, self.coeffs[(i, k)])).collect()
    }

    pub fn vector(&self, k: usize, len: usize) -> Vec<C64> {
        tensor::to_dense(&self.sparse_vector(k), len)
    }

    /// `⟨b_k | w⟩` for every vector of the block.
    pub fn project(&self, w: &[C64]) -> Vec<C64> {
        (0..self.len())
            .map(|k| self.support.iter().enumerate().map(|(i, &idx)| self.coeffs[(i, k)].conj() * w[idx]).sum())
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Sector {
    pub n: usize,
    pub offset: usize,
    pub blocks: Vec<Block>,
    /// Flat tensor length `M^n`.
    pub tensor_len: usize,
    starts: Vec<usize>,
    groups: BTreeMap<Vec<usize>, std::ops::Range<usize>>,
}

impl Sector {
    fn new(n: usize, offset: usize, tensor_len: usize, mut blocks: Vec<Block>) -> Self {
        blocks.sort_by(|x, y| x.occupation.cmp(&y.occupation).then(x.support.cmp(&y.support)));
        let mut starts = Vec::with_capacity(blocks.len());
        let mut groups: BTreeMap<Vec<usize>, std::ops::Range<usize>> = BTreeMap::new();
        let mut row = offset;
        for (k, b) in blocks.iter().enumerate() {
            starts.push(row);
            row += b.len();
            groups.entry(b.occupation.clone()).and_modify(|r| r.end = k + 1).or_insert(k..k + 1);
        }
        Sector { n, offset, blocks, tensor_len, starts, groups }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(Block::len).sum()
    }

    /// Blocks with the given occupation, each with its first global row.
    pub fn group(&self, occupation: &[usize]) -> impl Iterator<Item = (usize, &Block)> {
        let range = self.groups.get(occupation).cloned().unwrap_or(0..0);
        range.map(move |k| (self.starts[k], &self.blocks[k]))
    }

    /// Dense basis tensors in label order.
    pub fn tensors(&self) -> Vec<Vec<C64>> {
        self.blocks
            .iter()
            .flat_map(|b| (0..b.len()).map(move |k| b.vector(k, self.tensor_len)))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct FockBasis {
    species: RMatrix,
    collective: RMatrix,
    modes: usize,
    n_max: usize,
    sectors: Vec<Sector>,
    labels: Arc<[BasisLabel]>,
    truncated: bool,
}

impl FockBasis {
    pub fn species(&self) -> &RMatrix {
        &self.species
    }

    /// The direct-product R-matrix acting on collective indices `a * m + i`.
    pub fn collective(&self) -> &RMatrix {
        &self.collective
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn internal_dim(&self) -> usize {
        self.species.m()
    }

    pub fn collective_dim(&self) -> usize {
        self.collective.m()
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// True when some state with more than `n_max` particles exists (or could
    /// not be ruled out within the budget).
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    pub fn sector(&self, n: usize) -> Option<&Sector> {
        self.sectors.get(n)
    }

    pub fn degeneracies(&self) -> Vec<usize> {
        self.sectors.iter().map(Sector::dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &Arc<[BasisLabel]> {
        &self.labels
    }

    pub fn collective_index(&self, mode: usize, internal: usize) -> Result<usize> {
        if mode >= self.modes || internal >= self.internal_dim() {
            return Err(Error::Index(format!(
                "(mode {mode}, internal {internal}) outside {} modes x {} internal",
                self.modes,
                self.internal_dim()
            )));
        }
        Ok(mode * self.internal_dim() + internal)
    }

    /// Coordinates of an n-particle tensor (assumed R-symmetric) in the sector basis.
    pub fn coordinates(&self, n: usize, v: &[C64]) -> Result<DVector<C64>> {
        let sector = self.sector(n).ok_or_else(|| Error::Index(format!("sector {n} > n_max")))?;
        if v.len() != sector.tensor_len {
            return Err(Error::Shape(format!("tensor length {} != {}", v.len(), sector.tensor_len)));
        }
        let out: Vec<C64> = sector.blocks.iter().flat_map(|b| b.project(v)).collect();
        Ok(DVector::from_vec(out))
    }

    /// Coordinates of a state on the whole (truncated) space.
    pub fn state_coordinates(&self, state: &FockState) -> Result<DVector<C64>> {
        let mut out = DVector::zeros(self.total_dim());
        for (&n, t) in &state.sectors {
            if n > self.n_max {
                return Err(Error::Index(format!("state has an {n}-particle component beyond n_max")));
            }
            let c = self.coordinates(n, t)?;
            let off = self.sectors[n].offset;
            out.rows_mut(off, c.len()).copy_from(&c);
        }
        Ok(out)
    }

    pub fn export(&self, include_tensors: bool) -> BasisExport {
        BasisExport {
            modes: self.modes,
            internal_dim: self.internal_dim(),
            n_max: self.n_max,
            truncated: self.truncated,
            degeneracies: self.degeneracies(),
            total_dim: self.total_dim(),
            labels: self.labels.to_vec(),
            tensors: include_tensors.then(|| {
                self.sectors
                    .iter()
                    .flat_map(|s| s.tensors().into_iter().map(|t| t.iter().map(|z| [z.re, z.im]).collect()))
                    .collect()
            }),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BasisExport {
    pub modes: usize,
    pub internal_dim: usize,
    pub n_max: usize,
    pub truncated: bool,
    pub degeneracies: Vec<usize>,
    pub total_dim: usize,
    pub labels: Vec<BasisLabel>,
    pub tensors: Option<Vec<Vec<[f64; 2]>>>,
}

fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Single-mode basis up to `n_max` particles.
pub fn build_basis(r: &RMatrix, n_max: usize) -> Result<FockBasis> {
    build_multimode(r, 1, Some(n_max))
}

/// Basis over `modes` modes built with the direct-product R-matrix. With
/// `n_max = None` sectors are added until one is empty (polynomial Hilbert
/// series); an infinite tower then runs into the budget and errors out.
pub fn build_multimode(r: &RMatrix, modes: usize, n_max: Option<usize>) -> Result<FockBasis> {
    let collective = direct_product(r, modes)?;
    let big = collective.m();
    let m = r.m();

    let vacuum = Block { occupation: vec![0; modes], support: vec![0], coeffs: CMat::from_element(1, 1, ONE) };
    let mut sectors = vec![Sector::new(0, 0, 1, vec![vacuum])];
    let mut offset = 1;
    let mut truncated = false;
    loop {
        let n = sectors.len();
        let last = sectors.last().expect("vacuum sector");
        match n_max {
            Some(cap) if n > cap => {
                // Probe one sector further to decide whether the cut loses states.
                truncated = match checked_pow(big, n) {
                    Ok(_) if last.dim() > 0 => next_sector(&collective, m, last, n, 0).dim() > 0,
                    Ok(_) => false,
                    Err(_) => last.dim() > 0,
                };
                break;
            }
            None if last.dim() == 0 && n > 1 => {
                sectors.pop();
                break;
            }
            _ => {}
        }
        checked_pow(big, n)?;
        let next = next_sector(&collective, m, last, n, offset);
        offset += next.dim();
        sectors.push(next);
    }
    let n_max = sectors.len() - 1;
    let labels: Vec<BasisLabel> = sectors
        .iter()
        .flat_map(|s| {
            s.groups.iter().flat_map(move |(occ, range)| {
                let count: usize = s.blocks[range.clone()].iter().map(Block::len).sum();
                (0..count).map(move |alpha| BasisLabel { n: s.n, occupation: occ.clone(), alpha })
            })
        })
        .collect();
    Ok(FockBasis {
        species: r.clone(),
        collective,
        modes,
        n_max,
        sectors,
        labels: labels.into(),
        truncated,
    })
}

/// `W_n` from `W_{n-1}`: symmetrize every `Ψ ⊗ e_A`, split the resulting
/// columns into groups with disjoint supports, and keep the left singular
/// vectors of each group.
fn next_sector(collective: &RMatrix, m: usize, prev: &Sector, n: usize, offset: usize) -> Sector {
    let big = collective.m();
    let mut columns: Vec<(Vec<usize>, Sparse)> = Vec::new();
    for block in &prev.blocks {
        for k in 0..block.len() {
            let v = block.sparse_vector(k);
            for a in 0..big {
                let mut occ = block.occupation.clone();
                occ[a / m] += 1;
                let appended: Sparse = v.iter().map(|&(i, z)| (i * big + a, z)).collect();
                let w = tensor::symmetrize_appended_sparse(collective, &appended, n);
                if !w.is_empty() {
                    columns.push((occ, w));
                }
            }
        }
    }

    let mut uf = UnionFind::<usize>::new(columns.len());
    let mut owner: HashMap<usize, usize> = HashMap::new();
    for (c, (_, w)) in columns.iter().enumerate() {
        for &(idx, _) in w {
            match owner.entry(idx) {
                Entry::Occupied(o) => {
                    uf.union(c, *o.get());
                }
                Entry::Vacant(slot) => {
                    slot.insert(c);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for c in 0..columns.len() {
        groups.entry(uf.find(c)).or_default().push(c);
    }

    let mut blocks = Vec::new();
    for members in groups.values() {
        let mut support: Vec<usize> =
            members.iter().flat_map(|&c| columns[c].1.iter().map(|&(i, _)| i)).collect();
        support.sort_unstable();
        support.dedup();
        let row_of: HashMap<usize, usize> = support.iter().enumerate().map(|(r, &i)| (i, r)).collect();
        let mut mat = CMat::zeros(support.len(), members.len());
        for (j, &c) in members.iter().enumerate() {
            for &(idx, z) in &columns[c].1 {
                mat[(row_of[&idx], j)] = z;
            }
        }
        // Inputs are unit vectors, so a surviving direction has singular value O(1).
        let coeffs = range_basis(&mat, RANK_TOL, 1.0);
        if coeffs.ncols() > 0 {
            blocks.push(Block { occupation: columns[members[0]].0.clone(), support, coeffs });
        }
    }
    Sector::new(n, offset, big.pow(n as u32), blocks)
}

/// Thin wrapper over the single-mode basis returning `d_0..d_{n_max}`.
pub fn exclusion_statistics(r: &RMatrix, n_max: usize) -> Result<Vec<usize>> {
    Ok(build_basis(r, n_max)?.degeneracies())
}

/// A dense operator on a (possibly truncated) Fock space.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub matrix: CMat,
    pub labels: Arc<[BasisLabel]>,
    /// Columns whose image left the truncated space and was dropped.
    pub dropped_columns: Vec<usize>,
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn export(&self) -> OperatorExport {
        OperatorExport {
            dim: self.dim(),
            entries: self.matrix.transpose().iter().map(|z| [z.re, z.im]).collect(),
            labels: self.labels.to_vec(),
            dropped_columns: self.dropped_columns.clone(),
        }
    }
}

/// Row-major flat export.
#[derive(Clone, Debug, Serialize)]
pub struct OperatorExport {
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
    pub labels: Vec<BasisLabel>,
    pub dropped_columns: Vec<usize>,
}

fn creation_into(basis: &FockBasis, a: usize, out: &mut CMat, dropped: &mut Vec<usize>) {
    let big = basis.collective_dim();
    let mode = a / basis.internal_dim();
    let coll = basis.collective();
    for sector in basis.sectors() {
        let n = sector.n;
        let mut col = sector.offset;
        for block in &sector.blocks {
            let mut occ = block.occupation.clone();
            occ[mode] += 1;
            for k in 0..block.len() {
                if n == basis.n_max() {
                    if basis.truncated() {
                        dropped.push(col);
                    }
                } else if let Some(above) = basis.sector(n + 1) {
                    let v = block.vector(k, sector.tensor_len);
                    let w = tensor::symmetrize_prepended(coll, &tensor::prepend(a, &v, big), n + 1);
                    for (row0, tb) in above.group(&occ) {
                        for (r, z) in tb.project(&w).into_iter().enumerate() {
                            out[(row0 + r, col)] = z;
                        }
                    }
                }
                col += 1;
            }
        }
    }
}

fn annihilation_all(basis: &FockBasis) -> Vec<CMat> {
    let dim = basis.total_dim();
    let big = basis.collective_dim();
    let m = basis.internal_dim();
    let coll = basis.collective();
    let mut out = vec![CMat::zeros(dim, dim); big];
    for sector in basis.sectors().iter().skip(1) {
        let n = sector.n;
        let below = &basis.sectors()[n - 1];
        let mut col = sector.offset;
        for block in &sector.blocks {
            for k in 0..block.len() {
                let f = tensor::annihilate_left(coll, &block.vector(k, sector.tensor_len), n);
                let len = f.len() / big;
                for a in 0..big {
                    let mode = a / m;
                    if block.occupation[mode] == 0 {
                        continue;
                    }
                    let mut occ = block.occupation.clone();
                    occ[mode] -= 1;
                    let s = tensor::symmetrize(coll, &f[a * len..(a + 1) * len], n - 1);
                    for (row0, tb) in below.group(&occ) {
                        for (r, z) in tb.project(&s).into_iter().enumerate() {
                            out[a][(row0 + r, col)] = z;
                        }
                    }
                }
                col += 1;
            }
        }
    }
    out
}

/// `ψ⁺_{(mode, internal)} : Ψ ↦ P_{n+1}(e_A ⊗ Ψ)` in basis coordinates.
pub fn creation_matrix(basis: &FockBasis, mode: usize, internal: usize) -> Result<OperatorMatrix> {
    let a = basis.collective_index(mode, internal)?;
    let dim = basis.total_dim();
    let mut matrix = CMat::zeros(dim, dim);
    let mut dropped = Vec::new();
    creation_into(basis, a, &mut matrix, &mut dropped);
    Ok(OperatorMatrix { matrix, labels: basis.labels().clone(), dropped_columns: dropped })
}

/// `ψ⁻_{(mode, internal)}` from the normal-ordering recursion.
pub fn annihilation_matrix(
    basis: &FockBasis,
    mode: usize,
    internal: usize,
) -> Result<OperatorMatrix> {
    let a = basis.collective_index(mode, internal)?;
    let mut all = annihilation_all(basis);
    Ok(OperatorMatrix {
        matrix: all.swap_remove(a),
        labels: basis.labels().clone(),
        dropped_columns: Vec::new(),
    })
}

/// All creation and annihilation matrices of a basis, indexed by `a * m + i`.
#[derive(Clone, Debug)]
pub struct FockOperators {
    pub basis: FockBasis,
    pub plus: Vec<CMat>,
    pub minus: Vec<CMat>,
    pub dropped_columns: Vec<usize>,
}

impl FockOperators {
    pub fn new(basis: FockBasis) -> Self {
        let dim = basis.total_dim();
        let big = basis.collective_dim();
        let mut plus = Vec::with_capacity(big);
        let mut dropped = Vec::new();
        for a in 0..big {
            let mut mat = CMat::zeros(dim, dim);
            dropped.clear();
            creation_into(&basis, a, &mut mat, &mut dropped);
            plus.push(mat);
        }
        let minus = annihilation_all(&basis);
        FockOperators { basis, plus, minus, dropped_columns: dropped }
    }

    pub fn plus(&self, mode: usize, internal: usize) -> &CMat {
        &self.plus[mode * self.basis.internal_dim() + internal]
    }

    pub fn minus(&self, mode: usize, internal: usize) -> &CMat {
        &self.minus[mode * self.basis.internal_dim() + internal]
    }

    pub fn dim(&self) -> usize {
        self.basis.total_dim()
    }

    /// Columns of states with at most `n_max - headroom` particles, or every
    /// column when the space is not truncated.
    pub fn safe_columns(&self, headroom: usize) -> Vec<usize> {
        safe_columns(&self.basis, headroom)
    }
}

pub fn safe_columns(basis: &FockBasis, headroom: usize) -> Vec<usize> {
    basis
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, l)| !basis.truncated() || l.n + headroom <= basis.n_max())
        .map(|(k, _)| k)
        .collect()
}

/// Max |entry| of `m` over the given columns.
pub fn max_abs_on_columns(m: &CMat, cols: &[usize]) -> f64 {
    cols.iter().fold(0.0, |acc, &c| m.column(c).iter().fold(acc, |a, z| a.max(z.norm())))
}

#[derive(Clone, Debug, Serialize)]
pub struct CrReport {
    /// `ψ⁻ψ⁺ = Σ R ψ⁺ψ⁻ + δ`
    pub annihilate_create: f64,
    /// `ψ⁺ψ⁺ = Σ R ψ⁺ψ⁺`
    pub create_create: f64,
    /// `ψ⁻ψ⁻ = Σ R ψ⁻ψ⁻`
    pub annihilate_annihilate: f64,
    pub truncated: bool,
}

impl CrReport {
    pub fn max_residual(&self) -> f64 {
        self.annihilate_create.max(self.create_create).max(self.annihilate_annihilate)
    }
}

/// Check the three families of commutation relations between the matrices
/// `plus[(a,i)]` and `minus[(a,i)]` for every mode and internal index, using the
/// species R-matrix `r`. `cols1` and `cols2` restrict the first two families
/// to columns where truncation cannot interfere.
pub fn cr_residuals(
    r: &RMatrix,
    modes: usize,
    plus: &[CMat],
    minus: &[CMat],
    cols1: &[usize],
    cols2: &[usize],
) -> (f64, f64, f64) {
    let m = r.m();
    let big = modes * m;
    let dim = plus.first().map(|p| p.nrows()).unwrap_or(0);
    let all: Vec<usize> = (0..dim).collect();
    let idx = |a: usize, i: usize| a * m + i;

    let pm: Vec<CMat> = (0..big * big).map(|k| &plus[k / big] * &minus[k % big]).collect();
    let pp: Vec<CMat> = (0..big * big).map(|k| &plus[k / big] * &plus[k % big]).collect();
    let mm: Vec<CMat> = (0..big * big).map(|k| &minus[k / big] * &minus[k % big]).collect();

    let (mut l1, mut l2, mut l3) = (0.0f64, 0.0f64, 0.0f64);
    for a in 0..modes {
        for b in 0..modes {
            for i in 0..m {
                for j in 0..m {
                    // ψ⁻_{a,i} ψ⁺_{b,j} − Σ R^{ik}_{jl} ψ⁺_{b,k} ψ⁻_{a,l} − δ_ab δ_ij
                    let mut lhs = &minus[idx(a, i)] * &plus[idx(b, j)];
                    for k in 0..m {
                        for l in 0..m {
                            let c = r.get(i, k, j, l);
                            if c != ZERO {
                                lhs -= pm[idx(b, k) * big + idx(a, l)].map(|z| z * c);
                            }
                        }
                    }
                    if a == b && i == j {
                        for d in 0..dim {
                            lhs[(d, d)] -= ONE;
                        }
                    }
                    l1 = l1.max(max_abs_on_columns(&lhs, cols1));

                    // ψ⁺_{a,i} ψ⁺_{b,j} − Σ R^{kl}_{ij} ψ⁺_{b,k} ψ⁺_{a,l}
                    let mut lhs = pp[idx(a, i) * big + idx(b, j)].clone();
                    for k in 0..m {
                        for l in 0..m {
                            let c = r.get(k, l, i, j);
                            if c != ZERO {
                                lhs -= pp[idx(b, k) * big + idx(a, l)].map(|z| z * c);
                            }
                        }
                    }
                    l2 = l2.max(max_abs_on_columns(&lhs, cols2));

                    // ψ⁻_{a,i} ψ⁻_{b,j} − Σ R^{ji}_{lk} ψ⁻_{b,k} ψ⁻_{a,l}
                    let mut lhs = mm[idx(a, i) * big + idx(b, j)].clone();
                    for k in 0..m {
                        for l in 0..m {
                            let c = r.get(j, i, l, k);
                            if c != ZERO {
                                lhs -= mm[idx(b, k) * big + idx(a, l)].map(|z| z * c);
                            }
                        }
                    }
                    l3 = l3.max(max_abs_on_columns(&lhs, &all));
                }
            }
        }
    }
    (l1, l2, l3)
}

/// All three commutation-relation families on the sectors unaffected by truncation.
pub fn verify_crs(ops: &FockOperators) -> CrReport {
    let b = &ops.basis;
    let (l1, l2, l3) = cr_residuals(
        b.species(),
        b.modes(),
        &ops.plus,
        &ops.minus,
        &ops.safe_columns(1),
        &ops.safe_columns(2),
    );
    CrReport {
        annihilate_create: l1,
        create_create: l2,
        annihilate_annihilate: l3,
        truncated: b.truncated(),
    }
}

/// `⟨0| ψ⁻_{bra_n} ⋯ ψ⁻_{bra_1} ψ⁺_{ket_1} ⋯ ψ⁺_{ket_n} |0⟩` with collective
/// indices, evaluated by normal ordering. Bilinear in the two words.
pub fn dual_pairing(basis: &FockBasis, bra_word: &[usize], ket_word: &[usize]) -> Result<C64> {
    let big = basis.collective_dim();
    if let Some(bad) = bra_word.iter().chain(ket_word).find(|&&a| a >= big) {
        return Err(Error::Index(format!("collective index {bad} >= {big}")));
    }
    if bra_word.len() != ket_word.len() {
        return Ok(ZERO);
    }
    let n = ket_word.len();
    let len = checked_pow(big, n)?;
    let mut pos = 0;
    for &a in ket_word {
        pos = pos * big + a;
    }
    let mut t = vec![ZERO; len];
    t[pos] = ONE;
    Ok(descend_word(basis.collective(), t, n, bra_word))
}

fn descend_word(r: &RMatrix, mut t: Vec<C64>, n: usize, bra: &[usize]) -> C64 {
    let big = r.m();
    for (k, &a) in bra.iter().enumerate() {
        let f = tensor::annihilate_left(r, &t, n - k);
        let len = f.len() / big;
        t = f[a * len..(a + 1) * len].to_vec();
    }
    t[0]
}

/// `D[I] = ⟨e_I | Ψ⟩` for every word I of length n.
fn descend_all(r: &RMatrix, t: &[C64], n: usize) -> Vec<C64> {
    if n == 0 {
        return t.to_vec();
    }
    let big = r.m();
    let f = tensor::annihilate_left(r, t, n);
    let len = f.len() / big;
    let mut out = Vec::with_capacity(f.len());
    for a in 0..big {
        out.extend(descend_all(r, &f[a * len..(a + 1) * len], n - 1));
    }
    out
}

/// Gram matrix `G_{αβ} = ⟨Ψ_α|Ψ_β⟩` of the n-particle basis under the dual pairing.
pub fn gram_matrix(basis: &FockBasis, n: usize) -> Result<CMat> {
    let sector = basis.sector(n).ok_or_else(|| Error::Index(format!("sector {n} > n_max")))?;
    let tensors = sector.tensors();
    let d = tensors.len();
    let descended: Vec<Vec<C64>> =
        tensors.iter().map(|t| descend_all(basis.collective(), t, n)).collect();
    let mut g = CMat::zeros(d, d);
    for (a, ta) in tensors.iter().enumerate() {
        for (b, db) in descended.iter().enumerate() {
            g[(a, b)] = inner(ta, db);
        }
    }
    Ok(g)
}

/// Block-diagonal Gram matrix over the whole basis.
pub fn full_gram_matrix(basis: &FockBasis) -> Result<CMat> {
    let dim = basis.total_dim();
    let mut g = CMat::zeros(dim, dim);
    for s in basis.sectors() {
        let block = gram_matrix(basis, s.n)?;
        g.view_mut((s.offset, s.offset), block.shape()).copy_from(&block);
    }
    Ok(g)
}

/// A state stored as canonical (symmetrized) tensors per particle number.
#[derive(Clone, Debug, PartialEq)]
pub struct FockState {
    pub collective_dim: usize,
    pub sectors: BTreeMap<usize, Vec<C64>>,
}

impl FockState {
    pub fn vacuum(collective_dim: usize) -> Self {
        FockState { collective_dim, sectors: BTreeMap::from([(0, vec![ONE])]) }
    }

    /// `Σ T[I] ψ⁺_{I_1} ⋯ ψ⁺_{I_n} |0⟩`, stored as `P_n T`.
    pub fn from_tensor(r: &RMatrix, n: usize, t: &[C64]) -> Result<Self> {
        let expected = checked_pow(r.m(), n)?;
        if t.len() != expected {
            return Err(Error::Shape(format!("tensor of length {} for {n} slots of dim {}", t.len(), r.m())));
        }
        let canon = tensor::symmetrize(r, t, n);
        Ok(FockState { collective_dim: r.m(), sectors: BTreeMap::from([(n, canon)]) })
    }

    pub fn norm_max(&self) -> f64 {
        self.sectors.values().map(|t| tensor::max_abs(t)).fold(0.0, f64::max)
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.norm_max() <= tol
    }

    /// `max_n ‖P_n(T_n − T′_n)‖_max`; both sides are already canonical.
    pub fn distance(&self, other: &FockState) -> f64 {
        let keys: std::collections::BTreeSet<usize> =
            self.sectors.keys().chain(other.sectors.keys()).copied().collect();
        keys.into_iter()
            .map(|n| match (self.sectors.get(&n), other.sectors.get(&n)) {
                (Some(a), Some(b)) => a.iter().zip(b).fold(0.0f64, |acc, (x, y)| acc.max((x - y).norm())),
                (Some(a), None) | (None, Some(a)) => tensor::max_abs(a),
                (None, None) => 0.0,
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct FirstQuantization {
    pub exchange_consistent: bool,
    /// `max_j ‖R_{j,j+1} Ψ − Ψ‖_max` relative to `max(1, ‖Ψ‖_max)`.
    pub exchange_residual: f64,
    pub state: FockState,
}

/// Check the exchange rule of an n-particle wavefunction over `modes` positions
/// (collective slot index `x * m + i`) and map it to its Fock state.
pub fn first_quantization_check(
    r: &RMatrix,
    n: usize,
    modes: usize,
    wavefunction: &[C64],
) -> Result<FirstQuantization> {
    let coll = direct_product(r, modes)?;
    let expected = checked_pow(coll.m(), n)?;
    if wavefunction.len() != expected {
        return Err(Error::Shape(format!(
            "wavefunction has {} entries, expected ({}·{})^{n} = {expected}",
            wavefunction.len(),
            modes,
            r.m()
        )));
    }
    let scale = tensor::max_abs(wavefunction).max(1.0);
    let mut residual = 0.0f64;
    for j in 0..n.saturating_sub(1) {
        let w = coll.apply_pair(wavefunction, n, j);
        let d = w.iter().zip(wavefunction).fold(0.0f64, |acc, (x, y)| acc.max((x - y).norm()));
        residual = residual.max(d / scale);
    }
    let state = FockState::from_tensor(&coll, n, wavefunction)?;
    Ok(FirstQuantization { exchange_consistent: residual <= 1e-10, exchange_residual: residual, state })
}

/// Residual of `M · M = M` on a dense matrix, for idempotency checks.
pub fn idempotency_residual(p: &CMat) -> f64 {
    max_abs(&(p * p - p))
}
