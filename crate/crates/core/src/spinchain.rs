//! Open spin chain whose excitations are free paraparticles: local operator
//! algebra on one site, MPO string operators, and exact-diagonalization
//! cross-checks. Sites and internal indices are 0-based.

use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fockspace::{build_multimode, cr_residuals, FockBasis, FockOperators};
use crate::freegas::{chain_h, diagonalize, ClosedForm, Statistics};
use crate::linalg::{budget_dim, checked_pow, commutator, eigenvalues, max_abs, max_abs_diff, CMat, C64, ZERO};
use crate::rmatrix::{csr_to_dense, RMatrix};
use crate::tensor;

pub type Csr = CsrMatrix<C64>;

/// Default tolerance for the same-site relations.
pub const LOCAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct LocalOps {
    r: RMatrix,
    basis: FockBasis,
    pub y_plus: Vec<CMat>,
    pub y_minus: Vec<CMat>,
    pub x_plus: Vec<CMat>,
    pub x_minus: Vec<CMat>,
    /// `S^{ij} = −[y⁺_i, x⁻_j]` at `i * m + j`.
    pub s: Vec<CMat>,
    /// `T^{ij} = [y⁻_i, x⁺_j]` at `i * m + j`.
    pub t: Vec<CMat>,
    pub n_local: CMat,
}

impl LocalOps {
    pub fn dim(&self) -> usize {
        self.n_local.nrows()
    }

    pub fn m(&self) -> usize {
        self.r.m()
    }

    pub fn rmatrix(&self) -> &RMatrix {
        &self.r
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    /// `d_n` of the local space.
    pub fn degeneracies(&self) -> Vec<usize> {
        self.basis.degeneracies()
    }

    pub fn s(&self, i: usize, j: usize) -> &CMat {
        &self.s[i * self.m() + j]
    }

    pub fn t(&self, i: usize, j: usize) -> &CMat {
        &self.t[i * self.m() + j]
    }
}

/// Local operators on the single-mode Fock space of `r`.
pub fn build_local_ops(r: &RMatrix) -> Result<LocalOps> {
    if let Some(form) = ClosedForm::for_rmatrix(r) {
        if !form.is_polynomial() {
            return Err(Error::Unsupported(format!("z_R = {form} is not a polynomial; the local space is infinite")));
        }
    }
    let basis = build_multimode(r, 1, None)?;
    if basis.truncated() {
        return Err(Error::Unsupported("the local space did not terminate".into()));
    }
    let m = r.m();
    let dim = basis.total_dim();
    let fock = FockOperators::new(basis);
    let basis = fock.basis.clone();
    let y_plus = fock.plus.clone();
    let y_minus = fock.minus.clone();

    let mut x_plus = vec![CMat::zeros(dim, dim); m];
    let mut x_minus = vec![CMat::zeros(dim, dim); m];
    for sector in basis.sectors() {
        let n = sector.n;
        for (k, v) in sector.tensors().iter().enumerate() {
            let col = sector.offset + k;
            for i in 0..m {
                // x⁺_i: Ψ ↦ P(Ψ ⊗ e_i)
                let w = tensor::symmetrize_appended(r, &tensor::append(v, i, m), n + 1);
                match basis.sector(n + 1) {
                    Some(next) => {
                        let c = basis.coordinates(n + 1, &w)?;
                        x_plus[i].view_mut((next.offset, col), (c.len(), 1)).copy_from(&c);
                    }
                    None if tensor::max_abs(&w) > LOCAL_TOL => {
                        return Err(Error::Constraint {
                            what: format!("x⁺ leaves the local space from sector {n}"),
                            residuals: vec![tensor::max_abs(&w)],
                        })
                    }
                    None => {}
                }
            }
            if n == 0 {
                continue;
            }
            let g = tensor::annihilate_right(r, v, n);
            let len = g.len() / m;
            let prev = basis.sector(n - 1).expect("lower sector exists");
            for i in 0..m {
                let w = tensor::symmetrize(r, &g[i * len..(i + 1) * len], n - 1);
                let c = basis.coordinates(n - 1, &w)?;
                x_minus[i].view_mut((prev.offset, col), (c.len(), 1)).copy_from(&c);
            }
        }
    }

    let mut s = Vec::with_capacity(m * m);
    let mut t = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            s.push(-commutator(&y_plus[i], &x_minus[j]));
            t.push(commutator(&y_minus[i], &x_plus[j]));
        }
    }
    let mut n_local = CMat::zeros(dim, dim);
    for i in 0..m {
        n_local += &y_plus[i] * &y_minus[i];
    }
    let ops = LocalOps { r: r.clone(), basis, y_plus, y_minus, x_plus, x_minus, s, t, n_local };
    let report = local_algebra(&ops);
    if report.max_residual() > LOCAL_TOL {
        return Err(Error::Constraint {
            what: "local operator algebra".into(),
            residuals: vec![report.max_residual()],
        });
    }
    Ok(ops)
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalAlgebraReport {
    pub y_annihilate_create: f64,
    pub y_create_create: f64,
    pub y_annihilate_annihilate: f64,
    pub x_annihilate_create: f64,
    pub x_create_create: f64,
    pub x_annihilate_annihilate: f64,
    /// `[x⁺_i, y⁺_j]` and `[x⁻_i, y⁻_j]`
    pub xy_commute: f64,
    /// `Σ x⁺x⁻ = Σ y⁺y⁻ = n` and `[n, x±] = ±x±`, `[n, y±] = ±y±`
    pub number: f64,
}

impl LocalAlgebraReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.y_annihilate_create,
            self.y_create_create,
            self.y_annihilate_annihilate,
            self.x_annihilate_create,
            self.x_create_create,
            self.x_annihilate_annihilate,
            self.xy_commute,
            self.number,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn local_algebra(ops: &LocalOps) -> LocalAlgebraReport {
    let r = &ops.r;
    let m = r.m();
    let dim = ops.dim();
    let all: Vec<usize> = (0..dim).collect();
    let (y1, y2, y3) = cr_residuals(r, 1, &ops.y_plus, &ops.y_minus, &all, &all);

    let (xp, xm) = (&ops.x_plus, &ops.x_minus);
    let (mut x1, mut x2, mut x3, mut xy) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..m {
        for j in 0..m {
            // x⁻_i x⁺_j = Σ R^{ki}_{lj} x⁺_k x⁻_l + δ_ij
            let mut a = &xm[i] * &xp[j];
            // x⁺_i x⁺_j = Σ R^{lk}_{ji} x⁺_k x⁺_l
            let mut b = &xp[i] * &xp[j];
            // x⁻_i x⁻_j = Σ R^{ij}_{kl} x⁻_k x⁻_l
            let mut c = &xm[i] * &xm[j];
            for k in 0..m {
                for l in 0..m {
                    a -= (&xp[k] * &xm[l]) * r.get(k, i, l, j);
                    b -= (&xp[k] * &xp[l]) * r.get(l, k, j, i);
                    c -= (&xm[k] * &xm[l]) * r.get(i, j, k, l);
                }
            }
            if i == j {
                a -= CMat::identity(dim, dim);
            }
            x1 = x1.max(max_abs(&a));
            x2 = x2.max(max_abs(&b));
            x3 = x3.max(max_abs(&c));
            xy = xy
                .max(max_abs(&commutator(&xp[i], &ops.y_plus[j])))
                .max(max_abs(&commutator(&xm[i], &ops.y_minus[j])));
        }
    }

    let n = &ops.n_local;
    let mut sum_x = CMat::zeros(dim, dim);
    for i in 0..m {
        sum_x += &xp[i] * &xm[i];
    }
    let mut number = max_abs_diff(&sum_x, n);
    for i in 0..m {
        for (op, sign) in [(&xp[i], 1.0), (&xm[i], -1.0), (&ops.y_plus[i], 1.0), (&ops.y_minus[i], -1.0)] {
            number = number.max(max_abs(&(commutator(n, op) - op * C64::new(sign, 0.0))));
        }
    }
    LocalAlgebraReport {
        y_annihilate_create: y1,
        y_create_create: y2,
        y_annihilate_annihilate: y3,
        x_annihilate_create: x1,
        x_create_create: x2,
        x_annihilate_annihilate: x3,
        xy_commute: xy,
        number,
    }
}

/// Same-site identities for moving `y±` through the string tensors `S`, `T`,
/// and the contractions that turn string operators back into local ones.
#[derive(Clone, Debug, Serialize)]
pub struct CrossingReport {
    /// `y⁻_i S^{jp} = Σ R^{ik}_{jl} S^{kp} y⁻_l`
    pub annihilate_through_s: f64,
    /// `T^{ip} y⁺_j = Σ R^{ik}_{jl} y⁺_k T^{lp}`
    pub t_through_create: f64,
    /// `y⁺_i S^{jp} = Σ R^{kl}_{ij} S^{kp} y⁺_l`
    pub create_through_s: f64,
    /// `S^{ip} y⁺_j = Σ R^{kl}_{ij} y⁺_k S^{lp}`
    pub s_through_create: f64,
    /// `y⁻_i T^{jp} = Σ R^{ji}_{lk} T^{kp} y⁻_l`
    pub annihilate_through_t: f64,
    /// `T^{ip} y⁻_j = Σ R^{ji}_{lk} y⁻_k T^{lp}`
    pub t_through_annihilate: f64,
    /// `Σ_p T^{ip} S^{jp} = δ_ij` and `Σ_p S^{pi} T^{pj} = δ_ij`
    pub string_inverse: f64,
    /// `Σ_{pq} T^{ip} S^{jq} R^{pa}_{qb} = Σ_{kl} R^{ik}_{jl} S^{ka} T^{lb}`
    pub string_exchange: f64,
    /// `Σ_i y⁺_i T^{ip} = x⁺_p` and `Σ_i S^{ip} y⁻_i = x⁻_p`
    pub string_end: f64,
}

impl CrossingReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.annihilate_through_s,
            self.t_through_create,
            self.create_through_s,
            self.s_through_create,
            self.annihilate_through_t,
            self.t_through_annihilate,
            self.string_inverse,
            self.string_exchange,
            self.string_end,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn crossing_relations(ops: &LocalOps) -> CrossingReport {
    let r = &ops.r;
    let m = r.m();
    let dim = ops.dim();
    let (yp, ym) = (&ops.y_plus, &ops.y_minus);
    let mut rep = CrossingReport {
        annihilate_through_s: 0.0,
        t_through_create: 0.0,
        create_through_s: 0.0,
        s_through_create: 0.0,
        annihilate_through_t: 0.0,
        t_through_annihilate: 0.0,
        string_inverse: 0.0,
        string_exchange: 0.0,
        string_end: 0.0,
    };
    for i in 0..m {
        for j in 0..m {
            for p in 0..m {
                let mut e1 = &ym[i] * ops.s(j, p);
                let mut e2 = ops.t(i, p) * &yp[j];
                let mut e3 = &yp[i] * ops.s(j, p);
                let mut e4 = ops.s(i, p) * &yp[j];
                let mut e5 = &ym[i] * ops.t(j, p);
                let mut e6 = ops.t(i, p) * &ym[j];
                for k in 0..m {
                    for l in 0..m {
                        e1 -= (ops.s(k, p) * &ym[l]) * r.get(i, k, j, l);
                        e2 -= (&yp[k] * ops.t(l, p)) * r.get(i, k, j, l);
                        e3 -= (ops.s(k, p) * &yp[l]) * r.get(k, l, i, j);
                        e4 -= (&yp[k] * ops.s(l, p)) * r.get(k, l, i, j);
                        e5 -= (ops.t(k, p) * &ym[l]) * r.get(j, i, l, k);
                        e6 -= (&ym[k] * ops.t(l, p)) * r.get(j, i, l, k);
                    }
                }
                rep.annihilate_through_s = rep.annihilate_through_s.max(max_abs(&e1));
                rep.t_through_create = rep.t_through_create.max(max_abs(&e2));
                rep.create_through_s = rep.create_through_s.max(max_abs(&e3));
                rep.s_through_create = rep.s_through_create.max(max_abs(&e4));
                rep.annihilate_through_t = rep.annihilate_through_t.max(max_abs(&e5));
                rep.t_through_annihilate = rep.t_through_annihilate.max(max_abs(&e6));
            }

            let mut ts = CMat::zeros(dim, dim);
            let mut st = CMat::zeros(dim, dim);
            for p in 0..m {
                ts += ops.t(i, p) * ops.s(j, p);
                st += ops.s(p, i) * ops.t(p, j);
            }
            if i == j {
                ts -= CMat::identity(dim, dim);
                st -= CMat::identity(dim, dim);
            }
            rep.string_inverse = rep.string_inverse.max(max_abs(&ts)).max(max_abs(&st));

            for a in 0..m {
                for b in 0..m {
                    let mut e = CMat::zeros(dim, dim);
                    for p in 0..m {
                        for q in 0..m {
                            let c = r.get(p, a, q, b);
                            if c != ZERO {
                                e += (ops.t(i, p) * ops.s(j, q)) * c;
                            }
                        }
                    }
                    for k in 0..m {
                        for l in 0..m {
                            let c = r.get(i, k, j, l);
                            if c != ZERO {
                                e -= (ops.s(k, a) * ops.t(l, b)) * c;
                            }
                        }
                    }
                    rep.string_exchange = rep.string_exchange.max(max_abs(&e));
                }
            }
        }
    }
    for p in 0..m {
        let mut up = -ops.x_plus[p].clone();
        let mut down = -ops.x_minus[p].clone();
        for i in 0..m {
            up += &yp[i] * ops.t(i, p);
            down += ops.s(i, p) * &ym[i];
        }
        rep.string_end = rep.string_end.max(max_abs(&up)).max(max_abs(&down));
    }
    rep
}

fn to_csr(m: &CMat) -> Csr {
    let mut coo = CooMatrix::new(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            if z != ZERO {
                coo.push(i, j, z);
            }
        }
    }
    Csr::from(&coo)
}

pub fn identity_csr(n: usize) -> Csr {
    Csr::identity(n)
}

pub fn kron_csr(a: &Csr, b: &Csr) -> Csr {
    let (br, bc) = (b.nrows(), b.ncols());
    let mut coo = CooMatrix::new(a.nrows() * br, a.ncols() * bc);
    for (i, j, x) in a.triplet_iter() {
        for (k, l, y) in b.triplet_iter() {
            coo.push(i * br + k, j * bc + l, x * y);
        }
    }
    Csr::from(&coo)
}

pub fn dense(a: &Csr) -> CMat {
    csr_to_dense(a)
}

pub fn csr_max_abs(a: &Csr) -> f64 {
    a.values().iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn csr_max_abs_diff(a: &Csr, b: &Csr) -> f64 {
    csr_max_abs(&(a - b))
}

#[derive(Clone, Debug, Serialize)]
pub struct SpinChainSpec {
    pub sites: usize,
    /// Bond couplings `J_a` between sites a and a+1; the last entry is 0.
    pub j: Vec<f64>,
    pub mu: Vec<f64>,
}

impl SpinChainSpec {
    /// `j` may omit the final zero coupling.
    pub fn new(sites: usize, mut j: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        if sites == 0 {
            return Err(Error::Invalid("a chain needs at least one site".into()));
        }
        if j.len() + 1 == sites {
            j.push(0.0);
        }
        if j.len() != sites || mu.len() != sites {
            return Err(Error::Shape(format!(
                "{sites} sites need {sites} couplings (or {}) and {sites} chemical potentials; got {} and {}",
                sites - 1,
                j.len(),
                mu.len()
            )));
        }
        if j[sites - 1] != 0.0 {
            return Err(Error::Invalid("open boundary requires the last coupling to be 0".into()));
        }
        if j.iter().chain(&mu).any(|x| !x.is_finite()) {
            return Err(Error::Invalid("couplings must be finite".into()));
        }
        Ok(SpinChainSpec { sites, j, mu })
    }

    pub fn uniform(sites: usize, j: f64, mu: f64) -> Result<Self> {
        Self::new(sites, vec![j; sites.saturating_sub(1)], vec![mu; sites])
    }

    /// Couplings and potentials drawn uniformly from `[-1, 1)`.
    pub fn random(sites: usize, rng: &mut impl Rng) -> Result<Self> {
        let j = (0..sites.saturating_sub(1)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mu = (0..sites).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self::new(sites, j, mu)
    }

    /// Single-particle matrix `h` with diagonal `−μ_a` and hopping `J_a`.
    pub fn hopping_matrix(&self) -> CMat {
        chain_h(&self.j, &self.mu)
    }
}

#[derive(Clone, Debug)]
pub struct ChainOperators {
    pub spec: SpinChainSpec,
    pub dim: usize,
    pub m: usize,
    pub h_spin: Csr,
    pub h_para: Csr,
    /// `ψ⁺_{a,i}` at `a * m + i`.
    pub psi_plus: Vec<Csr>,
    pub psi_minus: Vec<Csr>,
    pub n_total: Csr,
}

impl ChainOperators {
    pub fn psi_plus(&self, site: usize, i: usize) -> &Csr {
        &self.psi_plus[site * self.m + i]
    }

    pub fn psi_minus(&self, site: usize, i: usize) -> &Csr {
        &self.psi_minus[site * self.m + i]
    }
}

struct Embedder {
    local_dim: usize,
    sites: usize,
}

impl Embedder {
    /// `1 ⊗ … ⊗ op ⊗ … ⊗ 1` with `op` covering `span` sites starting at `site`.
    fn place(&self, op: &Csr, site: usize, span: usize) -> Csr {
        let left = identity_csr(self.local_dim.pow(site as u32));
        let right = identity_csr(self.local_dim.pow((self.sites - site - span) as u32));
        kron_csr(&kron_csr(&left, op), &right)
    }
}

/// String operator: `Σ_b string^{i b1}_0 string^{b1 b2}_1 ⋯ end_{b}` on sites
/// `0..=site`, identity beyond.
fn mpo_string(string: &[Csr], end: &[Csr], m: usize, site: usize, i: usize, emb: &Embedder) -> Csr {
    if site == 0 {
        return emb.place(&end[i], 0, 1);
    }
    let mut open: Vec<Csr> = (0..m).map(|b| string[i * m + b].clone()).collect();
    for _ in 1..site {
        open = (0..m)
            .map(|b2| {
                let mut acc = kron_csr(&open[0], &string[b2]);
                for (b, o) in open.iter().enumerate().skip(1) {
                    acc = &acc + &kron_csr(o, &string[b * m + b2]);
                }
                acc
            })
            .collect();
    }
    let mut acc = kron_csr(&open[0], &end[0]);
    for (b, o) in open.iter().enumerate().skip(1) {
        acc = &acc + &kron_csr(o, &end[b]);
    }
    emb.place(&acc, 0, site + 1)
}

/// MPO string operator `ψ±_{site,i}`. The annihilator is a `T` string ending
/// in `y⁻`, the creator an `S` string ending in `y⁺`.
pub fn mpo_jwt(spec: &SpinChainSpec, ops: &LocalOps, site: usize, i: usize, create: bool) -> Result<Csr> {
    if site >= spec.sites || i >= ops.m() {
        return Err(Error::Index(format!("(site {site}, internal {i}) outside {} sites x {}", spec.sites, ops.m())));
    }
    let emb = Embedder { local_dim: ops.dim(), sites: spec.sites };
    let (string, end) = if create { (&ops.s, &ops.y_plus) } else { (&ops.t, &ops.y_minus) };
    let string: Vec<Csr> = string.iter().map(to_csr).collect();
    let end: Vec<Csr> = end.iter().map(to_csr).collect();
    Ok(mpo_string(&string, &end, ops.m(), site, i, &emb))
}

/// Spin-model Hamiltonian assembled bond by bond from the local operators.
pub fn build_hamiltonian_spin(spec: &SpinChainSpec, ops: &LocalOps) -> Result<Csr> {
    let d = ops.dim();
    let dim = checked_pow(d, spec.sites)?;
    let emb = Embedder { local_dim: d, sites: spec.sites };
    let m = ops.m();
    let mut bond = CMat::zeros(d * d, d * d);
    for i in 0..m {
        bond += ops.x_plus[i].kronecker(&ops.y_minus[i]) + ops.x_minus[i].kronecker(&ops.y_plus[i]);
    }
    let bond = to_csr(&bond);
    let n_local = to_csr(&ops.n_local);
    let mut h = Csr::zeros(dim, dim);
    for a in 0..spec.sites {
        if a + 1 < spec.sites && spec.j[a] != 0.0 {
            h = &h + &(&emb.place(&bond, a, 2) * C64::new(spec.j[a], 0.0));
        }
        if spec.mu[a] != 0.0 {
            h = &h - &(&emb.place(&n_local, a, 1) * C64::new(spec.mu[a], 0.0));
        }
    }
    Ok(h)
}

/// All global operators of the chain.
pub fn build_chain(spec: &SpinChainSpec, ops: &LocalOps) -> Result<ChainOperators> {
    let m = ops.m();
    let d = ops.dim();
    let dim = checked_pow(d, spec.sites)?;
    let emb = Embedder { local_dim: d, sites: spec.sites };
    let h_spin = build_hamiltonian_spin(spec, ops)?;

    let s: Vec<Csr> = ops.s.iter().map(to_csr).collect();
    let t: Vec<Csr> = ops.t.iter().map(to_csr).collect();
    let yp: Vec<Csr> = ops.y_plus.iter().map(to_csr).collect();
    let ym: Vec<Csr> = ops.y_minus.iter().map(to_csr).collect();
    let mut psi_plus = Vec::with_capacity(spec.sites * m);
    let mut psi_minus = Vec::with_capacity(spec.sites * m);
    for a in 0..spec.sites {
        for i in 0..m {
            psi_plus.push(mpo_string(&s, &yp, m, a, i, &emb));
            psi_minus.push(mpo_string(&t, &ym, m, a, i, &emb));
        }
    }

    let number = |a: usize| -> Csr {
        let mut acc = Csr::zeros(dim, dim);
        for i in 0..m {
            acc = &acc + &(&psi_plus[a * m + i] * &psi_minus[a * m + i]);
        }
        acc
    };
    let mut h_para = Csr::zeros(dim, dim);
    for a in 0..spec.sites {
        if a + 1 < spec.sites && spec.j[a] != 0.0 {
            let mut hop = Csr::zeros(dim, dim);
            for i in 0..m {
                hop = &hop + &(&psi_plus[a * m + i] * &psi_minus[(a + 1) * m + i]);
                hop = &hop + &(&psi_plus[(a + 1) * m + i] * &psi_minus[a * m + i]);
            }
            h_para = &h_para + &(&hop * C64::new(spec.j[a], 0.0));
        }
        if spec.mu[a] != 0.0 {
            h_para = &h_para - &(&number(a) * C64::new(spec.mu[a], 0.0));
        }
    }

    let n_local = to_csr(&ops.n_local);
    let mut n_total = Csr::zeros(dim, dim);
    for a in 0..spec.sites {
        n_total = &n_total + &emb.place(&n_local, a, 1);
    }
    Ok(ChainOperators { spec: spec.clone(), dim, m, h_spin, h_para, psi_plus, psi_minus, n_total })
}

#[derive(Clone, Debug, Serialize)]
pub struct MpoCrReport {
    pub annihilate_create: f64,
    pub create_create: f64,
    pub annihilate_annihilate: f64,
}

impl MpoCrReport {
    pub fn max_residual(&self) -> f64 {
        self.annihilate_create.max(self.create_create).max(self.annihilate_annihilate)
    }
}

/// Exhaustive check of the commutation relations among the string operators.
pub fn verify_mpo_crs(chain: &ChainOperators, r: &RMatrix) -> Result<MpoCrReport> {
    check_dense(chain.dim)?;
    let plus: Vec<CMat> = chain.psi_plus.iter().map(dense).collect();
    let minus: Vec<CMat> = chain.psi_minus.iter().map(dense).collect();
    let all: Vec<usize> = (0..chain.dim).collect();
    let (l1, l2, l3) = cr_residuals(r, chain.spec.sites, &plus, &minus, &all, &all);
    Ok(MpoCrReport { annihilate_create: l1, create_create: l2, annihilate_annihilate: l3 })
}

#[derive(Clone, Debug, Serialize)]
pub struct ChargeReport {
    /// `[H_spin, n̂]`
    pub hamiltonian: f64,
    /// `[n̂, ψ±] ∓ ψ±`
    pub ladder: f64,
}

pub fn charge_conservation(chain: &ChainOperators) -> ChargeReport {
    let n = &chain.n_total;
    let comm = |a: &Csr, b: &Csr| -> Csr { &(a * b) - &(b * a) };
    let hamiltonian = csr_max_abs(&comm(&chain.h_spin, n));
    let mut ladder: f64 = 0.0;
    for p in &chain.psi_plus {
        ladder = ladder.max(csr_max_abs_diff(&comm(n, p), p));
    }
    for q in &chain.psi_minus {
        ladder = ladder.max(csr_max_abs(&(&comm(n, q) + q)));
    }
    ChargeReport { hamiltonian, ladder }
}

fn check_dense(dim: usize) -> Result<()> {
    let budget = budget_dim();
    if dim > budget {
        return Err(Error::Resource { dim, budget });
    }
    Ok(())
}

/// Full spectrum, sorted by real part.
pub fn exact_diagonalize(h: &Csr) -> Result<Vec<C64>> {
    check_dense(h.nrows())?;
    eigenvalues(&dense(h))
}

/// `{Σ_k ε_k n_k}` with multiplicity `Π_k d_{n_k}`, ascending.
pub fn predicted_spectrum(epsilons: &[f64], degeneracies: &[usize]) -> Vec<f64> {
    let mut levels = vec![(0.0f64, 1usize)];
    for &e in epsilons {
        let mut next = Vec::with_capacity(levels.len() * degeneracies.len());
        for &(energy, mult) in &levels {
            for (n, &d) in degeneracies.iter().enumerate() {
                if d > 0 {
                    next.push((energy + e * n as f64, mult * d));
                }
            }
        }
        levels = next;
    }
    let mut out: Vec<f64> = levels.into_iter().flat_map(|(e, mult)| std::iter::repeat(e).take(mult)).collect();
    out.sort_by(f64::total_cmp);
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub multiset_match: bool,
    pub max_eigenvalue_gap: f64,
    pub tolerance: f64,
    pub max_imag: f64,
    pub spectral_radius: f64,
    pub epsilons: Vec<f64>,
    pub predicted: Vec<f64>,
    pub computed: Vec<C64>,
}

/// Relative tolerance of the multiset comparison.
pub const SPECTRUM_TOL: f64 = 1e-8;

pub fn spectrum_crosscheck(chain: &ChainOperators, ops: &LocalOps) -> Result<SpectrumReport> {
    let sol = diagonalize(&chain.spec.hopping_matrix())?;
    let predicted = predicted_spectrum(&sol.epsilons, &ops.degeneracies());
    let computed = exact_diagonalize(&chain.h_spin)?;
    let spectral_radius = computed.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let max_imag = computed.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
    let tolerance = SPECTRUM_TOL * spectral_radius.max(1.0);
    let max_eigenvalue_gap = if predicted.len() == computed.len() {
        predicted.iter().zip(&computed).map(|(p, c)| (c - C64::new(*p, 0.0)).norm()).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    Ok(SpectrumReport {
        multiset_match: max_eigenvalue_gap < tolerance,
        max_eigenvalue_gap,
        tolerance,
        max_imag,
        spectral_radius,
        epsilons: sol.epsilons,
        predicted,
        computed,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ThermalReport {
    pub beta: f64,
    pub epsilons: Vec<f64>,
    /// `⟨ñ_k⟩` from the single-mode statistics.
    pub predicted: Vec<f64>,
    /// `⟨ñ_k⟩` from the thermal trace over the chain.
    pub traced: Vec<f64>,
    /// `|predicted − traced| / |traced|`
    pub occupation_errors: Vec<f64>,
}

impl ThermalReport {
    pub fn max_error(&self) -> f64 {
        self.occupation_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Eigenmode occupations: single-mode formula against `Tr[ñ_k e^{−βH}] / Z`,
/// with `ñ_k = Σ_i ψ̃⁺_{k,i} ψ̃⁻_{k,i}`, `ψ̃⁺_k = Σ_a U*_{ka} ψ⁺_a`, `ψ̃⁻_k = Σ_a U_{ka} ψ⁻_a`.
pub fn thermal_crosscheck(chain: &ChainOperators, ops: &LocalOps, beta: f64) -> Result<ThermalReport> {
    check_dense(chain.dim)?;
    let sol = diagonalize(&chain.spec.hopping_matrix())?;
    let stats = Statistics::new(ClosedForm::polynomial(ops.degeneracies().iter().map(|&d| d as i64).collect()));
    let rho = (dense(&chain.h_spin) * C64::new(-beta, 0.0)).exp();
    let z = rho.trace();
    let (n, m) = (chain.spec.sites, chain.m);
    let mut predicted = Vec::with_capacity(n);
    let mut traced = Vec::with_capacity(n);
    for k in 0..n {
        let mut nk = CMat::zeros(chain.dim, chain.dim);
        for i in 0..m {
            let mut up = CMat::zeros(chain.dim, chain.dim);
            let mut down = CMat::zeros(chain.dim, chain.dim);
            for a in 0..n {
                up += dense(chain.psi_plus(a, i)) * sol.u[(k, a)].conj();
                down += dense(chain.psi_minus(a, i)) * sol.u[(k, a)];
            }
            nk += up * down;
        }
        traced.push(((nk * &rho).trace() / z).re);
        predicted.push(stats.occupation((-beta * sol.epsilons[k]).exp())?);
    }
    let occupation_errors = predicted.iter().zip(&traced).map(|(p, t)| (p - t).abs() / t.abs()).collect();
    Ok(ThermalReport { beta, epsilons: sol.epsilons, predicted, traced, occupation_errors })
}

#[derive(Clone, Debug, Serialize)]
pub struct PtReport {
    pub seed: u64,
    pub draws: usize,
    /// Largest `max|Im λ| / spectral radius` over the draws.
    pub max_relative_imag: f64,
    pub specs: Vec<SpinChainSpec>,
}

/// Spectra of chains with random real couplings.
pub fn pt_reality(ops: &LocalOps, sites: usize, draws: usize, seed: u64) -> Result<PtReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_relative_imag: f64 = 0.0;
    let mut specs = Vec::with_capacity(draws);
    for _ in 0..draws {
        let spec = SpinChainSpec::random(sites, &mut rng)?;
        let h = build_hamiltonian_spin(&spec, ops)?;
        let spectrum = exact_diagonalize(&h)?;
        let radius = spectrum.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        let imag = spectrum.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
        if radius > 0.0 {
            max_relative_imag = max_relative_imag.max(imag / radius);
        }
        specs.push(spec);
    }
    Ok(PtReport { seed, draws, max_relative_imag, specs })
}

/// Operators placed on distinct sites must commute; returns the largest commutator.
pub fn cross_site_commutator(ops: &LocalOps, sites: usize) -> Result<f64> {
    let d = ops.dim();
    checked_pow(d, sites)?;
    let emb = Embedder { local_dim: d, sites };
    let all: Vec<Csr> = ops.x_plus.iter().chain(&ops.x_minus).chain(&ops.y_plus).chain(&ops.y_minus).map(to_csr).collect();
    let mut worst: f64 = 0.0;
    for a in 0..sites {
        for b in (a + 1)..sites {
            for p in &all {
                for q in &all {
                    let pa = emb.place(p, a, 1);
                    let qb = emb.place(q, b, 1);
                    worst = worst.max(csr_max_abs_diff(&(&pa * &qb), &(&qb * &pa)));
                }
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use crate::rmatrix::{builtin, Builtin};

    #[test]
    fn ex3_local_matrix_elements() {
        let r = builtin(Builtin::Ex3, 2, None).unwrap();
        let ops = build_local_ops(&r).unwrap();
        assert_eq!(ops.dim(), 3);
        for i in 0..2 {
            assert!(max_abs_diff(&ops.x_plus[i], &ops.y_plus[i]) < 1e-14);
            assert!(max_abs_diff(&ops.x_minus[i], &ops.y_minus[i]) < 1e-14);
        }
        // S^{ij}|0⟩ = δ_ij |0⟩
        assert!((ops.s(0, 0)[(0, 0)] - ONE).norm() < 1e-14);
        assert!(ops.s(0, 1)[(0, 0)].norm() < 1e-14);
    }

    #[test]
    fn boson_has_no_finite_local_space() {
        let r = builtin(Builtin::Boson, 1, None).unwrap();
        assert!(matches!(build_local_ops(&r), Err(Error::Unsupported(_))));
    }

    #[test]
    fn predicted_spectrum_counts() {
        let p = predicted_spectrum(&[-1.0, 1.0], &[1, 2]);
        assert_eq!(p, vec![-1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn spec_validation() {
        assert!(SpinChainSpec::new(3, vec![1.0, 1.0, 0.5], vec![0.0; 3]).is_err());
        assert_eq!(SpinChainSpec::new(3, vec![1.0, 1.0], vec![0.0; 3]).unwrap().j, vec![1.0, 1.0, 0.0]);
        assert!(SpinChainSpec::new(2, vec![1.0], vec![0.0]).is_err());
    }
}
