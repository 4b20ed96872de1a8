//! Brute-force oracles shared by integration tests.
#![allow(dead_code)]

use parastat::bilinears::{build_bilinears, BilinearSet};
use parastat::fockspace::{build_multimode, FockOperators};
use parastat::linalg::{CMat, C64};
use parastat::rmatrix::{builtin, Builtin};

pub fn fock(kind: Builtin, m: usize, modes: usize) -> (FockOperators, BilinearSet) {
    let r = builtin(kind, m, None).unwrap();
    let ops = FockOperators::new(build_multimode(&r, modes, None).unwrap());
    assert!(!ops.basis.truncated());
    let bil = build_bilinears(&ops);
    (ops, bil)
}

pub fn hamiltonian(bil: &BilinearSet, h: &CMat) -> CMat {
    let n = bil.modes();
    let mut out = CMat::zeros(bil.dim(), bil.dim());
    for a in 0..n {
        for b in 0..n {
            out += bil.e(a, b) * h[(a, b)];
        }
    }
    out
}

/// Gibbs weight `e^{−βH}` and its trace.
pub struct Thermal {
    pub rho: CMat,
    pub z: C64,
}

impl Thermal {
    pub fn new(hmat: &CMat, beta: f64) -> Self {
        let rho = (hmat * C64::new(-beta, 0.0)).exp();
        let z = rho.trace();
        Thermal { rho, z }
    }

    pub fn expect(&self, op: &CMat) -> C64 {
        (op * &self.rho).trace() / self.z
    }
}

/// `ẽ_kp = Σ_ab U*_ka U_pb ê_ab`.
pub fn mode_bilinear(bil: &BilinearSet, u: &CMat, k: usize, p: usize) -> CMat {
    let n = bil.modes();
    let mut out = CMat::zeros(bil.dim(), bil.dim());
    for a in 0..n {
        for b in 0..n {
            out += bil.e(a, b) * (u[(k, a)].conj() * u[(p, b)]);
        }
    }
    out
}

/// `n̂_a(t) = e^{iHt} n̂_a e^{−iHt}`.
pub fn heisenberg(hmat: &CMat, op: &CMat, t: f64) -> CMat {
    let fwd = (hmat * C64::new(0.0, t)).exp();
    let back = (hmat * C64::new(0.0, -t)).exp();
    fwd * op * back
}

/// `⟨n̂⟩` for one mode at `βε` by tracing over the explicit single-mode space.
pub fn single_mode_occupation(kind: Builtin, m: usize, beta_eps: f64) -> f64 {
    let (_, bil) = fock(kind, m, 1);
    let n = bil.number(0).clone();
    let th = Thermal::new(&n, beta_eps);
    th.expect(&n).re
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// `max |A − B| / max |B|`.
pub fn mat_rel_err(a: &CMat, b: &CMat) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, z| m.max(z.norm())).max(f64::MIN_POSITIVE);
    (a - b).iter().fold(0.0f64, |m, z| m.max(z.norm())) / scale
}
