//! Free paraparticles: single-mode Hilbert series, thermodynamics of
//! `Ĥ = Σ h_ab ê_ab`, and its static and unequal-time correlators.

use std::fmt;
use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fockspace::{build_multimode, exclusion_statistics};
use crate::linalg::{eigenvalues, hermitian_deviation, hermitian_eigh, max_abs, CMat, C64};
use crate::rmatrix::{Builtin, RMatrix};

/// Integer polynomial, lowest degree first.
pub type IntPoly = Vec<i64>;

fn trim(mut p: IntPoly) -> IntPoly {
    while p.len() > 1 && p.last() == Some(&0) {
        p.pop();
    }
    p
}

fn poly_mul(a: &[i64], b: &[i64]) -> IntPoly {
    let mut out = vec![0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn binomial_row(m: usize) -> IntPoly {
    let mut row = vec![1i64];
    for _ in 0..m {
        row = poly_mul(&row, &[1, 1]);
    }
    row
}

/// `z(x) = numerator(x) / denominator(x)` with `denominator(0) = 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClosedForm {
    pub numerator: IntPoly,
    pub denominator: IntPoly,
}

impl ClosedForm {
    pub fn polynomial(p: IntPoly) -> Self {
        ClosedForm { numerator: trim(p), denominator: vec![1] }
    }

    /// Closed form attached to a built-in or a negated built-in.
    pub fn for_rmatrix(r: &RMatrix) -> Option<Self> {
        let origin = r.origin()?;
        let m = r.m();
        let base = match origin.kind {
            Builtin::Ex1 | Builtin::Ex2 | Builtin::Fermion => Self::polynomial(binomial_row(m)),
            Builtin::Ex3 => Self::polynomial(vec![1, m as i64]),
            Builtin::Ex4 => Self::polynomial(vec![1, m as i64, 1]),
            Builtin::Boson => {
                let mut den = vec![1i64];
                for _ in 0..m {
                    den = poly_mul(&den, &[1, -1]);
                }
                ClosedForm { numerator: vec![1], denominator: den }
            }
        };
        Some(if origin.negated { base.negated() } else { base })
    }

    /// `1 / z(−x)`, the series of the negated R-matrix.
    pub fn negated(&self) -> Self {
        let flip = |p: &IntPoly| -> IntPoly {
            p.iter().enumerate().map(|(k, &c)| if k % 2 == 1 { -c } else { c }).collect()
        };
        ClosedForm { numerator: flip(&self.denominator), denominator: flip(&self.numerator) }
    }

    pub fn is_polynomial(&self) -> bool {
        self.denominator.len() == 1
    }

    pub fn degree(&self) -> Option<usize> {
        self.is_polynomial().then(|| self.numerator.len() - 1)
    }

    /// Taylor coefficients through `x^order`.
    pub fn series(&self, order: usize) -> Vec<i64> {
        let q0 = self.denominator[0];
        let mut out = vec![0i64; order + 1];
        for n in 0..=order {
            let mut acc = self.numerator.get(n).copied().unwrap_or(0);
            for k in 1..self.denominator.len().min(n + 1) {
                acc -= self.denominator[k] * out[n - k];
            }
            out[n] = acc / q0;
        }
        out
    }

    /// Radius of convergence of the Taylor series (infinite for polynomials).
    pub fn radius(&self) -> f64 {
        let den = trim(self.denominator.clone());
        let deg = den.len() - 1;
        if deg == 0 {
            return f64::INFINITY;
        }
        let lead = den[deg] as f64;
        let companion = CMat::from_fn(deg, deg, |i, j| {
            if i == 0 {
                C64::new(-den[deg - 1 - j] as f64 / lead, 0.0)
            } else if i == j + 1 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        eigenvalues(&companion)
            .map(|roots| roots.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min))
            .unwrap_or(0.0)
    }

    fn tag_poly(p: &[i64]) -> String {
        let mut out = String::new();
        for (k, &c) in p.iter().enumerate().filter(|(_, &c)| c != 0) {
            let sign = if c < 0 { "-" } else { "+" };
            if out.is_empty() {
                if c < 0 {
                    out.push('-');
                }
            } else {
                out.push_str(&format!(" {sign} "));
            }
            let a = c.unsigned_abs();
            match (k, a) {
                (0, _) => out.push_str(&a.to_string()),
                (_, 1) => {}
                _ => out.push_str(&a.to_string()),
            }
            match k {
                0 => {}
                1 => out.push('x'),
                _ => out.push_str(&format!("x^{k}")),
            }
        }
        if out.is_empty() {
            out.push('0');
        }
        out
    }
}

impl fmt::Display for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_polynomial() {
            write!(f, "{}", Self::tag_poly(&self.numerator))
        } else if self.numerator == [1] {
            write!(f, "1/({})", Self::tag_poly(&self.denominator))
        } else {
            write!(f, "({})/({})", Self::tag_poly(&self.numerator), Self::tag_poly(&self.denominator))
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HilbertSeries {
    pub coefficients: Vec<u64>,
    pub closed_form: Option<ClosedForm>,
    /// Whether the closed form reproduces every computed coefficient.
    pub closed_form_matches: Option<bool>,
}

pub fn hilbert_series(r: &RMatrix, order: usize) -> Result<HilbertSeries> {
    let coefficients: Vec<u64> = exclusion_statistics(r, order)?.into_iter().map(|d| d as u64).collect();
    let closed_form = ClosedForm::for_rmatrix(r);
    let closed_form_matches = closed_form.as_ref().map(|cf| {
        cf.series(order).iter().zip(&coefficients).all(|(&a, &b)| a >= 0 && a as u64 == b)
    });
    Ok(HilbertSeries { coefficients, closed_form, closed_form_matches })
}

#[derive(Clone, Debug, Serialize)]
pub struct ReciprocityReport {
    pub order: usize,
    pub series: Vec<u64>,
    pub negated_series: Vec<u64>,
    /// Coefficients of `z_R(−x) z_{−R}(x) − 1` through `x^order`.
    pub residuals: Vec<i128>,
    pub max_coeff_error: u128,
}

/// Multiply the computed series of `z_R(−x)` and `z_{−R}(x)` and compare with 1.
pub fn series_reciprocity_check(r: &RMatrix, order: usize) -> Result<ReciprocityReport> {
    let series = hilbert_series(r, order)?.coefficients;
    let negated_series = hilbert_series(&crate::rmatrix::negate(r), order)?.coefficients;
    let mut residuals = vec![0i128; order + 1];
    for (i, &a) in series.iter().enumerate() {
        let a = if i % 2 == 1 { -(a as i128) } else { a as i128 };
        for (j, &b) in negated_series.iter().enumerate().take(order + 1 - i) {
            residuals[i + j] += a * b as i128;
        }
    }
    residuals[0] -= 1;
    let max_coeff_error = residuals.iter().map(|r| r.unsigned_abs()).max().unwrap_or(0);
    Ok(ReciprocityReport { order, series, negated_series, residuals, max_coeff_error })
}

/// Single-mode statistics in a form suitable for evaluation at an activity
/// `x = e^{−βε}`.
#[derive(Clone, Debug, Serialize)]
pub struct Statistics {
    pub form: ClosedForm,
    pub radius: f64,
}

impl Statistics {
    pub fn new(form: ClosedForm) -> Self {
        let radius = form.radius();
        Statistics { form, radius }
    }

    /// Closed form for built-ins; otherwise the finite tower is computed and
    /// must terminate within the dimension budget.
    pub fn from_rmatrix(r: &RMatrix) -> Result<Self> {
        if let Some(form) = ClosedForm::for_rmatrix(r) {
            return Ok(Self::new(form));
        }
        let basis = build_multimode(r, 1, None)?;
        Ok(Self::new(ClosedForm::polynomial(basis.degeneracies().into_iter().map(|d| d as i64).collect())))
    }

    pub fn fermion() -> Self {
        Self::new(ClosedForm::polynomial(vec![1, 1]))
    }

    pub fn boson() -> Self {
        Self::new(ClosedForm { numerator: vec![1], denominator: vec![1, -1] })
    }

    fn check(&self, x: f64) -> Result<()> {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::Domain(format!("activity {x} is not a finite nonnegative number")));
        }
        if x >= self.radius {
            return Err(Error::Domain(format!(
                "activity {x} outside the radius of convergence {} of z = {}",
                self.radius, self.form
            )));
        }
        Ok(())
    }

    pub fn z(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(eval(&self.form.numerator, x) / eval(&self.form.denominator, x))
    }

    /// `(x∂_x)^l z / z`.
    pub fn moment(&self, x: f64, l: usize) -> Result<f64> {
        self.check(x)?;
        let p: Vec<f64> = self.form.numerator.iter().map(|&c| c as f64).collect();
        let q: Vec<f64> = self.form.denominator.iter().map(|&c| c as f64).collect();
        let dq = derivative(&q);
        // (x∂)^l (P/Q) = N_l / Q^{l+1},  N_{l+1} = x (N_l' Q − (l+1) N_l Q')
        let mut num = p.clone();
        for k in 0..l {
            let a = mul(&derivative(&num), &q);
            let b = mul(&num, &dq);
            let mut next = vec![0.0; a.len().max(b.len()) + 1];
            for (i, v) in a.iter().enumerate() {
                next[i + 1] += v;
            }
            for (i, v) in b.iter().enumerate() {
                next[i + 1] -= (k + 1) as f64 * v;
            }
            num = next;
        }
        let qx = evalf(&q, x);
        Ok(evalf(&num, x) / (evalf(&p, x) * qx.powi(l as i32)))
    }

    pub fn occupation(&self, x: f64) -> Result<f64> {
        self.moment(x, 1)
    }
}

fn eval(p: &[i64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * x + c as f64)
}

fn evalf(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn derivative(p: &[f64]) -> Vec<f64> {
    if p.len() <= 1 {
        return vec![0.0];
    }
    p.iter().enumerate().skip(1).map(|(k, &c)| k as f64 * c).collect()
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct FreeGasSpec {
    pub h: CMat,
    pub beta: f64,
}

/// `h = U† diag(ε) U`; row k of `U` holds the components `U_{ka}` of eigenmode k.
#[derive(Clone, Debug)]
pub struct ModeSolution {
    pub epsilons: Vec<f64>,
    pub u: CMat,
}

impl ModeSolution {
    pub fn modes(&self) -> usize {
        self.epsilons.len()
    }
}

pub fn diagonalize(h: &CMat) -> Result<ModeSolution> {
    if !h.is_square() {
        return Err(Error::Shape(format!("h is {}x{}", h.nrows(), h.ncols())));
    }
    let dev = hermitian_deviation(h);
    if dev > HERMITIAN_TOL * max_abs(h).max(1.0) {
        return Err(Error::NotHermitian(dev));
    }
    let herm = (h + h.adjoint()).scale(0.5);
    let (epsilons, v) = hermitian_eigh(&herm);
    Ok(ModeSolution { epsilons, u: v.adjoint() })
}

/// Tridiagonal chain `h` with diagonal `−μ_a` and hopping `J_a` between a and a+1.
pub fn chain_h(j: &[f64], mu: &[f64]) -> CMat {
    let n = mu.len();
    CMat::from_fn(n, n, |a, b| {
        if a == b {
            C64::new(-mu[a], 0.0)
        } else if b == a + 1 {
            C64::new(j[a], 0.0)
        } else if a == b + 1 {
            C64::new(j[b], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

fn activities(sol: &ModeSolution, beta: f64) -> Vec<f64> {
    sol.epsilons.iter().map(|e| (-beta * e).exp()).collect()
}

pub fn partition_function(stats: &Statistics, sol: &ModeSolution, beta: f64) -> Result<f64> {
    activities(sol, beta).into_iter().map(|x| stats.z(x)).product()
}

pub fn free_energy(stats: &Statistics, sol: &ModeSolution, beta: f64) -> Result<f64> {
    let log_z: f64 = activities(sol, beta).into_iter().map(|x| stats.z(x).map(f64::ln)).sum::<Result<f64>>()?;
    Ok(-log_z / beta)
}

pub fn mean_occupation_moment(stats: &Statistics, x: f64, l: usize) -> Result<f64> {
    stats.moment(x, l)
}

/// Relative gap below which two mode energies are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct Correlators {
    /// `⟨ñ_k⟩`
    pub occupations: Vec<f64>,
    /// `⟨ẽ_kp⟩`
    pub e_mode: CMat,
    /// `⟨ẽ_kp ẽ_pk⟩`
    pub ee_mode: CMat,
    /// `⟨ê_ab⟩`
    pub e_position: CMat,
    /// Pairs `(k, p)`, k < p, routed to the degenerate branch.
    pub degenerate_pairs: Vec<(usize, usize)>,
}

pub fn static_correlators(stats: &Statistics, sol: &ModeSolution, beta: f64) -> Result<Correlators> {
    let n = sol.modes();
    let xs = activities(sol, beta);
    let occ: Vec<f64> = xs.iter().map(|&x| stats.moment(x, 1)).collect::<Result<_>>()?;
    let second: Vec<f64> = xs.iter().map(|&x| stats.moment(x, 2)).collect::<Result<_>>()?;
    let scale = sol.epsilons.iter().fold(0.0f64, |a, e| a.max(e.abs()));

    let e_mode = CMat::from_diagonal(&DVector::from_iterator(n, occ.iter().map(|&v| C64::new(v, 0.0))));
    let mut ee_mode = CMat::zeros(n, n);
    let mut degenerate_pairs = Vec::new();
    for k in 0..n {
        ee_mode[(k, k)] = C64::new(second[k], 0.0);
        for p in 0..n {
            if p == k {
                continue;
            }
            let gap = sol.epsilons[k] - sol.epsilons[p];
            let degenerate = gap.abs() <= DEGENERACY_TOL * scale || (beta * gap).abs() <= DEGENERACY_TOL;
            let value = if degenerate {
                if k < p {
                    degenerate_pairs.push((k, p));
                }
                // limit of the ratio: the variance, split so that the
                // commutator sum rule holds exactly
                let var = 0.5 * (second[k] - occ[k] * occ[k] + second[p] - occ[p] * occ[p]);
                var + 0.5 * (occ[k] - occ[p])
            } else {
                (occ[k] - occ[p]) / (1.0 - (beta * gap).exp())
            };
            ee_mode[(k, p)] = C64::new(value, 0.0);
        }
    }
    let u = &sol.u;
    let e_position = CMat::from_fn(n, n, |a, b| {
        (0..n).map(|k| u[(k, a)] * u[(k, b)].conj() * occ[k]).sum()
    });
    Ok(Correlators { occupations: occ, e_mode, ee_mode, e_position, degenerate_pairs })
}

/// `⟨[n̂_a(t), n̂_b(0)]⟩_β` with ħ = 1.
pub fn unequal_time_commutator(
    stats: &Statistics,
    sol: &ModeSolution,
    beta: f64,
    a: usize,
    b: usize,
    t: f64,
) -> Result<C64> {
    let n = sol.modes();
    if a >= n || b >= n {
        return Err(Error::Index(format!("mode ({a}, {b}) out of range for {n} modes")));
    }
    let occ: Vec<f64> =
        activities(sol, beta).into_iter().map(|x| stats.moment(x, 1)).collect::<Result<_>>()?;
    let u = &sol.u;
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..n {
        for p in 0..n {
            let w = u[(k, a)] * u[(p, a)].conj() * u[(k, b)].conj() * u[(p, b)];
            let phase = C64::new(0.0, t * (sol.epsilons[k] - sol.epsilons[p])).exp();
            acc += w * (occ[k] - occ[p]) * phase;
        }
    }
    Ok(acc)
}

#[derive(Clone, Debug, Serialize)]
pub struct OccupationRow {
    pub beta_eps: f64,
    /// `None` where the series diverges.
    pub occupation: Option<f64>,
    pub fermion: f64,
    pub boson: Option<f64>,
}

pub fn occupation_curve(stats: &Statistics, grid: &[f64]) -> Result<Vec<OccupationRow>> {
    let fermion = Statistics::fermion();
    let boson = Statistics::boson();
    grid.iter()
        .map(|&be| {
            if !be.is_finite() {
                return Err(Error::Invalid(format!("grid value {be} is not finite")));
            }
            let x = (-be).exp();
            Ok(OccupationRow {
                beta_eps: be,
                occupation: stats.occupation(x).ok(),
                fermion: fermion.occupation(x)?,
                boson: boson.occupation(x).ok(),
            })
        })
        .collect()
}

pub const CSV_HEADER: [&str; 4] = ["beta_eps", "occupation_R", "occupation_fermion", "occupation_boson"];

/// 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Divergent entries are written as `nan`.
pub fn write_occupation_csv<W: Write>(rows: &[OccupationRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    let opt = |v: Option<f64>| v.map(format_f64).unwrap_or_else(|| "nan".to_string());
    for r in rows {
        w.write_record([format_f64(r.beta_eps), opt(r.occupation), format_f64(r.fermion), opt(r.boson)])?;
    }
    w.flush()?;
    Ok(())
}
